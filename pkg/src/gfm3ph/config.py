"""YAML scenario files: load, dump and hash ScenarioConfig objects."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, fields
from pathlib import Path

import yaml

from .network import ConfigurationError, LoadParams, NetworkParams, SwitchEvent
from .scenarios import ControlConfig, ScenarioConfig

DEFAULT_CONFIG = Path(__file__).with_name("data") / "default.yaml"


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")
    return cls(**data)


def _number(x, where):
    # YAML reads "1e5" as a string; accept numeric strings but not booleans
    if isinstance(x, bool):
        raise ConfigurationError(f"{where}: expected a number, got {x!r}")
    try:
        return float(x)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where}: expected a number, got {x!r}") from None


def _coerce_numbers(obj, where: str):
    for f in fields(obj):
        val = getattr(obj, f.name)
        if f.type in ("float", "float | None") and val is not None:
            setattr(obj, f.name, _number(val, f"{where}.{f.name}"))
    return obj


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config: expected a mapping at top level")
    data = dict(data)
    net = dict(data.pop("network", None) or {})
    load = _coerce_numbers(_build(LoadParams, net.pop("load", None), "network.load"), "network.load")
    network = _coerce_numbers(_build(NetworkParams, net, "network"), "network")
    network.load = load
    control = _coerce_numbers(_build(ControlConfig, data.pop("control", None), "control"), "control")
    for name in ("Pstar", "Qstar", "Vstar"):
        setattr(control, name, [_number(v, f"control.{name}") for v in getattr(control, name)])
    events = []
    for k, ev in enumerate(data.pop("events", None) or []):
        ev = _build(SwitchEvent, ev, f"events[{k}]")
        events.append(SwitchEvent(_number(ev.time, f"events[{k}].time"), ev.kind, ev.target, ev.phase))
    data["network"], data["control"], data["events"] = network, control, events
    cfg = _build(ScenarioConfig, data, "config")
    cfg.duration = _number(cfg.duration, "duration")
    cfg.plant_dt = _number(cfg.plant_dt, "plant_dt")
    cfg.seed = int(cfg.seed)
    return cfg


def config_to_dict(config: ScenarioConfig) -> dict:
    d = asdict(config)
    d["events"] = [
        {k: v for k, v in asdict(e).items() if v is not None} for e in config.events
    ]
    return d


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False, default_flow_style=None)


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file. Any problem raises ConfigurationError."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path}: not valid YAML ({e})") from e
    try:
        cfg = config_from_dict(data or {})
    except TypeError as e:
        raise ConfigurationError(f"{path}: {e}") from e
    cfg.validate()
    return cfg


def config_hash(config: ScenarioConfig) -> str:
    canon = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()
