"""Per-phase grid-forming droop control of a three-phase inverter, with an EMT test network."""
__version__ = "0.1.0"
