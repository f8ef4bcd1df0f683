"""Phase labels and the balanced (abc, positive-sequence) angle offsets."""
import numpy as np

PHASES = ("a", "b", "c")
PHASE_OFFSETS = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])
