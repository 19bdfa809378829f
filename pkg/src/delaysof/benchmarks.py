"""The networked-control benchmark plant of Hu et al. (2007) and reference gains.

The continuous-time model is discretized with a zero-order hold at 0.5 s.
Published write-ups of this benchmark print the discrete state matrix with a
dropped digit in entry (2,1) (0.04231 instead of 0.4231); the exact
discretization below is what reproduces the published delay bounds and gains.
"""

from __future__ import annotations

import numpy as np

from .model import PlantModel, discretize_zoh

__all__ = [
    "HU2007_AC",
    "HU2007_BC",
    "HU2007_TS",
    "HU2007_GAIN",
    "C_SOF",
    "REFERENCE_SOF_GAIN",
    "REFERENCE_SSF_GAIN",
    "hu2007_discrete",
    "hu2007_plant",
]

HU2007_AC = np.array([[-0.80, -0.01], [1.00, 0.10]])
HU2007_BC = np.array([[0.4], [0.1]])
HU2007_TS = 0.5

# State feedback gain from Hu et al. (2007); certifiable here for delays 1..3.
HU2007_GAIN = np.array([[-1.2625, -1.2679]])

# Output map measuring the second state only.
C_SOF = np.array([[0.0, 1.0]])

# Reference gains for this benchmark: the output-feedback gain certifies
# delays 1..19, the state-feedback gain was designed for delays 1..21.
REFERENCE_SOF_GAIN = np.array([[-0.1498]])
REFERENCE_SSF_GAIN = np.array([[-0.2260, -0.1656]])


def hu2007_discrete() -> tuple[np.ndarray, np.ndarray]:
    """Discrete (A, B) of the benchmark at the 0.5 s sampling time."""
    return discretize_zoh(HU2007_AC, HU2007_BC, HU2007_TS)


def hu2007_plant(C: np.ndarray | None = None) -> PlantModel:
    """Benchmark plant with the given output map (full state measurement by default)."""
    A, B = hu2007_discrete()
    if C is None:
        C = np.eye(A.shape[0])
    return PlantModel(A=A, B=B, C=C)
