"""Plant, delay-interval, and gain types plus small numeric helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = [
    "PlantModel",
    "DelayBounds",
    "FeedbackGain",
    "gamma",
    "discretize_zoh",
    "spectral_radius",
]


def _as_matrix(M, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(M, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time LTI plant x(k+1) = A x(k) + B u(k - d(k)), y(k) = C x(k)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class DelayBounds:
    """Admissible delay interval 1 <= d_m <= d(k) <= d_M, in samples."""

    d_m: int
    d_M: int

    def __post_init__(self):
        if not (isinstance(self.d_m, (int, np.integer)) and isinstance(self.d_M, (int, np.integer))):
            raise TypeError("delay bounds must be integers")
        if not 1 <= self.d_m <= self.d_M:
            raise ValueError(f"need 1 <= d_m <= d_M, got ({self.d_m}, {self.d_M})")
        object.__setattr__(self, "d_m", int(self.d_m))
        object.__setattr__(self, "d_M", int(self.d_M))

    @property
    def d_delta(self) -> int:
        return self.d_M - self.d_m


@dataclass(frozen=True)
class FeedbackGain:
    """Static feedback gain for u(k) = K y(k); state feedback is the case C = I."""

    K: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", _as_matrix(self.K, "K"))

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def p(self) -> int:
        return self.K.shape[1]


def gamma(d: int) -> float:
    """Delay weight used in the summation bounds: 1 for d = 1, else (d+1)/(d-1).

    Monotonically decreasing for d >= 2 with limit 1 as d grows.
    """
    if d <= 0:
        raise ValueError(f"gamma requires d >= 1, got {d}")
    if d == 1:
        return 1.0
    return (d + 1) / (d - 1)


def discretize_zoh(Ac, Bc, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of x' = Ac x + Bc u at sampling time Ts.

    Returns (A, B) with A = exp(Ac Ts) and B = int_0^Ts exp(Ac s) ds Bc,
    both obtained from one matrix exponential of the (n+m)-dimensional
    block embedding [[Ac, Bc], [0, 0]] scaled by Ts.
    """
    Ac = _as_matrix(Ac, "Ac")
    Bc = _as_matrix(Bc, "Bc")
    if Ts <= 0:
        raise ValueError(f"Ts must be positive, got {Ts}")
    n = Ac.shape[0]
    m = Bc.shape[1]
    if Ac.shape != (n, n) or Bc.shape[0] != n:
        raise ValueError("Ac must be square and Bc must have matching rows")
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = Ac
    blk[:n, n:] = Bc
    M = expm(blk * Ts)
    if not np.all(np.isfinite(M)):
        raise FloatingPointError("matrix exponential produced non-finite entries")
    return M[:n, :n], M[:n, n:]


def spectral_radius(M) -> float:
    """Largest absolute eigenvalue of a square matrix."""
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral_radius requires a square matrix, got {M.shape}")
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(np.abs(eigs))) if M.size else 0.0
