"""Certification oracles that do not trust the conic solver.

Four independent checks: constant-delay companion lifting (a necessary
spectral condition), closed-loop simulation under random and bang-bang delay
sequences, direct numeric evaluation of the storage functional, and the
dissipation-chain inequalities along simulated trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .lmi_core import build_selectors, build_phi
from .model import DelayBounds, PlantModel

__all__ = [
    "Trajectory",
    "AugmentedState",
    "LkfValue",
    "ChainReport",
    "DecayReport",
    "lift_constant_delay",
    "random_delays",
    "bang_bang_delays",
    "unit_histories",
    "random_history",
    "simulate",
    "build_xi",
    "lkf_value",
    "supply_rate",
    "check_dissipation_chain",
    "decay_check",
]

DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop state history on [-d_M, steps] with its delay sequence.

    States are stored in one array with x(k) at row k + d_M.  If the norm
    guard tripped, `diverged_at` holds the first step index whose state
    exceeded the limit and the remaining rows are zero.
    """

    plant: PlantModel
    K: np.ndarray
    bounds: DelayBounds
    d_seq: np.ndarray
    xs: np.ndarray
    steps: int
    diverged_at: int | None = None

    def x(self, k: int) -> np.ndarray:
        if not -self.bounds.d_M <= k <= self.last_step:
            raise IndexError(f"state index {k} outside [-{self.bounds.d_M}, {self.last_step}]")
        return self.xs[k + self.bounds.d_M]

    def u(self, k: int) -> np.ndarray:
        return self.K @ self.plant.C @ self.x(k)

    def y(self, k: int) -> np.ndarray:
        return self.plant.C @ self.x(k)

    def delay(self, k: int) -> int:
        if not 0 <= k < self.steps:
            raise IndexError(f"delay index {k} outside [0, {self.steps})")
        return int(self.d_seq[k])

    @property
    def last_step(self) -> int:
        return self.steps if self.diverged_at is None else self.diverged_at

    def max_history_norm(self) -> float:
        head = self.xs[: self.bounds.d_M + 1]
        return float(np.max(np.linalg.norm(head, axis=1)))

    def to_csv(self, path) -> None:
        """Rows for k in [-d_M, last]; the delay column is empty where no
        transition was taken (history rows and the final state)."""
        n, m = self.plant.n, self.plant.m
        header = ["k"] + [f"x{i+1}" for i in range(n)] + [f"u{i+1}" for i in range(m)] + ["d"]
        lines = [",".join(header)]
        for k in range(-self.bounds.d_M, self.last_step + 1):
            xs = [f"{v:.17g}" for v in self.x(k)]
            us = [f"{v:.17g}" for v in self.u(k)]
            d = str(self.delay(k)) if 0 <= k < min(self.steps, self.last_step) else ""
            lines.append(",".join([str(k)] + xs + us + [d]))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class AugmentedState:
    """Stacked vector [x(k+1); x(k); x(k-d_m); x(k-d); x(k-d_M); v1; v2; v3]."""

    xi: np.ndarray


@dataclass(frozen=True)
class LkfValue:
    v1_term: float
    v2_term: float
    v3_term: float

    @property
    def total(self) -> float:
        return self.v1_term + self.v2_term + self.v3_term


def lift_constant_delay(plant: PlantModel, K, d: int) -> np.ndarray:
    """Companion matrix of the closed loop at constant delay d.

    Acts on the stacked history [x(k); x(k-1); ...; x(k-d)]; for d = 0 this is
    just A + B K C.
    """
    if d < 0:
        raise ValueError(f"delay must be nonnegative, got {d}")
    n = plant.n
    BKC = plant.B @ np.asarray(K, float) @ plant.C
    if d == 0:
        return plant.A + BKC
    L = np.zeros((n * (d + 1), n * (d + 1)))
    L[:n, :n] = plant.A
    L[:n, d * n:] = BKC
    L[n:, :d * n] = np.eye(d * n)
    return L


def random_delays(bounds: DelayBounds, length: int, seed: int) -> np.ndarray:
    """I.i.d. uniform delays on [d_m, d_M] from a PCG64 generator; same seed, same sequence."""
    if length < 1:
        raise ValueError(f"length must be positive, got {length}")
    rng = np.random.default_rng(seed)
    return rng.integers(bounds.d_m, bounds.d_M + 1, size=length)


def bang_bang_delays(bounds: DelayBounds, length: int, start_high: bool = False) -> np.ndarray:
    """Deterministic alternation between the two interval endpoints."""
    pair = (bounds.d_M, bounds.d_m) if start_high else (bounds.d_m, bounds.d_M)
    return np.array([pair[k % 2] for k in range(length)], dtype=int)


def unit_histories(n: int, d_M: int) -> list[np.ndarray]:
    """Each canonical unit vector held constant over the history window."""
    return [np.tile(np.eye(n)[i], (d_M + 1, 1)) for i in range(n)]


def random_history(n: int, d_M: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((d_M + 1, n))


def _as_history(phi, n: int, d_M: int) -> np.ndarray:
    """Accept an array of shape (d_M+1, n) or a {k: vector} mapping on [-d_M, 0]."""
    if isinstance(phi, Mapping):
        rows = []
        for k in range(-d_M, 1):
            if k not in phi:
                raise ValueError(f"initial history is missing k = {k}")
            rows.append(np.asarray(phi[k], float).reshape(n))
        return np.array(rows)
    arr = np.asarray(phi, float)
    if arr.shape != (d_M + 1, n):
        raise ValueError(f"initial history must have shape ({d_M + 1}, {n}), got {arr.shape}")
    return arr.copy()


def simulate(plant: PlantModel, K, d_seq, phi, steps: int,
             bounds: DelayBounds | None = None,
             divergence_limit: float = DIVERGENCE_LIMIT) -> Trajectory:
    """Iterate x(k+1) = A x(k) + B K C x(k - d(k)) from the given history.

    A state norm above `divergence_limit` stops the run and records the step
    index instead of raising; destabilizing gains are an expected input.
    """
    K = np.asarray(K, float)
    d_seq = np.asarray(d_seq, dtype=int)
    if d_seq.ndim != 1 or len(d_seq) < steps:
        raise ValueError(f"delay sequence must cover [0, {steps})")
    if bounds is None:
        bounds = DelayBounds(max(int(d_seq.min()), 1), int(d_seq.max()))
    if d_seq[:steps].max() > bounds.d_M or d_seq[:steps].min() < bounds.d_m:
        raise ValueError("delay sequence leaves the declared bounds")
    n = plant.n
    d_M = bounds.d_M
    xs = np.zeros((d_M + steps + 1, n))
    xs[: d_M + 1] = _as_history(phi, n, d_M)
    BK = plant.B @ K @ plant.C
    diverged_at = None
    for k in range(steps):
        xk = xs[k + d_M]
        xd = xs[k - int(d_seq[k]) + d_M]
        xs[k + 1 + d_M] = plant.A @ xk + BK @ xd
        if np.linalg.norm(xs[k + 1 + d_M]) > divergence_limit:
            diverged_at = k + 1
            xs[k + 2 + d_M:] = 0.0
            break
    return Trajectory(plant=plant, K=K, bounds=bounds, d_seq=d_seq[:steps].copy(),
                      xs=xs, steps=steps, diverged_at=diverged_at)


def build_xi(traj: Trajectory, k: int) -> AugmentedState:
    """Assemble the augmented vector at step k, including the window averages."""
    if k < 0 or k + 1 > traj.last_step:
        raise IndexError(f"need 0 <= k and k+1 <= {traj.last_step}, got k = {k}")
    dm, dM = traj.bounds.d_m, traj.bounds.d_M
    d = traj.delay(k)
    x = traj.x
    v1 = sum(x(l) for l in range(k - dm, k + 1)) / (dm + 1)
    v2 = sum(x(l) for l in range(k - d, k - dm + 1)) / (d - dm + 1)
    v3 = sum(x(l) for l in range(k - dM, k - d + 1)) / (dM - d + 1)
    xi = np.concatenate([x(k + 1), x(k), x(k - dm), x(k - d), x(k - dM), v1, v2, v3])
    return AugmentedState(xi=xi)


def lkf_value(traj: Trajectory, variables: Mapping[str, np.ndarray],
              bounds: DelayBounds, k: int) -> LkfValue:
    """Numeric storage-functional value at step k from history back to k - d_M."""
    dm, dM, dd = bounds.d_m, bounds.d_M, bounds.d_delta
    if k - dM < -traj.bounds.d_M:
        raise IndexError(f"history does not reach k - d_M = {k - dM}")
    x = traj.x
    P = np.asarray(variables["P"], float)
    W1 = np.asarray(variables["W1"], float)
    W2 = np.asarray(variables["W2"], float)
    Z1 = np.asarray(variables["Z1"], float)
    Z2 = np.asarray(variables["Z2"], float)
    w = np.concatenate([
        x(k),
        sum(x(l) for l in range(k - dm, k)),
        sum(x(l) for l in range(k - dM, k - dm)),
    ])
    v1 = float(w @ P @ w)
    v2 = float(sum(x(l) @ W1 @ x(l) for l in range(k - dm, k))
               + sum(x(l) @ W2 @ x(l) for l in range(k - dM, k - dm)))
    eta = lambda i: x(i) - x(i - 1)
    v3 = 0.0
    for l in range(-dm + 1, 1):
        for i in range(k + l, k + 1):
            e = eta(i)
            v3 += dm * float(e @ Z1 @ e)
    for l in range(-dM + 1, -dm + 1):
        for i in range(k + l, k + 1):
            e = eta(i)
            v3 += dd * float(e @ Z2 @ e)
    return LkfValue(v1, v2, v3)


def supply_rate(y, u, Q, S, R) -> float:
    """Quadratic supply y'Qy + 2 y'Su + u'Ru."""
    y = np.asarray(y, float).reshape(-1)
    u = np.asarray(u, float).reshape(-1)
    Q = np.atleast_2d(np.asarray(Q, float))
    S = np.atleast_2d(np.asarray(S, float))
    R = np.atleast_2d(np.asarray(R, float))
    return float(y @ Q @ y + 2.0 * y @ S @ u + u @ R @ u)


@dataclass(frozen=True)
class ChainReport:
    """One evaluation of the dissipation chain dV <= xi'Phi xi <= w < 0."""

    k: int
    delta_v: float
    quad_bound: float
    supply: float
    slack: float

    @property
    def legs(self) -> tuple[bool, bool, bool]:
        return (self.delta_v <= self.quad_bound + self.slack,
                self.quad_bound <= self.supply + self.slack,
                self.supply < self.slack)

    @property
    def passed(self) -> bool:
        return all(self.legs)


def check_dissipation_chain(traj: Trajectory, variables: Mapping[str, np.ndarray],
                            bounds: DelayBounds, k: int,
                            tol_scale: float = 1e-8) -> ChainReport:
    """Evaluate the three-link chain at step k with certificate variables.

    `variables` must hold the storage blocks P, W1, W2, Z1, Z2, X and the
    supply blocks Q, S, R (a StabilityCertificate provides them via
    chain_variables()).  Each leg is allowed tol_scale * (1 + |dV|) of slack;
    the zero trajectory passes vacuously.
    """
    if k < 1:
        raise IndexError(f"chain evaluation needs k >= 1, got {k}")
    if k + 1 > traj.last_step:
        raise IndexError(f"trajectory too short for chain at k = {k}")
    d = traj.delay(k)
    dv = lkf_value(traj, variables, bounds, k + 1).total \
        - lkf_value(traj, variables, bounds, k).total
    selectors = build_selectors(traj.plant.n, traj.plant.m, bounds)
    phi = build_phi(selectors, bounds, d).evaluate(variables)
    xi = build_xi(traj, k).xi
    quad = float(xi @ phi @ xi)
    w = supply_rate(traj.y(k - d), traj.u(k - d),
                    variables["Q"], variables["S"], variables["R"])
    slack = tol_scale * (1.0 + abs(dv))
    return ChainReport(k=k, delta_v=dv, quad_bound=quad, supply=w, slack=slack)


@dataclass(frozen=True)
class DecayRun:
    label: str
    seed: int | None
    final_ratio: float
    diverged_at: int | None

    @property
    def decayed(self) -> bool:
        return self.diverged_at is None and self.final_ratio <= self._threshold

    _threshold: float = 1e-6


@dataclass(frozen=True)
class DecayReport:
    runs: tuple[DecayRun, ...]
    threshold: float

    @property
    def all_decayed(self) -> bool:
        return all(r.diverged_at is None and r.final_ratio <= self.threshold for r in self.runs)

    @property
    def worst_ratio(self) -> float:
        return max((r.final_ratio for r in self.runs), default=float("nan"))

    @property
    def any_diverged(self) -> bool:
        return any(r.diverged_at is not None for r in self.runs)


def decay_check(plant: PlantModel, K, bounds: DelayBounds, seeds: int = 100,
                steps: int = 500, threshold: float = 1e-6) -> DecayReport:
    """Seeded random-delay simulations plus the two bang-bang sequences.

    Each seed draws one delay sequence and one random initial history; the
    bang-bang runs use an all-ones history.  A run passes when the final
    state norm is within `threshold` of the largest history norm.
    """
    runs: list[DecayRun] = []
    n, d_M = plant.n, bounds.d_M
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        d_seq = random_delays(bounds, steps, seed)
        phi = random_history(n, d_M, rng)
        traj = simulate(plant, K, d_seq, phi, steps, bounds)
        ratio = float(np.linalg.norm(traj.x(traj.last_step)) / traj.max_history_norm())
        runs.append(DecayRun(f"seed-{seed}", seed, ratio, traj.diverged_at, threshold))
    ones = np.ones((d_M + 1, n))
    for start_high in (False, True):
        d_seq = bang_bang_delays(bounds, steps, start_high)
        traj = simulate(plant, K, d_seq, ones, steps, bounds)
        ratio = float(np.linalg.norm(traj.x(traj.last_step)) / traj.max_history_norm())
        label = "bang-bang-high" if start_high else "bang-bang-low"
        runs.append(DecayRun(label, None, ratio, traj.diverged_at, threshold))
    return DecayReport(runs=tuple(runs), threshold=threshold)
