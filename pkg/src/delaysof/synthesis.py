"""Gain design: solve the design inequalities, extract K, search over rho and d_M."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import SolveResult, SolveStatus, SolverOptions, solve_system
from .lmi_core import build_design_system
from .model import DelayBounds, FeedbackGain, PlantModel

__all__ = [
    "DesignOutcome",
    "DegenerateSolutionError",
    "RhoGrid",
    "SweepEntry",
    "SweepResult",
    "DesignScanResult",
    "design_gain",
    "sweep_rho",
    "max_certified_delay_design",
]

R_CONDITION_LIMIT = 1e10


class DegenerateSolutionError(RuntimeError):
    """The solved R block is numerically singular, so no gain can be extracted."""


@dataclass(frozen=True)
class DesignOutcome:
    gain: FeedbackGain
    rho: float
    bounds: DelayBounds
    margin: float
    variables: dict[str, np.ndarray]
    r_condition: float

    def analysis_feasible_point(self) -> dict[str, np.ndarray] | None:
        """Rescale the design solution into a feasible point of the fixed-gain
        certification system for the same bounds.

        Dividing every design variable by sigma with R = sigma * I maps the
        design inequalities onto the certification ones (same gain, supply
        blocks pinned to S = -K', R = I, multiplier Ls = [rho * 1; -I]), with
        all margins scaled by 1/sigma.  Only available when the solved R is a
        multiple of the identity, which always holds for single-input plants.
        """
        R = self.variables["R"]
        m = R.shape[0]
        sigma = float(np.trace(R)) / m
        if sigma <= 0 or np.abs(R - sigma * np.eye(m)).max() > 1e-9 * sigma:
            return None
        point = {name: self.variables[name] / sigma
                 for name in ("P", "W1", "W2", "Z1", "Z2", "Q", "X")}
        p = self.gain.K.shape[1]
        point["Ls"] = np.vstack([self.rho * np.ones((p, m)), -np.eye(m)])
        point["t"] = np.array([[self.margin / sigma]])
        return point


def design_gain(plant: PlantModel, bounds: DelayBounds, rho: float,
                options: SolverOptions | None = None,
                norm_bound: float = 1e3) -> tuple[DesignOutcome | None, SolveResult]:
    """Solve the design system at one rho; on success extract K = -R^{-1} S'."""
    system = build_design_system(plant, bounds, rho, norm_bound=norm_bound)
    result = solve_system(system, options)
    if result.status is not SolveStatus.FEASIBLE_CERTIFIED:
        return None, result
    R = result.values["R"]
    S = result.values["S"]
    cond = float(np.linalg.cond(R))
    if not np.isfinite(cond) or cond > R_CONDITION_LIMIT:
        raise DegenerateSolutionError(
            f"solved R has condition number {cond:.3e} (> {R_CONDITION_LIMIT:.0e})")
    K = -np.linalg.solve(R, S.T)
    outcome = DesignOutcome(gain=FeedbackGain(K), rho=rho, bounds=bounds,
                            margin=result.margin, variables=result.values,
                            r_condition=cond)
    return outcome, result


@dataclass(frozen=True)
class RhoGrid:
    """Inclusive arithmetic grid of rho values."""

    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.start > self.stop:
            raise ValueError(f"need start <= stop, got [{self.start}, {self.stop}]")

    def points(self) -> np.ndarray:
        count = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(count)


DEFAULT_RHO_GRID = RhoGrid(-1.0, 1.0, 0.01)


@dataclass(frozen=True)
class SweepEntry:
    rho: float
    status: SolveStatus
    margin: float
    gain: np.ndarray | None


@dataclass(frozen=True)
class SweepResult:
    best: DesignOutcome | None
    log: tuple[SweepEntry, ...]


def _as_grid(grid) -> np.ndarray:
    if isinstance(grid, RhoGrid):
        return grid.points()
    pts = np.atleast_1d(np.asarray(grid, float))
    if pts.size == 0:
        raise ValueError("rho grid is empty")
    return pts


def sweep_rho(plant: PlantModel, bounds: DelayBounds, grid=DEFAULT_RHO_GRID,
              options: SolverOptions | None = None,
              norm_bound: float = 1e3) -> SweepResult:
    """Run design_gain over a rho grid and keep the best feasible outcome.

    Ranking: larger margin first, ties broken by smaller Frobenius norm of the
    gain, then by smaller |rho|.
    """
    entries: list[SweepEntry] = []
    best: DesignOutcome | None = None
    best_key = None
    for rho in _as_grid(grid):
        outcome, result = design_gain(plant, bounds, float(rho), options, norm_bound)
        K = outcome.gain.K if outcome is not None else None
        entries.append(SweepEntry(float(rho), result.status, result.margin, K))
        if outcome is None:
            continue
        key = (-outcome.margin, float(np.linalg.norm(outcome.gain.K)), abs(outcome.rho))
        if best_key is None or key < best_key:
            best, best_key = outcome, key
    return SweepResult(best=best, log=tuple(entries))


@dataclass(frozen=True)
class DesignScanResult:
    d_max: int | None
    outcome: DesignOutcome | None
    per_delay: tuple[tuple[int, SweepResult], ...]


def max_certified_delay_design(plant: PlantModel, d_m: int, rho_grid=DEFAULT_RHO_GRID,
                               d_cap: int = 30, options: SolverOptions | None = None,
                               norm_bound: float = 1e3) -> DesignScanResult:
    """Exhaustive upward scan of d_M; returns the largest value with a feasible design.

    The scan is linear because feasibility is not known to be monotone in d_M.
    Inconclusive solves count as infeasible but stay visible in the log.
    """
    if d_cap < d_m:
        raise ValueError(f"need d_cap >= d_m, got ({d_m}, {d_cap})")
    per_delay = []
    d_max = None
    best = None
    for d_M in range(d_m, d_cap + 1):
        sweep = sweep_rho(plant, DelayBounds(d_m, d_M), rho_grid, options, norm_bound)
        per_delay.append((d_M, sweep))
        if sweep.best is not None:
            d_max, best = d_M, sweep.best
    return DesignScanResult(d_max=d_max, outcome=best, per_delay=tuple(per_delay))
