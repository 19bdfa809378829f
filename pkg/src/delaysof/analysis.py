"""Certification of a fixed gain over a delay range, and the max-delay scan."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import SolveResult, SolveStatus, SolverOptions, solve_system
from .lmi_core import build_analysis_system, evaluate_constraints
from .model import DelayBounds, FeedbackGain, PlantModel

__all__ = [
    "StabilityCertificate",
    "AnalysisScanResult",
    "certify",
    "max_certified_delay_analysis",
]


@dataclass(frozen=True)
class StabilityCertificate:
    """A gain, the delay range it certifies, and the solved storage variables."""

    gain: FeedbackGain
    bounds: DelayBounds
    margin: float
    variables: dict[str, np.ndarray]

    def chain_variables(self) -> dict[str, np.ndarray]:
        """Variables needed by the trajectory dissipation checks, with the
        fixed supply-rate blocks S = -K' and R = I filled in."""
        K = self.gain.K
        out = dict(self.variables)
        out["S"] = -K.T
        out["R"] = np.eye(K.shape[0])
        return out


def certify(plant: PlantModel, bounds: DelayBounds, gain,
            options: SolverOptions | None = None,
            norm_bound: float = 1e3) -> tuple[StabilityCertificate | None, SolveResult]:
    """Solve the fixed-gain certification system; returns (certificate, solve result)."""
    K = np.asarray(gain, float)
    system = build_analysis_system(plant, bounds, K, norm_bound=norm_bound)
    result = solve_system(system, options)
    if result.status is not SolveStatus.FEASIBLE_CERTIFIED:
        return None, result
    cert = StabilityCertificate(gain=FeedbackGain(K), bounds=bounds,
                                margin=result.margin, variables=result.values)
    return cert, result


def recheck_certificate(plant: PlantModel, cert: StabilityCertificate,
                        slack: float = 1e-6) -> bool:
    """Re-evaluate all certification constraints at the stored variables."""
    system = build_analysis_system(plant, cert.bounds, cert.gain.K)
    mins = evaluate_constraints(system, cert.variables)
    return min(mins.values()) >= cert.margin - slack


@dataclass(frozen=True)
class AnalysisScanResult:
    d_max: int | None
    certificate: StabilityCertificate | None
    log: tuple[tuple[int, SolveStatus, float], ...]


def max_certified_delay_analysis(plant: PlantModel, d_m: int, gain, d_cap: int,
                                 options: SolverOptions | None = None,
                                 norm_bound: float = 1e3) -> AnalysisScanResult:
    """Increasing linear scan of d_M; returns the largest certified bound.

    Inconclusive solves are treated as uncertified but logged with their margin.
    """
    if d_cap < d_m:
        raise ValueError(f"need d_cap >= d_m, got ({d_m}, {d_cap})")
    K = np.asarray(gain, float)
    log = []
    d_max = None
    best = None
    for d_M in range(d_m, d_cap + 1):
        cert, result = certify(plant, DelayBounds(d_m, d_M), K, options, norm_bound)
        log.append((d_M, result.status, result.margin))
        if cert is not None:
            d_max, best = d_M, cert
    return AnalysisScanResult(d_max=d_max, certificate=best, log=tuple(log))
