"""Compilation of an LmiSystem to svec standard form and the solver adapters.

The compiled problem is

    maximize t  subject to  smat(A_j z + b_j) >= 0   for every PSD block j,

where z stacks the svec coordinates of all symmetric blocks, the row-major
entries of all general blocks, and the margin t last.  Norm bounds are
realized as extra PSD blocks, so adapters only ever see PSD cones.

A returned assignment is never trusted as-is: every named constraint is
re-evaluated through the expression layer and its minimum eigenvalue checked
against the claimed margin before a result is labelled FeasibleCertified.
"""

from __future__ import annotations

import enum
import io
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Protocol

import numpy as np

from .lmi_core import DecisionLayout, LmiSystem, evaluate_constraints

__all__ = [
    "svec",
    "smat",
    "compile_system",
    "solve",
    "solve_system",
    "SvecProblem",
    "PsdBlock",
    "SolveResult",
    "SolveStatus",
    "SolverOptions",
    "SolverStats",
    "RawSolution",
    "dump_sdpa",
    "available_adapters",
]

_SQRT2 = math.sqrt(2.0)


def svec(M, check: bool = True) -> np.ndarray:
    """Upper-triangle row-major vectorization with off-diagonals scaled by sqrt(2).

    The scaling makes the map an isometry: dot(svec(A), svec(B)) = trace(A B).
    """
    M = np.asarray(M, float)
    s = M.shape[0]
    if M.shape != (s, s):
        raise ValueError(f"svec requires a square matrix, got {M.shape}")
    if check:
        scale = max(1.0, float(np.abs(M).max()))
        if np.abs(M - M.T).max() > 1e-10 * scale:
            raise ValueError("svec requires a symmetric matrix")
    i, j = np.triu_indices(s)
    v = M[i, j].copy()
    v[i != j] *= _SQRT2
    return v


def smat(v) -> np.ndarray:
    """Exact inverse of svec."""
    v = np.asarray(v, float)
    L = v.shape[0]
    s = int(round((math.sqrt(8 * L + 1) - 1) / 2))
    if s * (s + 1) // 2 != L:
        raise ValueError(f"svec vector length {L} is not a triangular number")
    M = np.zeros((s, s))
    i, j = np.triu_indices(s)
    vals = v.copy()
    vals[i != j] /= _SQRT2
    M[i, j] = vals
    M[j, i] = vals
    return M


def _tri(s: int) -> int:
    return s * (s + 1) // 2


def _sym_basis(s: int, idx: int) -> np.ndarray:
    """Basis matrix B such that V = sum_k z_k B_k reproduces z = svec(V)."""
    i, j = np.triu_indices(s)
    B = np.zeros((s, s))
    r, c = i[idx], j[idx]
    if r == c:
        B[r, c] = 1.0
    else:
        B[r, c] = B[c, r] = 1.0 / _SQRT2
    return B


@dataclass(frozen=True)
class PsdBlock:
    """One cone block: smat(A z + b) must be PSD."""

    name: str
    size: int
    A: np.ndarray          # tri(size) x num_vars
    b: np.ndarray          # tri(size)


@dataclass(frozen=True)
class SvecProblem:
    """Margin-maximization problem over stacked scalar coordinates."""

    num_vars: int
    objective: np.ndarray              # maximize objective @ z  (the margin coordinate)
    blocks: tuple[PsdBlock, ...]       # named constraints first, then norm-bound blocks
    var_offsets: Mapping[str, int]
    layout: DecisionLayout
    source: LmiSystem
    bounds_lo: np.ndarray              # per-coordinate box implied by the norm bound
    bounds_hi: np.ndarray

    def unpack(self, z: np.ndarray) -> dict[str, np.ndarray]:
        values: dict[str, np.ndarray] = {}
        for spec in self.layout.variables:
            off = self.var_offsets[spec.name]
            chunk = z[off:off + spec.num_scalars]
            if spec.symmetric:
                values[spec.name] = smat(chunk)
            else:
                values[spec.name] = chunk.reshape(spec.shape)
        return values


def _constraint_block(name: str, expr, layout: DecisionLayout,
                      offsets: Mapping[str, int], num_vars: int,
                      shift_margin: bool) -> PsdBlock:
    s = expr.size
    rows = _tri(s)
    A = np.zeros((rows, num_vars))
    by_var: dict[str, list] = {}
    for term in expr.terms:
        by_var.setdefault(term.var, []).append(term)
    for vname, terms in by_var.items():
        spec = layout.spec(vname)
        off = offsets[vname]
        for k in range(spec.num_scalars):
            if spec.symmetric:
                Bk = _sym_basis(spec.rows, k)
            else:
                Bk = np.zeros(spec.shape)
                Bk[k // spec.cols, k % spec.cols] = 1.0
            contrib = np.zeros((s, s))
            for t in terms:
                part = t.left @ Bk @ t.right.T
                contrib += part + part.T if t.symmetrize else part
            A[:, off + k] = svec(contrib, check=False)
    if shift_margin:
        A[:, offsets["t"]] += svec(-np.eye(s))
    return PsdBlock(name, s, A, svec(0.5 * (expr.constant + expr.constant.T), check=False))


def _norm_bound_blocks(layout: DecisionLayout, offsets: Mapping[str, int],
                       num_vars: int, kappa: float) -> list[PsdBlock]:
    """Realize -kappa <= V <= kappa per block as PSD constraints.

    Symmetric blocks get kappa*I - V and kappa*I + V; general blocks get the
    singular-value bound [[kappa*I, V], [V', kappa*I]]; the margin scalar gets
    kappa - t and kappa + t so an unconstrained margin caps at kappa.
    """
    blocks = []
    for spec in layout.variables:
        off = offsets[spec.name]
        if spec.name == "t" or spec.symmetric:
            s = spec.rows
            for sign, tag in ((-1.0, "hi"), (1.0, "lo")):
                A = np.zeros((_tri(s), num_vars))
                for k in range(spec.num_scalars):
                    A[:, off + k] = sign * svec(_sym_basis(s, k), check=False)
                blocks.append(PsdBlock(f"box:{spec.name}:{tag}", s, A, svec(kappa * np.eye(s))))
        else:
            r, c = spec.rows, spec.cols
            s = r + c
            A = np.zeros((_tri(s), num_vars))
            for k in range(spec.num_scalars):
                big = np.zeros((s, s))
                big[k // c, r + k % c] = 1.0
                A[:, off + k] = svec(big + big.T, check=False)
            blocks.append(PsdBlock(f"box:{spec.name}", s, A, svec(kappa * np.eye(s))))
    return blocks


def compile_system(system: LmiSystem) -> SvecProblem:
    """Scalarize an LmiSystem into margin-maximization standard form."""
    layout = system.layout
    offsets: dict[str, int] = {}
    pos = 0
    for spec in layout.variables:
        offsets[spec.name] = pos
        pos += spec.num_scalars
    num_vars = pos
    c = np.zeros(num_vars)
    c[offsets["t"]] = 1.0
    blocks = [
        _constraint_block(name, expr, layout, offsets, num_vars, shift_margin=True)
        for name, expr in system.constraints
    ]
    blocks.extend(_norm_bound_blocks(layout, offsets, num_vars, system.norm_bound))
    kappa = system.norm_bound
    lo = np.full(num_vars, -kappa)
    hi = np.full(num_vars, kappa)
    for spec in layout.variables:
        if spec.symmetric and spec.rows > 1:
            i, j = np.triu_indices(spec.rows)
            off = offsets[spec.name]
            lo[off:off + spec.num_scalars][i != j] = -kappa * _SQRT2
            hi[off:off + spec.num_scalars][i != j] = kappa * _SQRT2
    return SvecProblem(num_vars=num_vars, objective=c, blocks=tuple(blocks),
                       var_offsets=offsets, layout=layout, source=system,
                       bounds_lo=lo, bounds_hi=hi)


class SolveStatus(enum.Enum):
    FEASIBLE_CERTIFIED = "FeasibleCertified"
    INFEASIBLE = "Infeasible"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and adapter selection; every default can be overridden per call."""

    adapter: str | None = None       # falls back to $DELAYSOF_SOLVER, then clarabel
    eps_feas: float = 1e-7           # certified needs margin >= eps_feas
    eps_check: float = 1e-6          # slack allowed in the independent eigenvalue recheck
    max_iter: int = 200
    tol: float = 1e-9                # solver residual/gap target
    static_reg: float = 1e-8         # KKT static regularization; smaller values destabilize
    time_limit: float = 60.0
    verbose: bool = False


@dataclass(frozen=True)
class SolverStats:
    adapter: str
    raw_status: str
    iterations: int
    solve_time: float
    wall_time: float
    residuals: tuple[float, float]
    solver_margin: float = float("nan")   # the margin coordinate as returned
    recheck_min: float | None = None      # independent min eigenvalue across constraints
    message: str = ""


@dataclass(frozen=True)
class SolveResult:
    """Status, margin, and unpacked variable blocks.

    For certified results `margin` is the independently verified minimum
    eigenvalue over all named constraints at the returned assignment (a primal
    certificate); otherwise it is the solver's margin estimate.
    """

    status: SolveStatus
    margin: float
    values: dict[str, np.ndarray]
    stats: SolverStats

    @property
    def certified(self) -> bool:
        return self.status is SolveStatus.FEASIBLE_CERTIFIED


@dataclass(frozen=True)
class RawSolution:
    """What an adapter reports back; `grade` is 'optimal', 'almost' or 'failed'."""

    grade: str
    z: np.ndarray | None
    iterations: int
    solve_time: float
    residuals: tuple[float, float]
    message: str = ""


class SolverAdapter(Protocol):
    name: str

    def solve(self, problem: SvecProblem, options: SolverOptions) -> RawSolution: ...


def _upper_colmajor_perm(s: int) -> np.ndarray:
    """Map our row-major upper-triangle svec indices to column-stacked order."""
    row_major = [(i, j) for i in range(s) for j in range(i, s)]
    col_major = [(i, j) for j in range(s) for i in range(j + 1)]
    lookup = {ij: k for k, ij in enumerate(row_major)}
    return np.array([lookup[ij] for ij in col_major], dtype=int)


class ClarabelAdapter:
    """Interior-point backend; the default adapter."""

    name = "clarabel"

    def solve(self, problem: SvecProblem, options: SolverOptions) -> RawSolution:
        import clarabel
        from scipy import sparse

        rows_A = []
        rows_b = []
        cones = []
        for blk in problem.blocks:
            perm = _upper_colmajor_perm(blk.size)
            rows_A.append(-blk.A[perm])
            rows_b.append(blk.b[perm])
            cones.append(clarabel.PSDTriangleConeT(blk.size))
        A = sparse.csc_matrix(np.vstack(rows_A))
        b = np.concatenate(rows_b)
        P = sparse.csc_matrix((problem.num_vars, problem.num_vars))
        q = -problem.objective
        settings = clarabel.DefaultSettings()
        settings.verbose = options.verbose
        settings.max_iter = options.max_iter
        settings.time_limit = options.time_limit
        settings.tol_gap_abs = options.tol
        settings.tol_gap_rel = options.tol
        settings.tol_feas = options.tol
        settings.static_regularization_constant = options.static_reg
        solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
        sol = solver.solve()
        status = sol.status
        if status == clarabel.SolverStatus.Solved:
            grade = "optimal"
        elif status in (clarabel.SolverStatus.AlmostSolved, clarabel.SolverStatus.InsufficientProgress):
            grade = "almost"
        else:
            grade = "failed"
        z = np.asarray(sol.x, float) if grade != "failed" else None
        return RawSolution(grade=grade, z=z, iterations=sol.iterations,
                           solve_time=sol.solve_time,
                           residuals=(float(sol.r_prim), float(sol.r_dual)),
                           message=str(status))


class ScsAdapter:
    """First-order (ADMM) backend; slower to high accuracy but a useful cross-check."""

    name = "scs"

    def solve(self, problem: SvecProblem, options: SolverOptions) -> RawSolution:
        import scs
        from scipy import sparse

        A = sparse.csc_matrix(np.vstack([-blk.A for blk in problem.blocks]))
        b = np.concatenate([blk.b for blk in problem.blocks])
        data = {"A": A, "b": b, "c": -problem.objective}
        cone = {"s": [blk.size for blk in problem.blocks]}
        eps = max(options.tol, 1e-10)
        solver = scs.SCS(data, cone, eps_abs=eps, eps_rel=eps,
                         max_iters=max(options.max_iter, 50000), verbose=options.verbose)
        out = solver.solve()
        info = out["info"]
        raw = info["status"]
        if raw == "solved":
            grade = "optimal"
        elif "inaccurate" in raw:
            grade = "almost"
        else:
            grade = "failed"
        z = np.asarray(out["x"], float) if out.get("x") is not None and grade != "failed" else None
        return RawSolution(grade=grade, z=z, iterations=int(info["iter"]),
                           solve_time=float(info["solve_time"]) / 1e3,
                           residuals=(float(info["res_pri"]), float(info["res_dual"])),
                           message=raw)


_ADAPTERS: dict[str, SolverAdapter] = {}


def register_adapter(adapter: SolverAdapter) -> None:
    _ADAPTERS[adapter.name] = adapter


register_adapter(ClarabelAdapter())
register_adapter(ScsAdapter())


def available_adapters() -> tuple[str, ...]:
    return tuple(_ADAPTERS)


def _pick_adapter(options: SolverOptions) -> SolverAdapter:
    name = options.adapter or os.environ.get("DELAYSOF_SOLVER", "clarabel")
    try:
        return _ADAPTERS[name]
    except KeyError:
        raise EnvironmentError(
            f"unknown solver adapter {name!r}; available: {sorted(_ADAPTERS)}") from None


def solve(problem: SvecProblem, options: SolverOptions | None = None) -> SolveResult:
    """Run the adapter, then re-certify the answer independently of the solver.

    FeasibleCertified requires margin >= eps_feas and an eigenvalue recheck of
    every named constraint at the returned assignment.  Infeasible requires a
    cleanly solved margin maximum below -eps_feas.  Everything else, including
    adapter failures, is Inconclusive.
    """
    options = options or SolverOptions()
    adapter = _pick_adapter(options)
    start = time.perf_counter()
    try:
        raw = adapter.solve(problem, options)
    except Exception as exc:  # adapter crash is a result, not an exception
        wall = time.perf_counter() - start
        stats = SolverStats(adapter.name, "exception", 0, 0.0, wall, (np.inf, np.inf),
                            message=f"{type(exc).__name__}: {exc}")
        return SolveResult(SolveStatus.INCONCLUSIVE, float("nan"),
                           problem.layout.zero_assignment(), stats)
    wall = time.perf_counter() - start
    if raw.z is None:
        stats = SolverStats(adapter.name, raw.grade, raw.iterations, raw.solve_time,
                            wall, raw.residuals, message=raw.message)
        return SolveResult(SolveStatus.INCONCLUSIVE, float("nan"),
                           problem.layout.zero_assignment(), stats)
    values = problem.unpack(raw.z)
    t_solver = float(values["t"][0, 0])
    mins = evaluate_constraints(problem.source, values)
    recheck_min = min(mins.values()) if mins else float("inf")
    kappa = problem.source.norm_bound
    box_ok = all(np.abs(v).max() <= kappa * (1 + 1e-6) + options.eps_check
                 for name, v in values.items())
    solved_ish = raw.grade in ("optimal", "almost")
    if solved_ish and box_ok and recheck_min >= options.eps_feas:
        # The achieved point itself certifies feasibility at margin recheck_min.
        status, margin = SolveStatus.FEASIBLE_CERTIFIED, recheck_min
    elif solved_ish and t_solver < -options.eps_feas and recheck_min < options.eps_feas:
        status, margin = SolveStatus.INFEASIBLE, t_solver
    else:
        status, margin = SolveStatus.INCONCLUSIVE, t_solver
    stats = SolverStats(adapter.name, raw.grade, raw.iterations, raw.solve_time,
                        wall, raw.residuals, solver_margin=t_solver,
                        recheck_min=recheck_min, message=raw.message)
    return SolveResult(status, margin, values, stats)


def solve_system(system: LmiSystem, options: SolverOptions | None = None) -> SolveResult:
    return solve(compile_system(system), options)


def dump_sdpa(problem: SvecProblem) -> str:
    """Sparse SDPA-like text dump for cross-checking against external tools.

    Layout: number of scalar variables, number of blocks, block sizes,
    objective row, then nonzeros as 'var block row col value' (1-indexed,
    upper triangle only, unscaled matrix entries).  Var index 0 carries the
    constant matrix, so block j reads  sum_k z_k F_k + F_0 >= 0.
    """
    out = io.StringIO()
    out.write(f"{problem.num_vars}\n")
    out.write(f"{len(problem.blocks)}\n")
    out.write(" ".join(str(b.size) for b in problem.blocks) + "\n")
    out.write(" ".join(repr(x) for x in problem.objective) + "\n")
    for bi, blk in enumerate(problem.blocks, start=1):
        const = smat(blk.b)
        for r in range(blk.size):
            for c in range(r, blk.size):
                if const[r, c] != 0.0:
                    out.write(f"0 {bi} {r + 1} {c + 1} {const[r, c]!r}\n")
        for k in range(problem.num_vars):
            col = blk.A[:, k]
            if not col.any():
                continue
            Fk = smat(col)
            for r in range(blk.size):
                for c in range(r, blk.size):
                    if Fk[r, c] != 0.0:
                        out.write(f"{k + 1} {bi} {r + 1} {c + 1} {Fk[r, c]!r}\n")
    return out.getvalue()
