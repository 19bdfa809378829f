"""Assembly of the delay-dependent design/analysis matrix-inequality systems.

Everything is phrased over the stacked vector

    zeta = [x(k+1), x(k), x(k-d_m), x(k-d(k)), x(k-d_M), v1, v2, v3, u(k-d(k))]

whose first eight blocks (of width n each) form the augmented state xi and
whose trailing block (width m) is the delayed input.  The selector matrices
below pick affine combinations of those blocks; they are transcribed from a
single block-index table so there is exactly one place to review.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .model import DelayBounds, PlantModel, gamma

__all__ = [
    "VariableSpec",
    "DecisionLayout",
    "AffineTerm",
    "AffineMatrixExpr",
    "SelectorBank",
    "LmiSystem",
    "build_selectors",
    "build_phi",
    "build_psi_z",
    "build_upsilon",
    "build_design_system",
    "build_analysis_system",
    "evaluate_constraints",
]

# Block layout of zeta: eight state-sized blocks followed by one input block.
XI_BLOCKS = ("x(k+1)", "x(k)", "x(k-dm)", "x(k-d)", "x(k-dM)", "v1", "v2", "v3")
ZETA_BLOCKS = XI_BLOCKS + ("u(k-d)",)


def _block_matrix(table: Mapping[tuple[int, int], float], rows: int, cols: int, n: int) -> np.ndarray:
    """Dense matrix from a {(row_block, col_block): coefficient} table of n x n identity blocks."""
    M = np.zeros((rows * n, cols * n))
    I = np.eye(n)
    for (r, c), coef in table.items():
        M[r * n:(r + 1) * n, c * n:(c + 1) * n] = coef * I
    return M


# Selector tables over the 8 xi blocks (and the 6-block sub-range for M).
# Coefficients depending on the delay interval are callables of (d_m, d_M).
def _f1_table(dm: int, dM: int):
    return {(0, 1): 1.0, (1, 1): -1.0, (1, 5): dm + 1.0,
            (2, 2): -1.0, (2, 3): -1.0, (2, 6): 1.0 - dm, (2, 7): dM + 1.0}


def _f2_table(dm: int, dM: int):
    return {(0, 0): 1.0, (1, 2): -1.0, (1, 5): dm + 1.0,
            (2, 3): -1.0, (2, 4): -1.0, (2, 6): 1.0 - dm, (2, 7): dM + 1.0}


_F3_TABLE = {(0, 0): 1.0, (0, 1): -1.0}

# M acts on six consecutive blocks; it is reused at two offsets to form F_s and F_Psi.
_M_TABLE = {(0, 1): 1.0, (0, 2): -1.0, (1, 1): 1.0, (1, 2): 1.0, (1, 5): -2.0}


def _shift_table(d: float):
    return {(2, 6): float(d), (2, 7): -float(d)}


@dataclass(frozen=True)
class SelectorBank:
    """All constant selector matrices for a given (n, m, d_m, d_M)."""

    n: int
    m: int
    bounds: DelayBounds
    F1: np.ndarray        # 3n x 8n
    F2: np.ndarray        # 3n x 8n
    F3: np.ndarray        # n x 8n
    M_sel: np.ndarray     # 2n x 6n
    Fs: np.ndarray        # 2n x 8n
    FPsi: np.ndarray      # 4n x 8n
    Gamma: np.ndarray | None = None        # n x (8n+m), needs the plant
    GammaPerp: np.ndarray | None = None    # (8n+m) x (7n+m), needs the plant

    def F_of_d(self, d: float) -> np.ndarray:
        """Delay-dependent selector with d*I and -d*I in blocks v2, v3 of the third row."""
        return _block_matrix(_shift_table(d), 3, 8, self.n)

    @property
    def block_layout(self) -> tuple[tuple[str, int], ...]:
        return tuple((name, self.n) for name in XI_BLOCKS) + (("u(k-d)", self.m),)


def build_selectors(n: int, m: int, bounds: DelayBounds, plant: PlantModel | None = None) -> SelectorBank:
    """Construct the selector bank; pass the plant to also bind Gamma and its complement."""
    if n < 1 or m < 1:
        raise ValueError("need n >= 1 and m >= 1")
    dm, dM = bounds.d_m, bounds.d_M
    F1 = _block_matrix(_f1_table(dm, dM), 3, 8, n)
    F2 = _block_matrix(_f2_table(dm, dM), 3, 8, n)
    F3 = _block_matrix(_F3_TABLE, 1, 8, n)
    M_sel = _block_matrix(_M_TABLE, 2, 6, n)
    Fs = np.hstack([M_sel, np.zeros((2 * n, 2 * n))])
    FPsi = np.vstack([
        np.hstack([np.zeros((2 * n, 2 * n)), M_sel]),
        np.hstack([np.zeros((2 * n, n)), M_sel, np.zeros((2 * n, n))]),
    ])
    Gamma = GammaPerp = None
    if plant is not None:
        if plant.n != n or plant.m != m:
            raise ValueError("plant dimensions do not match (n, m)")
        A, B = plant.A, plant.B
        Gamma = np.hstack([-np.eye(n), A, np.zeros((n, 6 * n)), B])
        GammaPerp = np.vstack([
            np.hstack([A, np.zeros((n, 6 * n)), B]),
            np.eye(7 * n + m),
        ])
    return SelectorBank(n=n, m=m, bounds=bounds, F1=F1, F2=F2, F3=F3,
                        M_sel=M_sel, Fs=Fs, FPsi=FPsi, Gamma=Gamma, GammaPerp=GammaPerp)


@dataclass(frozen=True)
class VariableSpec:
    """One decision-variable block."""

    name: str
    rows: int
    cols: int
    symmetric: bool = False
    psd: bool = False

    @property
    def num_scalars(self) -> int:
        if self.symmetric:
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)


@dataclass(frozen=True)
class DecisionLayout:
    """Ordered decision variables; the scalar feasibility margin `t` is always last."""

    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in layout: {names}")
        if names[-1] != "t":
            raise ValueError("layout must end with the margin scalar 't'")

    def spec(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def num_scalars(self) -> int:
        return sum(v.num_scalars for v in self.variables)

    def zero_assignment(self) -> dict[str, np.ndarray]:
        return {v.name: np.zeros(v.shape) for v in self.variables}


@dataclass(frozen=True)
class AffineTerm:
    """One contribution  left @ V @ right.T,  doubled with its transpose when symmetrize is set."""

    var: str
    left: np.ndarray
    right: np.ndarray
    symmetrize: bool = False


@dataclass(frozen=True)
class AffineMatrixExpr:
    """Symmetric-matrix expression affine in named variable blocks."""

    size: int
    constant: np.ndarray
    terms: tuple[AffineTerm, ...] = ()

    def __post_init__(self):
        if self.constant.shape != (self.size, self.size):
            raise ValueError("constant shape does not match declared size")

    @staticmethod
    def zeros(size: int) -> "AffineMatrixExpr":
        return AffineMatrixExpr(size, np.zeros((size, size)))

    def with_term(self, var: str, left, right, symmetrize: bool = False) -> "AffineMatrixExpr":
        term = AffineTerm(var, np.asarray(left, float), np.asarray(right, float), symmetrize)
        if term.left.shape[0] != self.size or term.right.shape[0] != self.size:
            raise ValueError(f"coefficient rows must equal expression size for {var}")
        return AffineMatrixExpr(self.size, self.constant, self.terms + (term,))

    def with_constant(self, C) -> "AffineMatrixExpr":
        return AffineMatrixExpr(self.size, self.constant + np.asarray(C, float), self.terms)

    def __add__(self, other: "AffineMatrixExpr") -> "AffineMatrixExpr":
        if self.size != other.size:
            raise ValueError("size mismatch")
        return AffineMatrixExpr(self.size, self.constant + other.constant, self.terms + other.terms)

    def __neg__(self) -> "AffineMatrixExpr":
        terms = tuple(AffineTerm(t.var, -t.left, t.right, t.symmetrize) for t in self.terms)
        return AffineMatrixExpr(self.size, -self.constant, terms)

    def congruence(self, G) -> "AffineMatrixExpr":
        """Return G.T @ expr @ G."""
        G = np.asarray(G, float)
        if G.shape[0] != self.size:
            raise ValueError("congruence factor has wrong row count")
        terms = tuple(AffineTerm(t.var, G.T @ t.left, G.T @ t.right, t.symmetrize) for t in self.terms)
        return AffineMatrixExpr(G.shape[1], G.T @ self.constant @ G, terms)

    def evaluate(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        M = self.constant.copy()
        for t in self.terms:
            contrib = t.left @ np.asarray(values[t.var], float) @ t.right.T
            M += contrib + contrib.T if t.symmetrize else contrib
        return M

    def variables(self) -> tuple[str, ...]:
        seen: list[str] = []
        for t in self.terms:
            if t.var not in seen:
                seen.append(t.var)
        return tuple(seen)

    def to_json(self) -> str:
        """Debug dump: size, constant, and the term list with row-major coefficients."""
        payload = {
            "size": self.size,
            "constant": self.constant.tolist(),
            "terms": [
                {"var": t.var, "left": t.left.tolist(), "right": t.right.tolist(),
                 "symmetrize": t.symmetrize}
                for t in self.terms
            ],
        }
        return json.dumps(payload, indent=2)


def _column_selector(total_blocks: int, sizes: list[int], block: int) -> np.ndarray:
    """Tall selector J with identity at the given block row, zero elsewhere."""
    total = sum(sizes)
    offset = sum(sizes[:block])
    J = np.zeros((total, sizes[block]))
    J[offset:offset + sizes[block]] = np.eye(sizes[block])
    return J


def build_phi(selectors: SelectorBank, bounds: DelayBounds, d: float) -> AffineMatrixExpr:
    """The 8n x 8n storage-difference bound, affine in {P, W1, W2, Z1, Z2, X}.

    Only the He{F(d)' P (F2 - F1)} term depends on d, linearly, so evaluating at
    the two interval endpoints covers the whole delay range.
    """
    n = selectors.n
    dm, dM = bounds.d_m, bounds.d_M
    dd = bounds.d_delta
    F1, F2, F3 = selectors.F1, selectors.F2, selectors.F3
    Fd = selectors.F_of_d(d)
    expr = AffineMatrixExpr.zeros(8 * n)
    expr = expr.with_term("P", F2.T, F2.T)
    expr = expr.with_term("P", -F1.T, F1.T)
    expr = expr.with_term("P", Fd.T, (F2 - F1).T, symmetrize=True)
    # W = diag(0, W1, W2 - W1, 0, -W2, 0, 0, 0)
    sizes = [n] * 8
    J = [_column_selector(8, sizes, b) for b in range(8)]
    expr = expr.with_term("W1", J[1], J[1])
    expr = expr.with_term("W1", -J[2], J[2])
    expr = expr.with_term("W2", J[2], J[2])
    expr = expr.with_term("W2", -J[4], J[4])
    expr = expr.with_term("Z1", dm ** 2 * F3.T, F3.T)
    expr = expr.with_term("Z2", dd ** 2 * F3.T, F3.T)
    # - Fs' diag(Z1, 3 gamma(d_m) Z1) Fs
    Fs_a, Fs_b = selectors.Fs[:n], selectors.Fs[n:]
    expr = expr.with_term("Z1", -Fs_a.T, Fs_a.T)
    expr = expr.with_term("Z1", -3.0 * gamma(dm) * Fs_b.T, Fs_b.T)
    # - FPsi' [[diag(Z2, 3 Z2), X], [X', diag(Z2, 3 Z2)]] FPsi
    G1, G2 = selectors.FPsi[:2 * n], selectors.FPsi[2 * n:]
    G1a, G1b = G1[:n], G1[n:]
    G2a, G2b = G2[:n], G2[n:]
    expr = expr.with_term("Z2", -G1a.T, G1a.T)
    expr = expr.with_term("Z2", -3.0 * G1b.T, G1b.T)
    expr = expr.with_term("Z2", -G2a.T, G2a.T)
    expr = expr.with_term("Z2", -3.0 * G2b.T, G2b.T)
    expr = expr.with_term("X", -G1.T, G2.T, symmetrize=True)
    return expr


def build_psi_z(n: int) -> AffineMatrixExpr:
    """The 4n x 4n coupling matrix [[diag(Z2, 3Z2), X], [X', diag(Z2, 3Z2)]]."""
    sizes = [n] * 4
    C = [_column_selector(4, sizes, b) for b in range(4)]
    top = np.vstack([np.eye(2 * n), np.zeros((2 * n, 2 * n))])
    bot = np.vstack([np.zeros((2 * n, 2 * n)), np.eye(2 * n)])
    expr = AffineMatrixExpr.zeros(4 * n)
    expr = expr.with_term("Z2", C[0], C[0])
    expr = expr.with_term("Z2", 3.0 * C[1], C[1])
    expr = expr.with_term("Z2", C[2], C[2])
    expr = expr.with_term("Z2", 3.0 * C[3], C[3])
    expr = expr.with_term("X", top, bot, symmetrize=True)
    return expr


def build_upsilon(plant: PlantModel, gain: np.ndarray | None = None) -> AffineMatrixExpr:
    """Supply-rate contribution on the (8n+m)-dimensional stacked vector.

    With gain=None the supply-rate matrices (Q, S, R) are decision variables
    (design mode).  With a gain K the substitution S = -K', R = I is applied,
    leaving Q as the only supply-rate variable (analysis mode).
    """
    n, m, p = plant.n, plant.m, plant.p
    sizes = [n] * 8 + [m]
    J4 = _column_selector(9, sizes, 3)   # x(k-d(k)) block
    J9 = _column_selector(9, sizes, 8)   # u(k-d(k)) block
    C = plant.C
    expr = AffineMatrixExpr.zeros(8 * n + m)
    expr = expr.with_term("Q", -J4 @ C.T, J4 @ C.T)
    if gain is None:
        expr = expr.with_term("R", -J9, J9)
        expr = expr.with_term("S", -J4 @ C.T, J9, symmetrize=True)
    else:
        K = np.asarray(gain, float)
        if K.shape != (m, p):
            raise ValueError(f"gain must be {m} x {p}, got {K.shape}")
        S = -K.T
        coupling = J4 @ (-C.T @ S) @ J9.T
        expr = expr.with_constant(-J9 @ np.eye(m) @ J9.T + coupling + coupling.T)
    return expr


@dataclass(frozen=True)
class LmiSystem:
    """Named constraints, each required to satisfy  expr >= t * I  after the margin shift."""

    layout: DecisionLayout
    constraints: tuple[tuple[str, AffineMatrixExpr], ...]
    norm_bound: float

    def __post_init__(self):
        names = self.layout.names
        for cname, expr in self.constraints:
            for var in expr.variables():
                if var not in names:
                    raise ValueError(f"constraint {cname} references unknown variable {var}")

    def constraint(self, name: str) -> AffineMatrixExpr:
        for cname, expr in self.constraints:
            if cname == name:
                return expr
        raise KeyError(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.constraints)


def _embed_xi(expr: AffineMatrixExpr, m: int) -> AffineMatrixExpr:
    """Embed an 8n x 8n expression as diag(expr, 0_m) on the zeta space."""
    J = np.vstack([np.eye(expr.size), np.zeros((m, expr.size))])
    terms = tuple(AffineTerm(t.var, J @ t.left, J @ t.right, t.symmetrize) for t in expr.terms)
    constant = J @ expr.constant @ J.T
    return AffineMatrixExpr(expr.size + m, constant, terms)


def _positivity(name: str, size: int) -> tuple[str, AffineMatrixExpr]:
    return (f"pos:{name}", AffineMatrixExpr.zeros(size).with_term(name, np.eye(size), np.eye(size)))


def _vertex_constraints(plant: PlantModel, bounds: DelayBounds, selectors: SelectorBank,
                        upsilon: AffineMatrixExpr) -> list[tuple[str, AffineMatrixExpr]]:
    out = []
    for d in (bounds.d_m, bounds.d_M):
        phi = build_phi(selectors, bounds, d)
        zeta_expr = _embed_xi(phi, plant.m) + upsilon
        out.append((f"vertex:d={d}", -zeta_expr.congruence(selectors.GammaPerp)))
    return out


def build_design_system(plant: PlantModel, bounds: DelayBounds, rho: float,
                        norm_bound: float = 1e3) -> LmiSystem:
    """Gain-design system: feasibility yields K = -R^{-1} S'.

    Constraint blocks (10 in total): positivity of P, W1, W2, Z1, Z2, R;
    the coupling matrix; the two delay-vertex inequalities; and the
    supply-rate stabilization block parameterized by the scalar rho.
    """
    n, m, p = plant.n, plant.m, plant.p
    layout = DecisionLayout((
        VariableSpec("P", 3 * n, 3 * n, symmetric=True, psd=True),
        VariableSpec("W1", n, n, symmetric=True, psd=True),
        VariableSpec("W2", n, n, symmetric=True, psd=True),
        VariableSpec("Z1", n, n, symmetric=True, psd=True),
        VariableSpec("Z2", n, n, symmetric=True, psd=True),
        VariableSpec("R", m, m, symmetric=True, psd=True),
        VariableSpec("Q", p, p, symmetric=True, psd=False),
        VariableSpec("S", p, m),
        VariableSpec("X", 2 * n, 2 * n),
        VariableSpec("t", 1, 1, symmetric=True),
    ))
    selectors = build_selectors(n, m, bounds, plant)
    constraints: list[tuple[str, AffineMatrixExpr]] = [
        _positivity(name, layout.spec(name).rows) for name in ("P", "W1", "W2", "Z1", "Z2", "R")
    ]
    constraints.append(("coupling", build_psi_z(n)))
    constraints.extend(_vertex_constraints(plant, bounds, selectors, build_upsilon(plant)))
    # stabilization block:
    #   -[[Q + He(S rho 1_{m x p}), rho 1_{p x m} R], [R rho 1_{m x p}, -R]] >= t I
    ones_pm = np.ones((p, m))
    U1 = _column_selector(2, [p, m], 0)
    U2 = _column_selector(2, [p, m], 1)
    stab = AffineMatrixExpr.zeros(p + m)
    stab = stab.with_term("Q", -U1, U1)
    stab = stab.with_term("S", -U1, U1 @ (rho * ones_pm), symmetrize=True)
    stab = stab.with_term("R", -U1 @ (rho * ones_pm), U2, symmetrize=True)
    stab = stab.with_term("R", U2, U2)
    constraints.append(("stabilization", stab))
    return LmiSystem(layout, tuple(constraints), norm_bound)


def build_analysis_system(plant: PlantModel, bounds: DelayBounds, gain,
                          norm_bound: float = 1e3) -> LmiSystem:
    """Certification system for a fixed gain: S = -K', R = I substituted as constants.

    The stabilization block uses a free multiplier L_s of shape (p+m) x m
    instead of the scalar-rho parameterization of the design system.
    """
    n, m, p = plant.n, plant.m, plant.p
    K = np.asarray(gain, float)
    if K.shape != (m, p):
        raise ValueError(f"gain must be {m} x {p}, got {K.shape}")
    layout = DecisionLayout((
        VariableSpec("P", 3 * n, 3 * n, symmetric=True, psd=True),
        VariableSpec("W1", n, n, symmetric=True, psd=True),
        VariableSpec("W2", n, n, symmetric=True, psd=True),
        VariableSpec("Z1", n, n, symmetric=True, psd=True),
        VariableSpec("Z2", n, n, symmetric=True, psd=True),
        VariableSpec("Q", p, p, symmetric=True, psd=False),
        VariableSpec("X", 2 * n, 2 * n),
        VariableSpec("Ls", p + m, m),
        VariableSpec("t", 1, 1, symmetric=True),
    ))
    selectors = build_selectors(n, m, bounds, plant)
    constraints: list[tuple[str, AffineMatrixExpr]] = [
        _positivity(name, layout.spec(name).rows) for name in ("P", "W1", "W2", "Z1", "Z2")
    ]
    constraints.append(("coupling", build_psi_z(n)))
    constraints.extend(_vertex_constraints(plant, bounds, selectors, build_upsilon(plant, K)))
    # stabilization: -(M_d + Ls Cs + Cs' Ls') >= t I with M_d, Cs constant
    S = -K.T
    R = np.eye(m)
    Md = np.block([[np.zeros((p, p)), S], [S.T, R]])
    Cs = np.hstack([S.T, R])   # m x (p+m)
    U1 = _column_selector(2, [p, m], 0)
    stab = AffineMatrixExpr(p + m, -Md)
    stab = stab.with_term("Q", -U1, U1)
    stab = stab.with_term("Ls", -np.eye(p + m), Cs.T, symmetrize=True)
    constraints.append(("stabilization", stab))
    return LmiSystem(layout, tuple(constraints), norm_bound)


def evaluate_constraints(system: LmiSystem, values: Mapping[str, np.ndarray]) -> dict[str, float]:
    """Minimum eigenvalue of every named constraint at the given assignment."""
    out = {}
    for name, expr in system.constraints:
        M = expr.evaluate(values)
        M = 0.5 * (M + M.T)
        out[name] = float(np.linalg.eigvalsh(M)[0])
    return out
