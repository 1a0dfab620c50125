"""Entropic (log-domain Sinkhorn) and exact transport solvers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._lp import LPError, transport_lp
from .costs import CostModel
from .measures import GridMeasure

log = logging.getLogger(__name__)

LP_BUDGET = 4_000_000
DUAL_MONOTONE_TOL = 1e-12


class SolverError(RuntimeError):
    pass


class SinkhornConvergenceError(SolverError):
    def __init__(self, marginal_error: float, iterations: int):
        super().__init__(f"Sinkhorn stopped after {iterations} iterations "
                         f"with L1 marginal error {marginal_error:.3e}")
        self.marginal_error = marginal_error
        self.iterations = iterations


@dataclass(eq=False)
class Plan:
    """A coupling between two grid measures (rows: source nodes, columns: target nodes)."""

    coupling: np.ndarray
    source: GridMeasure
    target: GridMeasure
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.coupling, dtype=float)
        if g.shape != (self.source.size, self.target.size):
            raise SolverError(f"coupling shape {g.shape} does not match marginals "
                              f"({self.source.size}, {self.target.size})")
        if np.any(g < 0):
            raise SolverError("coupling has negative entries")
        if abs(g.sum() - 1.0) > 1e-10:
            raise SolverError(f"coupling mass is {g.sum():.15g}")
        self.coupling = g

    @property
    def product_cell_volume(self) -> float:
        return self.source.cell_volume * self.target.cell_volume

    @property
    def dim(self) -> int:
        return self.source.dim

    def marginal_error(self) -> float:
        """L1 defect of both marginals."""
        g = self.coupling
        return float(np.abs(g.sum(1) - self.source.weights).sum()
                     + np.abs(g.sum(0) - self.target.weights).sum())

    def atoms(self, floor: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Support points ``(x, y) ∈ ℝ^{2d}`` with mass above ``floor`` and their masses."""
        i, j = np.nonzero(self.coupling > floor)
        z = np.hstack([self.source.nodes[i], self.target.nodes[j]])
        return z, self.coupling[i, j]


@dataclass(eq=False)
class Potentials:
    """Dual pair with ``φ(x) + ψ(y) ≤ c(x, y)`` up to solver slack."""

    phi: np.ndarray
    psi: np.ndarray
    conjugacy_residual: float

    def dual_value(self, mu0: GridMeasure, mu1: GridMeasure) -> float:
        return float(self.phi @ mu0.weights + self.psi @ mu1.weights)


def _balance(phi, psi, a, b):
    s = 0.5 * (phi @ a - psi @ b)
    return phi - s, psi + s


def c_transform(C: np.ndarray, psi: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """``φᵢ = min_j (Cᵢⱼ − ψⱼ)`` over the columns selected by ``mask``."""
    M = C - psi[None, :]
    if mask is not None:
        M = np.where(mask[None, :], M, np.inf)
    return M.min(axis=1)


def conjugacy_residual(C, phi, psi, a, b) -> float:
    """``max(‖φ − ψ^c‖∞, ‖ψ − φ^c‖∞)`` over the nodes carrying mass."""
    r0 = np.abs(phi - c_transform(C, psi, b > 0))[a > 0]
    r1 = np.abs(psi - c_transform(C.T, phi, a > 0))[b > 0]
    return float(max(r0.max(initial=0.0), r1.max(initial=0.0)))


def _lse_rows(K: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """``log Σⱼ exp(K[i, j] + shift[j])`` for every row i."""
    M = K + shift[None, :]
    m = M.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.exp(M - m[:, None]).sum(axis=1))


def sinkhorn(mu0: GridMeasure, mu1: GridMeasure, c: CostModel, eps: float,
             marginal_tol: float = 1e-9, max_iter: int = 100_000,
             init: tuple[np.ndarray, np.ndarray] | None = None,
             C: np.ndarray | None = None, track_dual: bool = False):
    """Entropic OT by log-domain Sinkhorn.

    Solves ``min ⟨C, γ⟩ + ε Σ γ ln(γ / (a ⊗ b))`` over couplings of the two
    weight vectors; on a grid the minimizer coincides with the one for the
    Lebesgue reference. The returned potentials satisfy
    ``γᵢⱼ = aᵢ bⱼ exp((φᵢ + ψⱼ − Cᵢⱼ)/ε)`` and ``Σφa = Σψb``.

    Stops when the L1 defect of both marginals is at most ``marginal_tol``.
    """
    if not eps > 0:
        raise SolverError(f"eps must be positive, got {eps}")
    if mu0.dim != mu1.dim:
        raise SolverError("marginals live in different dimensions")
    a, b = mu0.weights, mu1.weights
    if C is None:
        C = c.matrix(mu0.nodes, mu1.nodes)
    with np.errstate(divide="ignore"):
        loga, logb = np.log(a), np.log(b)
    K = -C / eps
    KT = np.ascontiguousarray(K.T)
    if init is None:
        f = np.zeros(a.size)
        g = np.zeros(b.size)
    else:
        f, g = (np.array(v, dtype=float) for v in init)
    dual_hist = []
    err = np.inf
    it = 0
    lse_r = _lse_rows(K, g / eps + logb)
    while True:
        # columns are exact after each g-step; rows give the current defect
        with np.errstate(over="ignore"):
            row = np.exp(loga + f / eps + lse_r)
        err = float(np.abs(row - a).sum())
        if it > 0 and err <= marginal_tol:
            break
        if it >= max_iter or (it > 0 and not np.isfinite(err)):
            raise SinkhornConvergenceError(err, it)
        f = -eps * lse_r
        f[a == 0] = 0.0
        g = -eps * _lse_rows(KT, f / eps + loga)
        g[b == 0] = 0.0
        f, g = _balance(f, g, a, b)
        it += 1
        if track_dual:
            dual_hist.append(float(f @ a + g @ b))
        lse_r = _lse_rows(K, g / eps + logb)
    logP = (f / eps + loga)[:, None] + (g / eps + logb)[None, :] + K
    P = np.exp(logP)
    P /= P.sum()
    plan = Plan(P, mu0, mu1, info={"iterations": it, "marginal_error": err, "eps": eps,
                                   "dual_history": np.array(dual_hist)})
    pot = Potentials(f, g, conjugacy_residual(C, f, g, a, b))
    return plan, pot


def exact_ot_1d(mu0: GridMeasure, mu1: GridMeasure, c: CostModel):
    """Monotone (north-west corner) coupling; optimal for the quadratic cost on the line."""
    if mu0.dim != 1 or mu1.dim != 1 or c.label != "quadratic":
        raise SolverError("exact_ot_1d handles one-dimensional quadratic instances only; "
                          "use exact_ot_lp for other costs or dimensions")
    x, y = mu0.axes[0], mu1.axes[0]
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    a, b = mu0.weights[ox], mu1.weights[oy]
    ca = np.concatenate([[0.0], np.cumsum(a)])
    cb = np.concatenate([[0.0], np.cumsum(b)])
    ca[-1] = cb[-1] = 1.0
    cuts = np.unique(np.concatenate([ca, cb]))
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    mass = np.diff(cuts)
    i = np.clip(np.searchsorted(ca, mid, side="right") - 1, 0, a.size - 1)
    j = np.clip(np.searchsorted(cb, mid, side="right") - 1, 0, b.size - 1)
    G = np.zeros((mu0.size, mu1.size))
    np.add.at(G, (ox[i], oy[j]), mass)
    G /= G.sum()
    value = float(np.sum(G * c.matrix(mu0.nodes, mu1.nodes)))
    return Plan(G, mu0, mu1, info={"method": "monotone"}), value


def monotone_potentials(mu0: GridMeasure, mu1: GridMeasure, c: CostModel,
                        C: np.ndarray | None = None) -> Potentials:
    """Dual pair of the monotone coupling on the line.

    Duals are propagated along the north-west corner staircase
    (``φᵢ + ψⱼ = Cᵢⱼ`` on every staircase cell), which spans all rows and
    columns; for a cost with the Monge property they are feasible. A
    c-transform pass then makes them conjugate on the supports.
    """
    if mu0.dim != 1 or mu1.dim != 1:
        raise SolverError("monotone_potentials is one-dimensional")
    if C is None:
        C = c.matrix(mu0.nodes, mu1.nodes)
    a, b = mu0.weights, mu1.weights
    ox, oy = np.argsort(mu0.axes[0], kind="stable"), np.argsort(mu1.axes[0], kind="stable")
    Cs = C[np.ix_(ox, oy)]
    ca, cb = np.cumsum(a[ox]), np.cumsum(b[oy])
    n, m = len(ca), len(cb)
    u, v = np.zeros(n), np.zeros(m)
    i = j = 0
    v[0] = Cs[0, 0]
    while i < n - 1 or j < m - 1:
        if j == m - 1 or (i < n - 1 and ca[i] <= cb[j]):
            i += 1
            u[i] = Cs[i, j] - v[j]
        else:
            j += 1
            v[j] = Cs[i, j] - u[i]
    phi, psi = np.empty(n), np.empty(m)
    phi[ox], psi[oy] = u, v
    phi = c_transform(C, psi, b > 0)
    psi = c_transform(C.T, phi, a > 0)
    phi, psi = _balance(phi, psi, a, b)
    return Potentials(phi, psi, conjugacy_residual(C, phi, psi, a, b))


def exact_ot_lp(mu0: GridMeasure, mu1: GridMeasure, c: CostModel,
                lp_budget: int = LP_BUDGET, C: np.ndarray | None = None):
    """Exact discrete OT with a certified dual pair.

    The simplex duals go through one c-transform pass (φ ← ψ^c, ψ ← φ^c),
    which keeps feasibility and optimality and makes them mutually
    c-conjugate on the grid.
    """
    if mu0.size * mu1.size > lp_budget:
        raise SolverError(f"instance of size {mu0.size}x{mu1.size} exceeds lp_budget={lp_budget}")
    a, b = mu0.weights, mu1.weights
    if C is None:
        C = c.matrix(mu0.nodes, mu1.nodes)
    try:
        G, u, v = transport_lp(a, b, C)
    except LPError as exc:
        raise SolverError(str(exc)) from exc
    G = np.clip(G, 0.0, None)
    G /= G.sum()
    phi = c_transform(C, v, b > 0)
    psi = c_transform(C.T, phi, a > 0)
    phi, psi = _balance(phi, psi, a, b)
    primal = float(np.sum(G * C))
    dual = float(phi @ a + psi @ b)
    E = C - phi[:, None] - psi[None, :]
    slack = float(E[G > 0].max(initial=0.0))
    info = {"method": "network_simplex", "primal": primal, "dual": dual,
            "duality_gap": primal - dual, "complementary_slackness": slack,
            "min_gap": float(E.min())}
    pot = Potentials(phi, psi, conjugacy_residual(C, phi, psi, a, b))
    return Plan(G, mu0, mu1, info=info), pot, primal


def exact_plan(mu0: GridMeasure, mu1: GridMeasure, c: CostModel):
    """Reference γ₀ and OT₀: monotone coupling for 1D quadratic, LP otherwise."""
    if mu0.dim == 1 and c.label == "quadratic":
        return exact_ot_1d(mu0, mu1, c)
    plan, _, value = exact_ot_lp(mu0, mu1, c)
    return plan, value


def lp_solution_unique(mu0: GridMeasure, mu1: GridMeasure, c: CostModel,
                       scale: float = 1e-9, trials: int = 3, seed: int = 0,
                       tol: float = 1e-6) -> bool:
    """Heuristic uniqueness test: the optimal plan survives random cost perturbations."""
    C = c.matrix(mu0.nodes, mu1.nodes)
    base, _, _ = exact_ot_lp(mu0, mu1, c, C=C)
    rng = np.random.default_rng(seed)
    span = max(float(np.ptp(C)), 1.0)
    for _ in range(trials):
        Cp = C + scale * span * rng.standard_normal(C.shape)
        other, _, _ = exact_ot_lp(mu0, mu1, c, C=Cp)
        if np.abs(other.coupling - base.coupling).sum() > tol:
            return False
    return True


def kantorovich_potentials(mu0: GridMeasure, mu1: GridMeasure, c: CostModel,
                           method: str = "lp", eps: float | None = None,
                           lp_budget: int = LP_BUDGET) -> Potentials:
    """Kantorovich potentials from the LP, the 1D staircase or a small-ε Sinkhorn solve.

    ``sinkhorn_limit`` runs Sinkhorn at ``eps`` (default ``1e-3·diam²`` of the
    joint support) and then applies an exact c-transform pass so that the
    returned pair is feasible.
    """
    C = c.matrix(mu0.nodes, mu1.nodes)
    a, b = mu0.weights, mu1.weights
    if method == "monotone":
        return monotone_potentials(mu0, mu1, c, C)
    if method == "lp":
        return exact_ot_lp(mu0, mu1, c, lp_budget=lp_budget, C=C)[1]
    if method != "sinkhorn_limit":
        raise SolverError(f"unknown method {method!r}")
    if eps is None:
        pts = np.vstack([mu0.nodes, mu1.nodes])
        diam = float(np.linalg.norm(pts.max(0) - pts.min(0)))
        eps = 1e-3 * diam ** 2
    _, pot = sinkhorn(mu0, mu1, c, eps, marginal_tol=1e-9, C=C)
    phi = c_transform(C, pot.psi, b > 0)
    psi = c_transform(C.T, phi, a > 0)
    phi, psi = _balance(phi, psi, a, b)
    return Potentials(phi, psi, conjugacy_residual(C, phi, psi, a, b))


@dataclass(frozen=True)
class AffineMap:
    """``T(x) = m1 + A(x − m0)`` with ``A`` symmetric positive definite (a Brenier map).

    ``T = ∇f`` for ``f(x) = ½(x − m0)ᵀA(x − m0) + m1·x``.
    """

    m0: np.ndarray
    m1: np.ndarray
    A: np.ndarray

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.m1 + (x - self.m0) @ self.A.T

    def potential(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float) - self.m0
        return 0.5 * np.einsum("...i,ij,...j->...", z, self.A, z) + np.asarray(x) @ self.m1

    def conjugate(self, y) -> np.ndarray:
        """Legendre transform ``f*(y) = ½(y − m1)ᵀA⁻¹(y − m1) + m0·(y − m1)``."""
        z = np.asarray(y, dtype=float) - self.m1
        Ainv = np.linalg.inv(self.A)
        return 0.5 * np.einsum("...i,ij,...j->...", z, Ainv, z) + z @ self.m0

    def duality_gap(self, X, Y) -> np.ndarray:
        """Quadratic-cost gap ``E(x, y) = f(x) + f*(y) − ⟨x, y⟩`` as a matrix over node arrays."""
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        Y = np.asarray(Y, dtype=float).reshape(len(Y), -1)
        return self.potential(X)[:, None] + self.conjugate(Y)[None, :] - X @ Y.T


def _check_spd(S, name):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-12):
        raise SolverError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(S).min() <= 0:
        raise SolverError(f"{name} is not positive definite")
    return S


def _spd_sqrt(S):
    w, V = np.linalg.eigh(S)
    return (V * np.sqrt(w)) @ V.T


def brenier_gaussian(m0, S0, m1, S1) -> AffineMap:
    """Brenier map between ``N(m0, S0)`` and ``N(m1, S1)``.

    ``A = S0^{-1/2} (S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}``.
    """
    S0 = _check_spd(S0, "S0")
    S1 = _check_spd(S1, "S1")
    r0 = _spd_sqrt(S0)
    r0i = np.linalg.inv(r0)
    mid = _spd_sqrt(r0 @ S1 @ r0)
    A = r0i @ mid @ r0i
    A = 0.5 * (A + A.T)
    return AffineMap(np.atleast_1d(np.asarray(m0, dtype=float)),
                     np.atleast_1d(np.asarray(m1, dtype=float)), A)


__all__ = [
    "AffineMap", "LPError", "Plan", "Potentials", "SinkhornConvergenceError", "SolverError",
    "brenier_gaussian", "c_transform", "conjugacy_residual", "exact_ot_1d", "exact_ot_lp",
    "exact_plan", "kantorovich_potentials", "lp_solution_unique", "monotone_potentials",
    "sinkhorn"
]
