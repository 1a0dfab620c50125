"""Scalar functionals of plans and potentials."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy.special import xlogy

from .costs import CostModel
from .measures import GridMeasure, entropy_lebesgue
from .solvers import Plan, Potentials, sinkhorn

GAP_SLACK = 1e-9


class QuantityError(ValueError):
    pass


@dataclass
class QuantityRecord:
    eps: float
    ot_eps: float
    cost_term: float
    plan_entropy: float
    suboptimality: float
    c_eps: float
    w2_to_opt: float
    h_m: float
    envelope_residual: float | None = None
    converged: bool = True
    iterations: int = 0
    w2_truncated_mass: float = 0.0
    error: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def cost_term(p: Plan, c: CostModel, C: np.ndarray | None = None) -> float:
    """``(c, γ) = Σ c(xᵢ, yⱼ) γᵢⱼ``."""
    if C is None:
        C = c.matrix(p.source.nodes, p.target.nodes)
    return float(np.sum(C * p.coupling))


def plan_entropy_lebesgue(p: Plan) -> float:
    """``H(γ|ℋ^{2d}) = Σ γᵢⱼ ln(γᵢⱼ / vol)`` for the piecewise-constant density."""
    g = p.coupling
    return float(xlogy(g, g).sum() - math.log(p.product_cell_volume) * g.sum())


def mean_entropy(mu0: GridMeasure, mu1: GridMeasure) -> float:
    """``H_m = ½(H(μ₀) + H(μ₁))``."""
    return 0.5 * (entropy_lebesgue(mu0) + entropy_lebesgue(mu1))


def ot_value(p: Plan, c: CostModel, eps: float, C: np.ndarray | None = None) -> float:
    return cost_term(p, c, C) + eps * plan_entropy_lebesgue(p)


def schrodinger_value(p: Plan, c: CostModel, eps: float, C: np.ndarray | None = None) -> float:
    """``H(γ | m_ε)`` for the Gibbs reference ``m_ε = (2πε)^{-d/2} e^{-c/ε}``.

    Evaluated through the algebraic decomposition
    ``H(γ) + (c, γ)/ε + (d/2) ln(2πε)``; ``m_ε`` is not a finite measure.
    """
    if not eps > 0:
        raise QuantityError(f"eps must be positive, got {eps}")
    d = p.dim
    return plan_entropy_lebesgue(p) + cost_term(p, c, C) / eps + 0.5 * d * math.log(2 * math.pi * eps)


def duality_gap_field(c: CostModel, pot: Potentials, mu0: GridMeasure, mu1: GridMeasure,
                      slack: float = GAP_SLACK, C: np.ndarray | None = None) -> np.ndarray:
    """``E(x, y) = c(x, y) − φ(x) − ψ(y)`` on the node grid; nonnegative for feasible potentials."""
    if not np.isfinite(pot.conjugacy_residual):
        raise QuantityError("potentials have a non-finite conjugacy residual")
    if C is None:
        C = c.matrix(mu0.nodes, mu1.nodes)
    E = C - pot.phi[:, None] - pot.psi[None, :]
    lo = float(E.min())
    if lo < -slack:
        i, j = np.unravel_index(int(np.argmin(E)), E.shape)
        raise QuantityError(f"potentials infeasible: E = {lo:.3e} at node pair ({i}, {j})")
    return E


def suboptimality(p: Plan, E: np.ndarray) -> float:
    """``∫E dγ``; equals ``(c, γ) − OT₀`` when E comes from optimal potentials."""
    if E.shape != p.coupling.shape:
        raise QuantityError(f"gap field shape {E.shape} does not match plan {p.coupling.shape}")
    return float(np.sum(E * p.coupling))


def envelope_residual(instance, eps: float, h: float | None = None,
                      marginal_tol: float = 1e-10, C: np.ndarray | None = None,
                      init: tuple | None = None, max_iter: int = 100_000) -> float:
    """``|(OT_{ε+h} − OT_{ε−h}) / 2h − H(γ_ε)|`` from three Sinkhorn solves."""
    if h is None:
        h = eps / 20
    if not 0 < h < eps / 4:
        raise QuantityError(f"need 0 < h < eps/4, got h={h}, eps={eps}")
    mu0, mu1, c = instance.mu0, instance.mu1, instance.cost
    if C is None:
        C = c.matrix(mu0.nodes, mu1.nodes)
    vals = {}
    for e in (eps, eps + h, eps - h):
        p, pot = sinkhorn(mu0, mu1, c, e, marginal_tol=marginal_tol, max_iter=max_iter,
                          C=C, init=init)
        init = (pot.phi, pot.psi)
        vals[e] = (ot_value(p, c, e, C), plan_entropy_lebesgue(p))
    fd = (vals[eps + h][0] - vals[eps - h][0]) / (2 * h)
    return abs(fd - vals[eps][1])
