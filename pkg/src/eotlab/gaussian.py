"""Closed forms for entropic transport between one-dimensional Gaussians.

Quadratic cost ``½(x − y)²`` and entropy ``∫ρ ln ρ`` of the plan. The optimal
entropic plan between ``N(m0, s0²)`` and ``N(m1, s1²)`` is Gaussian with
cross-covariance ``C`` solving ``ε C = s0² s1² − C²``.
"""
from __future__ import annotations

import numpy as np


def cross_covariance(eps: float, s0: float = 1.0, s1: float = 1.0) -> float:
    return float(0.5 * (np.sqrt(eps ** 2 + 4 * s0 ** 2 * s1 ** 2) - eps))


def cost_term(eps: float, s0: float = 1.0, s1: float = 1.0, dm: float = 0.0) -> float:
    C = cross_covariance(eps, s0, s1)
    return 0.5 * (s0 ** 2 + s1 ** 2 - 2 * C + dm ** 2)


def plan_entropy(eps: float, s0: float = 1.0, s1: float = 1.0) -> float:
    C = cross_covariance(eps, s0, s1)
    return float(-np.log(2 * np.pi * np.e) - 0.5 * np.log(s0 ** 2 * s1 ** 2 - C ** 2))


def ot_eps(eps: float, s0: float = 1.0, s1: float = 1.0, dm: float = 0.0) -> float:
    return cost_term(eps, s0, s1, dm) + eps * plan_entropy(eps, s0, s1)


def ot0(s0: float = 1.0, s1: float = 1.0, dm: float = 0.0) -> float:
    return 0.5 * ((s0 - s1) ** 2 + dm ** 2)


def suboptimality(eps: float, s0: float = 1.0, s1: float = 1.0) -> float:
    return cost_term(eps, s0, s1) - ot0(s0, s1)


def w2_sq_to_optimal(eps: float, s0: float = 1.0, s1: float = 1.0) -> float:
    """``W₂²(γ_ε, γ₀)`` where γ₀ is the degenerate plan on the graph of ``x ↦ (s1/s0) x``.

    For a rank-one ``Σ₀ = wwᵀ`` the Bures formula reduces to
    ``tr Σ_ε + ‖w‖² − 2 √(wᵀ Σ_ε w)``.
    """
    C = cross_covariance(eps, s0, s1)
    S = np.array([[s0 ** 2, C], [C, s1 ** 2]])
    w = np.array([s0, s1])
    return float(np.trace(S) + w @ w - 2 * np.sqrt(w @ S @ w))


def entropy(s: float) -> float:
    """``∫ρ ln ρ`` of ``N(0, s²)``."""
    return float(-0.5 * np.log(2 * np.pi * np.e * s ** 2))
