"""Transport instances and the named presets used by the sweep runner."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostModel, cosh_cost, quadratic_cost
from .measures import GridMeasure, from_density, from_weights, make_gaussian_grid
from .solvers import AffineMap, brenier_gaussian

DEFAULT_EPS = (0.4, 0.2, 0.1, 0.05, 0.025)
# the asymptotic regime starts later when the marginal scales are small
SMALL_EPS = (0.2, 0.1, 0.05, 0.025, 0.0125)
COMPACT_EPS = (0.05, 0.025, 0.0125, 0.00625, 0.003125)


@dataclass(eq=False)
class Instance:
    label: str
    mu0: GridMeasure
    mu1: GridMeasure
    cost: CostModel
    hypothesis: str = ""
    brenier: AffineMap | None = None
    # (s0, s1) when both marginals are centred 1D Gaussians on a quadratic cost
    gaussian: tuple | None = None
    eps_list: tuple = DEFAULT_EPS
    compute_w2: bool = True
    w2_atom_budget: int = 40_000
    notes: str = ""
    box: np.ndarray | None = field(default=None)

    @property
    def dim(self) -> int:
        return self.mu0.dim

    def working_box(self) -> np.ndarray:
        """Box in ℝ^{2d} containing both supports (rows: x coordinates, then y)."""
        if self.box is not None:
            return np.asarray(self.box, dtype=float)
        return np.vstack([self.mu0.box(), self.mu1.box()])


def gaussian1d(resolution: int = 512) -> Instance:
    mu = make_gaussian_grid(0.0, 1.0, 6.0, resolution)
    return Instance("gaussian1d", mu, mu, quadratic_cost(1), "H1/H2",
                    brenier=brenier_gaussian([0.0], [[1.0]], [0.0], [[1.0]]),
                    gaussian=(1.0, 1.0), compute_w2=False,
                    notes="N(0,1) -> N(0,1), quadratic cost")


def gaussian_lipschitz(resolution: int = 256) -> Instance:
    mu0 = make_gaussian_grid(0.0, 1.0, 6.0, resolution)
    mu1 = make_gaussian_grid(0.0, 0.25, 6.0, resolution)
    return Instance("gaussian_lipschitz", mu0, mu1, quadratic_cost(1), "H1/H2",
                    brenier=brenier_gaussian([0.0], [[1.0]], [0.0], [[0.25]]),
                    gaussian=(1.0, 0.5), eps_list=SMALL_EPS, w2_atom_budget=40_000,
                    notes="N(0,1) -> N(0,1/4), Brenier map x/2 (L = 1/2)")


def gaussian2d(resolution: int = 1024) -> Instance:
    side = int(round(np.sqrt(resolution)))
    if side * side != resolution:
        raise ValueError(f"gaussian2d needs a square node count, got {resolution}")
    S1 = np.array([[1.0, 0.0], [0.0, 0.5]])
    mu0 = make_gaussian_grid(np.zeros(2), np.eye(2), 4.0, side)
    mu1 = make_gaussian_grid(np.zeros(2), S1, 4.0, side)
    return Instance("gaussian2d", mu0, mu1, quadratic_cost(2), "H1/H2",
                    brenier=brenier_gaussian(np.zeros(2), np.eye(2), np.zeros(2), S1),
                    eps_list=(0.1, 0.05, 0.025), compute_w2=False,
                    notes="N(0,I) -> N(0,diag(1,1/2)) on a coarse 2D grid")


def _truncated_normal(mean, sd):
    def pdf(x):
        return np.exp(-0.5 * ((x[:, 0] - mean) / sd) ** 2)
    return pdf


def cosh_compact(resolution: int = 128) -> Instance:
    box = [[-1.0, 1.0]]
    mu0 = from_density(lambda x: np.ones(len(x)), box, resolution, label="uniform[-1,1]")
    mu1 = from_density(_truncated_normal(0.2, 0.6), box, resolution, label="tN(0.2,0.6^2)[-1,1]")
    return Instance("cosh_compact", mu0, mu1, cosh_cost(), "H3",
                    eps_list=COMPACT_EPS, w2_atom_budget=40_000,
                    notes="uniform[-1,1] -> truncated N(0.2, 0.36) on [-1,1], c = cosh(x-y) - 1")


def discrete2x2(resolution: int | None = None) -> Instance:
    mu = from_weights([[0.0, 1.0]], [0.5, 0.5])
    return Instance("discrete2x2", mu, mu, quadratic_cost(1), "closed form",
                    eps_list=(0.8, 0.5, 0.25), compute_w2=False, notes="two atoms {0,1}, weights (1/2,1/2)")


PRESETS = {
    "gaussian1d": gaussian1d,
    "gaussian2d": gaussian2d,
    "gaussian_lipschitz": gaussian_lipschitz,
    "cosh_compact": cosh_compact,
    "discrete2x2": discrete2x2,
}

PRESET_TARGETS = {
    "gaussian1d": ("H1/H2", "(c,g_eps) - OT0 ~ (d/2) eps; H(g_eps) = -(d/2)ln(2 pi eps) + H_m - d/2"),
    "gaussian2d": ("H1/H2", "same expansions in d = 2"),
    "gaussian_lipschitz": ("H1/H2", "W2(g_eps, g0) = Theta(sqrt eps) with Lipschitz Brenier map"),
    "cosh_compact": ("H3", "Theta(eps) suboptimality, -(d/2) ln eps entropy, W2^2 >= c eps"),
    "discrete2x2": ("closed form", "logistic solution, Schrodinger identity, envelope derivative"),
    "custom": ("user", "Gaussian pair from config keys"),
}


def custom(mean0=0.0, var0=1.0, mean1=0.0, var1=1.0, resolution: int = 512,
           half_width: float = 6.0) -> Instance:
    mu0 = make_gaussian_grid(mean0, var0, half_width, resolution)
    mu1 = make_gaussian_grid(mean1, var1, half_width, resolution)
    gauss = (float(np.sqrt(var0)), float(np.sqrt(var1))) if mean0 == mean1 == 0 else None
    return Instance("custom", mu0, mu1, quadratic_cost(1), "H1/H2",
                    brenier=brenier_gaussian([mean0], [[var0]], [mean1], [[var1]]),
                    gaussian=gauss, notes="user-defined 1D Gaussian pair")


def make_instance(name: str, resolution: int | None = None, **kwargs) -> Instance:
    if name == "custom":
        if resolution is not None:
            kwargs["resolution"] = resolution
        return custom(**kwargs)
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS) + ['custom']}")
    if resolution is None:
        return PRESETS[name]()
    return PRESETS[name](resolution)


def two_point_solution(eps: float) -> dict:
    """Closed-form entropic solution of the ``discrete2x2`` preset.

    The plan is ``[[p, q], [q, p]]`` with ``p = ½ σ(1/(2ε))`` and ``q = ½ − p``.
    """
    p = 0.5 / (1.0 + np.exp(-0.5 / eps))
    q = 0.5 - p
    cost = q
    entropy = float(2 * p * np.log(p) + 2 * q * np.log(q))
    return {"diagonal": float(p), "cost_term": float(cost), "plan_entropy": entropy,
            "ot_eps": float(cost + eps * entropy), "suboptimality": float(cost)}
