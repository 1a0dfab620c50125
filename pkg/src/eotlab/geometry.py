"""Minty coordinates, detachment inequalities, charts for twisted costs and plan distances.

Coordinates on ℝ^{2d} are stacked as ``z = (x, y)``. For the quadratic cost
``½‖x − y‖²`` Minty coordinates are ``u = (x + y)/√2``, ``v = (x − y)/√2``.
For a general twisted cost a chart centred at ``z̄`` uses
``u = ½(x − A y)``, ``v = ½(x + A y)`` with ``A = ∇²ₓᵧc(z̄)``; the chart map
multiplies these by ``α`` so that it preserves volume.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._lp import LPError, transport_lp
from .costs import CostModel, tau_profile, twist_certificate
from .measures import GridMeasure
from .quantities import plan_entropy_lebesgue
from .solvers import AffineMap, Plan

CONJ_TOL = 1e-9
CONTACT_FACTOR = 10.0
TAU_CEILING = 0.5
TAU_MARGIN = 0.4
# mixed second differences sample the cross derivative up to √2·r from a chart centre
PAIR_REACH = math.sqrt(2.0)
DEFAULT_ATOM_BUDGET = 40_000
MAX_TRUNCATED_MASS = 1e-2

# Discretization tolerance of the entropy bounds, keyed by nodes per axis.
TOL_DISC = {64: 0.03, 128: 0.02, 256: 0.01, 512: 0.005, 1024: 0.005}


def tol_disc(nodes_per_axis: int) -> float:
    keys = sorted(TOL_DISC)
    for k in keys:
        if nodes_per_axis <= k:
            return TOL_DISC[k]
    return TOL_DISC[keys[-1]]


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------- coordinates

def minty_transform(points) -> np.ndarray:
    """``(x, y) ↦ ((x + y)/√2, (x − y)/√2)`` row-wise on an ``(n, 2d)`` array."""
    z = np.atleast_2d(np.asarray(points, dtype=float))
    if z.shape[1] % 2:
        raise GeometryError(f"points must have an even number of columns, got {z.shape[1]}")
    d = z.shape[1] // 2
    x, y = z[:, :d], z[:, d:]
    return np.hstack([x + y, x - y]) / math.sqrt(2.0)


def minty_inverse(points) -> np.ndarray:
    # the transform is its own inverse
    return minty_transform(points)


@dataclass
class ViolationReport:
    checked: int
    max_violation: float
    argmax_pair: tuple
    seed: int
    extra: dict = field(default_factory=dict)

    def passed(self, slack: float) -> bool:
        return self.max_violation <= slack

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({"checked": self.checked, "max_violation": self.max_violation,
                           "argmax_pair": [list(map(int, p)) for p in self.argmax_pair],
                           "seed": self.seed})


def _report(viol: np.ndarray, pairs: list, seed: int, **extra) -> ViolationReport:
    if viol.size == 0:
        return ViolationReport(0, -math.inf, (), seed, extra)
    k = int(np.argmax(viol))
    return ViolationReport(int(viol.size), float(viol[k]), pairs[k], seed, extra)


def _sample_pairs(shape, n_pairs: int, rng, rows=None, cols=None):
    """Random index pairs ``((i, j), (i′, j′))`` over the node grid (optionally restricted)."""
    rows = np.arange(shape[0]) if rows is None else rows
    cols = np.arange(shape[1]) if cols is None else cols
    i = rng.choice(rows, size=(n_pairs, 2))
    j = rng.choice(cols, size=(n_pairs, 2))
    return i, j


def check_minty_trick(E: np.ndarray, mu0: GridMeasure, mu1: GridMeasure,
                      n_pairs: int = 10_000, seed: int = 0) -> ViolationReport:
    """Sampled check of ``E(z) + E(z′) ≥ ½(‖Δv‖² − ‖Δu‖²)`` in Minty coordinates.

    Only node pairs in the supports of both marginals are drawn. The
    reported violation is ``rhs − lhs``; nonpositive means the pair passes.
    """
    rng = np.random.default_rng(seed)
    rows = np.flatnonzero(mu0.weights > 0)
    cols = np.flatnonzero(mu1.weights > 0)
    i, j = _sample_pairs(E.shape, n_pairs, rng, rows, cols)
    X, Y = mu0.nodes, mu1.nodes
    z = np.hstack([X[i[:, 0]], Y[j[:, 0]]])
    zp = np.hstack([X[i[:, 1]], Y[j[:, 1]]])
    d = X.shape[1]
    w = minty_transform(z) - minty_transform(zp)
    du2 = np.sum(w[:, :d] ** 2, axis=1)
    dv2 = np.sum(w[:, d:] ** 2, axis=1)
    lhs = E[i[:, 0], j[:, 0]] + E[i[:, 1], j[:, 1]]
    viol = 0.5 * (dv2 - du2) - lhs
    pairs = [((int(a), int(b)), (int(c), int(e))) for a, b, c, e in
             zip(i[:, 0], j[:, 0], i[:, 1], j[:, 1])]
    return _report(viol, pairs, seed)


# -------------------------------------------------------------- contact set

@dataclass
class ContactSetEstimate:
    """Node pairs with ``E ≤ threshold``: a discrete stand-in for the optimal pairing set."""

    threshold: float
    points: np.ndarray      # (k, 2) node index pairs
    coords: np.ndarray      # (k, 2d) positions (x, y)

    def __len__(self) -> int:
        return len(self.points)


def estimate_contact_set(E: np.ndarray, mu0: GridMeasure, mu1: GridMeasure,
                         eta: float | None = None, gamma0: Plan | None = None,
                         mass_floor: float = 0.0) -> ContactSetEstimate:
    """``{E ≤ η}`` with ``η = 10·CONJ_TOL`` by default.

    When ``gamma0`` is given its support must lie in the estimate, otherwise
    the threshold is too small for the potentials at hand.
    """
    eta = CONTACT_FACTOR * CONJ_TOL if eta is None else float(eta)
    mask = E <= eta
    mask &= (mu0.weights > 0)[:, None] & (mu1.weights > 0)[None, :]
    if gamma0 is not None:
        leak = (gamma0.coupling > mass_floor) & ~mask
        if leak.any():
            i, j = np.argwhere(leak)[0]
            raise GeometryError(f"optimal plan charges ({i}, {j}) where E = {E[i, j]:.3e} > η = {eta:.1e}")
    idx = np.argwhere(mask)
    coords = np.hstack([mu0.nodes[idx[:, 0]], mu1.nodes[idx[:, 1]]])
    return ContactSetEstimate(eta, idx, coords)


# -------------------------------------------------------------------- charts

@dataclass
class Chart:
    center: np.ndarray
    radius: float
    alpha: float
    cross: np.ndarray       # ∇²ₓᵧc at the centre
    kappa: float
    tau: float = 0.0        # sampled τ over the pair reach of this chart

    @property
    def dim(self) -> int:
        return self.cross.shape[0]

    def raw_uv(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Unscaled chart coordinates ``u = ½(x − A y)``, ``v = ½(x + A y)``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        d = self.dim
        Ay = z[:, d:] @ self.cross.T
        return 0.5 * (z[:, :d] - Ay), 0.5 * (z[:, :d] + Ay)

    def map(self, z) -> np.ndarray:
        u, v = self.raw_uv(z)
        u0, v0 = self.raw_uv(self.center)
        return self.alpha * np.hstack([u - u0, v - v0])

    def jacobian(self) -> np.ndarray:
        d = self.dim
        eye = np.eye(d)
        return self.alpha * 0.5 * np.block([[eye, -self.cross], [eye, self.cross]])

    def u_operator(self) -> np.ndarray:
        """Linear part ``(x, y) ↦ α u`` of the chart's first block."""
        return self.jacobian()[: self.dim]

    def contains(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.linalg.norm(z - self.center, axis=1) <= self.radius


def chart_alpha(cross: np.ndarray) -> float:
    """``α`` with ``α^{2d} |det A| / 2^d = 1``."""
    d = cross.shape[0]
    det = abs(float(np.linalg.det(cross)))
    if det <= 0:
        raise GeometryError("cross derivative is singular at the chart centre")
    return math.sqrt(2.0 / det ** (1.0 / d))


def global_kappa(c: CostModel, box, n_samples: int = 400) -> float:
    """``κ = ¼ inf |det ∇²ₓᵧc|^{1/d}``, exact for the quadratic cost and sampled otherwise."""
    if c.label == "quadratic":
        return 0.25
    cert = twist_certificate(c, box, n_samples=n_samples)
    if not cert.is_twisted:
        raise GeometryError(f"cost is not twisted on the box (min |det| = {cert.min_abs_det:.2e})")
    return 0.25 * cert.min_abs_det ** (1.0 / c.dim)


def choose_chart_radius(c: CostModel, box, r_max: float, margin: float = TAU_MARGIN,
                        levels: int = 12, n_samples: int = 2500) -> float:
    """Largest ``r = r_max 2^{-k}`` with sampled ``τ(√2 r) ≤ margin``."""
    radii = r_max * 0.5 ** np.arange(levels)
    if c.label == "quadratic":
        return float(radii[0])
    taus = tau_profile(c, box, PAIR_REACH * radii, n_samples)
    for r, t in zip(radii, taus):
        if t.value <= margin:
            return float(r)
    raise GeometryError(f"no radius down to {radii[-1]:.3g} satisfies tau <= {margin}")


def _farthest_point_centres(points: np.ndarray, r: float) -> list[int]:
    """Greedy farthest-point cover: indices of centres such that every point is within r."""
    if len(points) == 0:
        return []
    # deterministic start: lexicographically smallest point
    start = int(np.lexsort(points.T[::-1])[0])
    centres = [start]
    dist = np.linalg.norm(points - points[start], axis=1)
    while dist.max() > r:
        k = int(np.argmax(dist))
        centres.append(k)
        dist = np.minimum(dist, np.linalg.norm(points - points[k], axis=1))
    return centres


def build_charts(c: CostModel, sigma: ContactSetEstimate, r: float, box=None,
                 n_samples: int = 2500) -> list[Chart]:
    """Ball cover of the contact set by charts of radius ``r``.

    ``τ`` is sampled at the pair reach ``√2 r`` and must not exceed ½.
    """
    if r <= 0:
        raise GeometryError("chart radius must be positive")
    if box is None:
        pts = sigma.coords
        box = np.stack([pts.min(0) - r, pts.max(0) + r], axis=1)
    box = np.asarray(box, dtype=float)
    if c.label == "quadratic":
        tau = 0.0
    else:
        tau = tau_profile(c, box, [PAIR_REACH * r], n_samples)[0].value
    if tau > TAU_CEILING:
        raise GeometryError(f"tau({PAIR_REACH * r:.3g}) = {tau:.3f} exceeds {TAU_CEILING}; "
                            f"use a smaller radius than r = {r}")
    kappa = global_kappa(c, box)
    d = c.dim
    charts = []
    for k in _farthest_point_centres(sigma.coords, r):
        z = sigma.coords[k]
        A = np.asarray(c.cross_derivative(z[:d][None], z[d:][None]), dtype=float).reshape(d, d)
        charts.append(Chart(z.copy(), float(r), chart_alpha(A), A, kappa, tau))
    return charts


def chart_partition(charts: list[Chart], z: np.ndarray) -> np.ndarray:
    """Index of the first chart containing each point, ``-1`` outside the union."""
    owner = np.full(len(z), -1, dtype=int)
    for k, ch in enumerate(charts):
        free = owner < 0
        if not free.any():
            break
        inside = ch.contains(z[free])
        idx = np.flatnonzero(free)[inside]
        owner[idx] = k
    return owner


def _grid_points(mu0: GridMeasure, mu1: GridMeasure):
    i, j = np.meshgrid(np.arange(mu0.size), np.arange(mu1.size), indexing="ij")
    i, j = i.ravel(), j.ravel()
    return i, j, np.hstack([mu0.nodes[i], mu1.nodes[j]])


def check_local_detachment(E: np.ndarray, charts: list[Chart], mu0: GridMeasure,
                           mu1: GridMeasure, n_pairs: int = 10_000,
                           seed: int = 0) -> dict:
    """Sampled check of the two chart inequalities.

    ``mixed``: ``E + E′ ≥ ‖Δv‖² − ‖Δu‖² − τ(‖Δv‖² + ‖Δu‖²)`` over node pairs in
    a common chart. ``fiber``: ``E + E′ ≥ κα²‖Δv‖² − (1 + τ)‖Δu‖²`` over pairs
    whose chart u-coordinates differ by at most one grid cell; for exact equal-u
    pairs this is the local detachment ``E + E′ ≥ κ‖Δv_chart‖²``.
    """
    rng = np.random.default_rng(seed)
    ii, jj, z = _grid_points(mu0, mu1)
    keep = (mu0.weights[ii] > 0) & (mu1.weights[jj] > 0)
    ii, jj, z = ii[keep], jj[keep], z[keep]
    Ez = E[ii, jj]
    cell = float(np.linalg.norm(np.concatenate([mu0.spacing, mu1.spacing])))
    per_chart = max(1, n_pairs // max(len(charts), 1))
    mixed_v, mixed_p, fib_v, fib_p = [], [], [], []
    for ch in charts:
        members = np.flatnonzero(ch.contains(z))
        if len(members) == 0:
            continue
        u, v = ch.raw_uv(z[members])
        a = rng.integers(len(members), size=per_chart)
        b = rng.integers(len(members), size=per_chart)
        du2 = np.sum((u[a] - u[b]) ** 2, axis=1)
        dv2 = np.sum((v[a] - v[b]) ** 2, axis=1)
        lhs = Ez[members[a]] + Ez[members[b]]
        mixed_v.append(dv2 - du2 - ch.tau * (dv2 + du2) - lhs)
        mixed_p += [((int(ii[members[p]]), int(jj[members[p]])),
                     (int(ii[members[q]]), int(jj[members[q]]))) for p, q in zip(a, b)]
        # fibre pairs: nearest neighbours in chart-u within one grid cell
        uc = ch.alpha * u
        u_tol = ch.alpha * cell * max(1.0, float(np.linalg.norm(ch.cross, 2)))
        tree = cKDTree(uc)
        nb = tree.query_ball_point(uc[a], r=u_tol)
        for p, cand in zip(a, nb):
            if not cand:
                continue
            q = cand[int(rng.integers(len(cand)))]
            du2 = float(np.sum((u[p] - u[q]) ** 2))
            dv2 = float(np.sum((v[p] - v[q]) ** 2))
            lhs = Ez[members[p]] + Ez[members[q]]
            fib_v.append(ch.kappa * ch.alpha ** 2 * dv2 - (1 + ch.tau) * du2 - lhs)
            fib_p.append(((int(ii[members[p]]), int(jj[members[p]])),
                          (int(ii[members[q]]), int(jj[members[q]]))))
    mixed = _report(np.concatenate(mixed_v) if mixed_v else np.zeros(0), mixed_p, seed)
    fiber = _report(np.asarray(fib_v), fib_p, seed)
    return {"mixed": mixed, "fiber": fiber}


def check_chart_lipschitz_graph(gamma0: Plan, charts: list[Chart], E: np.ndarray,
                                mass_floor: float = 0.0) -> ViolationReport:
    """On the optimal support inside each chart, ``(1 − τ)‖Δv‖² ≤ (1 + τ)‖Δu‖² + E + E′``.

    With ``E = 0`` on the support this is the Lipschitz-graph bound
    ``‖Δv‖ ≤ √((1 + τ)/(1 − τ)) ‖Δu‖``; all support pairs are checked.
    """
    i, j = np.nonzero(gamma0.coupling > mass_floor)
    z = np.hstack([gamma0.source.nodes[i], gamma0.target.nodes[j]])
    Ez = E[i, j]
    viol, pairs = [], []
    for ch in charts:
        m = np.flatnonzero(ch.contains(z))
        if len(m) < 2:
            continue
        u, v = ch.raw_uv(z[m])
        p, q = np.triu_indices(len(m), k=1)
        du2 = np.sum((u[p] - u[q]) ** 2, axis=1)
        dv2 = np.sum((v[p] - v[q]) ** 2, axis=1)
        viol.append((1 - ch.tau) * dv2 - (1 + ch.tau) * du2 - Ez[m[p]] - Ez[m[q]])
        pairs += [((int(i[m[a]]), int(j[m[a]])), (int(i[m[b]]), int(j[m[b]]))) for a, b in zip(p, q)]
    return _report(np.concatenate(viol) if viol else np.zeros(0), pairs, 0)


# ------------------------------------------------------------ entropy bounds

def detachment_constant(d: int) -> float:
    """``C_d = −(d/2) ln(4πe/d)``."""
    return -0.5 * d * math.log(4 * math.pi * math.e / d)


def _cic_entropy(points: np.ndarray, masses: np.ndarray, spacing: np.ndarray) -> tuple[float, float]:
    """Entropy and total variance of point masses spread by cloud-in-cell onto a lattice.

    Returns ``(∫ρ ln ρ, tr Cov)`` for the piecewise-constant density on cells of
    size ``spacing`` centred at the lattice nodes.
    """
    pts = np.atleast_2d(points)
    n, d = pts.shape
    lo = pts.min(0)
    t = (pts - lo) / spacing
    base = np.floor(t + 1e-9).astype(int)
    frac = np.clip(t - base, 0.0, 1.0)
    frac[frac < 1e-9] = 0.0
    shape = base.max(0) + 2
    grid = np.zeros(shape)
    for corner in range(2 ** d):
        bits = np.array([(corner >> k) & 1 for k in range(d)])
        w = np.prod(np.where(bits, frac, 1 - frac), axis=1) * masses
        np.add.at(grid, tuple((base + bits).T), w)
    g = grid.ravel()
    g = g / g.sum()
    vol = float(np.prod(spacing))
    pos = g > 0
    h = float(np.sum(g[pos] * np.log(g[pos] / vol)))
    mean = masses @ pts / masses.sum()
    var = float(np.sum(masses[:, None] * (pts - mean) ** 2) / masses.sum())
    return h, var


def minty_marginal_entropy(p: Plan) -> tuple[float, float]:
    """``H(μ̂)`` and ``tr Cov(μ̂)`` of the u-marginal of ``p`` in Minty coordinates."""
    d = p.dim
    z, m = p.atoms()
    u = minty_transform(z)[:, :d]
    spacing = np.minimum(p.source.spacing, p.target.spacing) / math.sqrt(2.0)
    return _cic_entropy(u, m, spacing)


def entropy_lower_bound_quadratic(p: Plan, E: np.ndarray, gamma0: Plan | None = None,
                                  w2_sq: float | None = None,
                                  atom_budget: int = DEFAULT_ATOM_BUDGET) -> dict:
    """Global detachment bounds for the quadratic cost.

    ``bound_E = −(d/2) ln ∫E dγ + H(μ̂) + C_d`` and ``bound_W`` with ``W₂²(γ, γ₀)``
    in place of ``∫E dγ``. Also reports the intermediate entropy-power links
    ``N_d(μ̂) ≤ Var(μ̂)/d`` and ``N_{2d}(γ) ≤ σ(X + Y) √(∫E dγ) / d``.
    """
    d = p.dim
    H = plan_entropy_lebesgue(p)
    int_E = float(np.sum(E * p.coupling))
    h_hat, var_hat = minty_marginal_entropy(p)
    Cd = detachment_constant(d)
    if w2_sq is None and gamma0 is not None:
        w2_sq = w2_between_plans(p, gamma0, atom_budget) ** 2

    def bound(q):
        if q is None:
            return math.nan
        if q <= 0:
            return math.inf
        return -0.5 * d * math.log(q) + h_hat + Cd

    bE, bW = bound(int_E), bound(w2_sq)
    slack = lambda b: H - b if math.isfinite(b) else math.nan
    z, m = p.atoms()
    s = z[:, :d] + z[:, d:]
    sigma_sum = math.sqrt(float(np.sum(m[:, None] * (s - m @ s) ** 2)))
    n_plan = math.exp(-H / d) / (2 * math.pi * math.e)
    n_hat = math.exp(-2 * h_hat / d) / (2 * math.pi * math.e)
    return {"entropy": H, "integral_E": int_E, "w2_sq": w2_sq, "h_hat": h_hat, "C_d": Cd,
            "bound_E": bE, "bound_W": bW, "slack_E": slack(bE), "slack_W": slack(bW),
            "entropy_power_hat": n_hat, "variance_hat_over_d": var_hat / d,
            "entropy_power_plan": n_plan,
            "chained_rhs": sigma_sum * math.sqrt(max(int_E, 0.0)) / d}


def local_bound_constant(charts: list[Chart], box: np.ndarray, cell_radius: float = 0.0) -> dict:
    """Constructive constant of the local entropy bound.

    ``C = min(m, −K₀ − ln vol(X×X)) − (d/2) ln 2 − ln(N + 1)`` with
    ``K₀ = −(d/2) ln(4πe/(κd))`` and ``m = −max_i d ln(2 r_eff ‖M_i‖)``, where
    ``M_i`` is the u-block of the chart map, so ``(2 r_eff ‖M_i‖)^d`` bounds the
    volume of a chart's u-image. ``r_eff`` adds the half cell diagonal because
    a node owns its whole cell.
    """
    if not charts:
        raise GeometryError("no charts")
    d = charts[0].dim
    kappa = charts[0].kappa
    K0 = -0.5 * d * math.log(4 * math.pi * math.e / (kappa * d))
    r_eff = charts[0].radius + cell_radius
    m = -max(d * math.log(2 * r_eff * np.linalg.norm(ch.u_operator(), 2)) for ch in charts)
    vol = float(np.prod(box[:, 1] - box[:, 0]))
    N = len(charts)
    C = min(m, -K0 - math.log(vol)) - 0.5 * d * math.log(2.0) - math.log(N + 1)
    return {"C": C, "K0": K0, "m": m, "volume": vol, "n_charts": N, "kappa": kappa}


def entropy_lower_bound_local(p: Plan, E: np.ndarray, charts: list[Chart],
                              box=None, eta: float | None = None) -> dict:
    """``H(γ) ≥ −(d/2) ln ∫E dγ + K₀ + (d/2) ln E₀ + C`` with ``E₀ = 1 ∧ min_R E``.

    R is the set of nodes outside every chart. The constant C and its
    ingredients are returned with the bound.
    """
    d = p.dim
    eta = CONTACT_FACTOR * CONJ_TOL if eta is None else eta
    src, tgt = p.source, p.target
    if box is None:
        box = np.vstack([src.box(), tgt.box()])
    box = np.asarray(box, dtype=float)
    ii, jj, z = _grid_points(src, tgt)
    owner = chart_partition(charts, z)
    carried = (src.weights[ii] > 0) & (tgt.weights[jj] > 0)
    outside = (owner < 0) & carried
    E0 = 1.0
    if outside.any():
        E0 = min(1.0, float(E[ii[outside], jj[outside]].min()))
    if E0 <= eta:
        raise GeometryError(f"E = {E0:.2e} outside the charts: the contact set leaks; "
                            "enlarge the radius or the contact threshold")
    cell_radius = 0.5 * float(np.linalg.norm(np.concatenate([src.spacing, tgt.spacing])))
    const = local_bound_constant(charts, box, cell_radius)
    H = plan_entropy_lebesgue(p)
    int_E = float(np.sum(E * p.coupling))
    if int_E <= 0:
        return {"bound": math.inf, "slack": math.nan, "E0": E0, "entropy": H, **const}
    core = -0.5 * d * math.log(int_E) + const["K0"]
    bound = core + 0.5 * d * math.log(E0) + const["C"]
    return {"bound": bound, "slack": H - bound, "core": core, "E0": E0, "entropy": H,
            "integral_E": int_E, "outside_mass": float(p.coupling.ravel()[outside].sum()), **const}


# ------------------------------------------------------------ Wasserstein

@dataclass
class W2Estimate:
    value: float
    truncated_mass: float
    atoms: tuple


def _as_atoms(m):
    if isinstance(m, Plan):
        return m.atoms()
    z, w = m
    return np.atleast_2d(np.asarray(z, dtype=float)), np.asarray(w, dtype=float)


def _truncate(z, w, budget):
    if len(w) <= budget:
        return z, w / w.sum(), 0.0
    keep = np.argsort(-w, kind="stable")[:budget]
    keep.sort()
    dropped = float(1.0 - w[keep].sum() / w.sum())
    wk = w[keep]
    return z[keep], wk / wk.sum(), dropped


def w2_atoms(a, b, atom_budget: int = DEFAULT_ATOM_BUDGET,
             max_truncated_mass: float = MAX_TRUNCATED_MASS) -> W2Estimate:
    """Exact ``W₂`` between two discrete measures on ℝ^k after keeping the heaviest atoms.

    Each argument is a ``Plan`` or a ``(points, masses)`` pair. Atoms beyond the
    budget are dropped and the rest renormalized; the dropped mass is reported.
    """
    za, wa = _as_atoms(a)
    zb, wb = _as_atoms(b)
    if za.shape[1] != zb.shape[1]:
        raise GeometryError("measures live in different dimensions")
    za, wa, ta = _truncate(za, wa, atom_budget)
    zb, wb, tb = _truncate(zb, wb, atom_budget)
    truncated = max(ta, tb)
    if truncated > max_truncated_mass:
        raise GeometryError(f"atom budget {atom_budget} drops mass {truncated:.2e} "
                            f"> {max_truncated_mass:.0e}")
    M = (np.sum(za ** 2, 1)[:, None] + np.sum(zb ** 2, 1)[None, :] - 2 * za @ zb.T)
    np.maximum(M, 0.0, out=M)
    try:
        G, _, _ = transport_lp(wa, wb, M)
    except LPError as exc:
        raise GeometryError(str(exc)) from exc
    val = float(np.sum(G * M) / G.sum())
    return W2Estimate(math.sqrt(max(val, 0.0)), truncated, (len(wa), len(wb)))


def w2_between_plans(a, b, atom_budget: int = DEFAULT_ATOM_BUDGET) -> float:
    """``W₂`` on ℝ^{2d} between two plans (or atom lists), see :func:`w2_atoms`."""
    return w2_atoms(a, b, atom_budget).value


def graph_plan_atoms(mu: GridMeasure, T) -> tuple[np.ndarray, np.ndarray]:
    """Atoms of ``(id, T)#μ``."""
    x = mu.nodes
    keep = mu.weights > 0
    return np.hstack([x[keep], np.atleast_2d(T(x[keep]))]), mu.weights[keep]


def conditional_variance(z: np.ndarray, w: np.ndarray, d: int, x_axes=None) -> float:
    """``∫ Var(ν_x) dν₀`` for atoms of ν on ℝ^{2d}, grouping by x.

    With ``x_axes`` the first coordinate block is snapped to the nearest node
    of that grid before grouping; otherwise atoms are grouped by exact x.
    """
    x, y = z[:, :d], z[:, d:]
    if x_axes is not None:
        x = np.column_stack([ax[np.clip(np.searchsorted(ax, x[:, k] - 0.5 * (ax[1] - ax[0] if len(ax) > 1 else 0)),
                                        0, len(ax) - 1)] for k, ax in enumerate(x_axes)])
    _, key = np.unique(x, axis=0, return_inverse=True)
    key = key.ravel()
    n = key.max() + 1
    mass = np.bincount(key, weights=w, minlength=n)
    total = 0.0
    for k in range(y.shape[1]):
        s1 = np.bincount(key, weights=w * y[:, k], minlength=n)
        s2 = np.bincount(key, weights=w * y[:, k] ** 2, minlength=n)
        pos = mass > 0
        total += float(np.sum(s2[pos] - s1[pos] ** 2 / mass[pos]))
    return total / float(w.sum())


def lipschitz_graph_w2_bound(nu, mu_graph, L: float, atom_budget: int = DEFAULT_ATOM_BUDGET,
                             x_axes=None) -> dict:
    """Both sides of ``(1 + L)² W₂²(μ, ν) ≥ ∫ Var(ν_x) dν₀`` for μ on an L-Lipschitz graph."""
    z, w = _as_atoms(nu)
    d = z.shape[1] // 2
    if x_axes is None and isinstance(nu, Plan):
        x_axes = nu.source.axes
    w2 = w2_atoms((z, w), _as_atoms(mu_graph), atom_budget).value
    lhs = (1 + L) ** 2 * w2 ** 2
    rhs = conditional_variance(z, w / w.sum(), d, x_axes)
    return {"lhs": lhs, "rhs": rhs, "w2": w2}


def barycentric_projection(p: Plan) -> np.ndarray:
    """``T_ε(xᵢ) = Σⱼ γᵢⱼ yⱼ / aᵢ`` (zero rows map to the target mean)."""
    a = p.coupling.sum(1)
    Y = p.target.nodes
    num = p.coupling @ Y
    out = np.tile(p.target.mean(), (len(a), 1))
    pos = a > 0
    out[pos] = num[pos] / a[pos, None]
    return out


def map_gap_bounds(p: Plan, T: AffineMap, L: float, E: np.ndarray,
                   atom_budget: int = DEFAULT_ATOM_BUDGET, compute_w2: bool = True) -> dict:
    """Chain ``W₂²(γ, graph T) ≤ ∫‖y − T(x)‖² dγ ≤ 2L ∫E dγ`` and the barycentric gap."""
    X, Y = p.source.nodes, p.target.nodes
    TX = np.atleast_2d(T(X))
    D = np.sum(TX ** 2, 1)[:, None] + np.sum(Y ** 2, 1)[None, :] - 2 * TX @ Y.T
    map_integral = float(np.sum(np.maximum(D, 0.0) * p.coupling))
    twoLE = 2 * L * float(np.sum(E * p.coupling))
    w2_sq = math.nan
    if compute_w2:
        w2_sq = w2_between_plans(p, graph_plan_atoms(p.source, T), atom_budget) ** 2
    bary = barycentric_projection(p)
    a = p.coupling.sum(1)
    bary_gap = float(np.sum(a * np.sum((bary - TX) ** 2, axis=1)))
    return {"w2_sq_upper": w2_sq, "map_integral": map_integral, "twoLE": twoLE,
            "barycentric_sq": bary_gap}
