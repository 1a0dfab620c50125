"""Transport costs with analytic mixed derivatives, twist checks and the τ(r) modulus."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

TWIST_FLOOR = 1e-8


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class CostModel:
    """A C² cost on ℝ^d × ℝ^d.

    ``fn(x, y)`` and ``cross_fn(x, y)`` broadcast over leading axes; points
    carry their coordinates in the last axis. ``cross_fn`` returns the
    matrix ``(∂²c/∂xᵢ∂yⱼ)ᵢⱼ`` in the last two axes.
    """

    dim: int
    fn: Callable
    cross_fn: Callable
    label: str

    def eval(self, x, y) -> np.ndarray:
        return self.fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def cross_derivative(self, x, y) -> np.ndarray:
        return self.cross_fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def matrix(self, X, Y) -> np.ndarray:
        """Cost matrix ``C[i, j] = c(X[i], Y[j])`` for node arrays of shape (n, d), (m, d)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        Y = np.asarray(Y, dtype=float).reshape(-1, self.dim)
        return self.eval(X[:, None, :], Y[None, :, :])

    def cross_derivative_joint(self, z) -> np.ndarray:
        """Cross derivative at joint points ``z = (x, y)`` of shape (..., 2d)."""
        z = np.asarray(z, dtype=float)
        return self.cross_derivative(z[..., : self.dim], z[..., self.dim:])


def quadratic_cost(d: int = 1) -> CostModel:
    """``c(x, y) = ½‖x − y‖²``; the mixed derivative is ``−I``."""
    if d < 1:
        raise CostError(f"dimension must be >= 1, got {d}")

    def fn(x, y):
        return 0.5 * np.sum((x - y) ** 2, axis=-1)

    def cross(x, y):
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        return np.broadcast_to(-np.eye(d), shape + (d, d)).copy()

    return CostModel(d, fn, cross, "quadratic")


def cosh_cost() -> CostModel:
    """``c(x, y) = cosh(x − y) − 1`` on the line; ``∂²c/∂x∂y = −cosh(x − y) ≤ −1``."""

    def fn(x, y):
        return np.cosh(x[..., 0] - y[..., 0]) - 1.0

    def cross(x, y):
        return -np.cosh(x[..., 0] - y[..., 0])[..., None, None]

    return CostModel(1, fn, cross, "cosh")


def quartic_cost() -> CostModel:
    """``c(x, y) = ¼(x − y)⁴``: degenerate on the diagonal (not twisted)."""

    def fn(x, y):
        return 0.25 * (x[..., 0] - y[..., 0]) ** 4

    def cross(x, y):
        return (-3.0 * (x[..., 0] - y[..., 0]) ** 2)[..., None, None]

    return CostModel(1, fn, cross, "quartic")


COSTS = {"quadratic": quadratic_cost, "cosh": cosh_cost}


def cost_from_label(label: str, d: int = 1) -> CostModel:
    if label == "quadratic":
        return quadratic_cost(d)
    if label == "cosh":
        if d != 1:
            raise CostError("the cosh cost is one-dimensional")
        return cosh_cost()
    raise CostError(f"unknown cost {label!r}; choose from {sorted(COSTS)}")


def cross_derivative_fd_error(c: CostModel, box, n_points: int = 100, seed: int = 0,
                              step: float = 1e-4) -> float:
    """Max entrywise gap between the analytic mixed derivative and central differences."""
    lo, hi = _joint_box(c, box)
    rng = np.random.default_rng(seed)
    z = lo + (hi - lo) * rng.random((n_points, 2 * c.dim))
    x, y = z[:, : c.dim], z[:, c.dim:]
    d = c.dim
    fd = np.empty((n_points, d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        for j in range(d):
            ej = np.zeros(d)
            ej[j] = step
            fd[:, i, j] = (c.eval(x + ei, y + ej) - c.eval(x + ei, y - ej)
                           - c.eval(x - ei, y + ej) + c.eval(x - ei, y - ej)) / (4 * step ** 2)
    return float(np.max(np.abs(fd - c.cross_derivative(x, y))))


def _joint_box(c: CostModel, box) -> tuple[np.ndarray, np.ndarray]:
    """Accept a box for X (d rows, used for both factors) or for X × Y (2d rows)."""
    box = np.atleast_2d(np.asarray(box, dtype=float))
    if box.shape == (c.dim, 2):
        box = np.vstack([box, box])
    if box.shape != (2 * c.dim, 2):
        raise CostError(f"box must have shape ({c.dim}, 2) or ({2 * c.dim}, 2), got {box.shape}")
    return box[:, 0], box[:, 1]


def sample_grid(c: CostModel, box, n_samples: int) -> np.ndarray:
    """Regular grid of at least ``n_samples`` joint points ``(x, y)`` in the box.

    The same abscissae are used on every axis with equal bounds, so the
    diagonal ``x = y`` is sampled exactly on square boxes.
    """
    lo, hi = _joint_box(c, box)
    m = int(np.ceil(n_samples ** (1.0 / (2 * c.dim)) - 1e-9))
    m = max(m, 2)
    axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass(frozen=True)
class TwistCertificate:
    min_abs_det: float
    is_twisted: bool
    argmin: tuple
    n_samples: int
    twist_floor: float


def twist_certificate(c: CostModel, box, n_samples: int = 400,
                      twist_floor: float = TWIST_FLOOR) -> TwistCertificate:
    """Sampled minimum of ``|det ∇²ₓᵧc|`` over the box."""
    if n_samples < 100:
        raise CostError(f"n_samples must be >= 100, got {n_samples}")
    z = sample_grid(c, box, n_samples)
    dets = np.abs(np.linalg.det(c.cross_derivative_joint(z)))
    k = int(np.argmin(dets))
    return TwistCertificate(float(dets[k]), bool(dets[k] > twist_floor),
                            tuple(float(v) for v in z[k]), len(z), twist_floor)


@dataclass(frozen=True)
class TauEstimate:
    """Largest observed ``‖A(z′)⁻¹A(z) − I‖₂`` over sampled pairs with ‖z − z′‖ ≤ r.

    A sampled maximum, not a certified supremum.
    """

    value: float
    r: float
    n_points: int
    n_pairs: int
    argmax: tuple


class _PairTable:
    """All sampled pairs within ``r_max`` and their τ-contributions."""

    def __init__(self, c: CostModel, box, r_max: float, n_samples: int):
        z = sample_grid(c, box, n_samples)
        A = c.cross_derivative_joint(z)
        dets = np.linalg.det(A)
        bad = np.abs(dets) <= TWIST_FLOOR
        if bad.any():
            k = int(np.argmax(bad))
            raise CostError(f"singular cross derivative at (x, y) = {tuple(z[k])}")
        Ainv = np.linalg.inv(A)
        pairs = cKDTree(z).query_pairs(r_max, output_type="ndarray")
        eye = np.eye(c.dim)
        if len(pairs):
            i, j = pairs[:, 0], pairs[:, 1]
            t1 = np.linalg.norm(Ainv[j] @ A[i] - eye, ord=2, axis=(-2, -1))
            t2 = np.linalg.norm(Ainv[i] @ A[j] - eye, ord=2, axis=(-2, -1))
            dist = np.linalg.norm(z[i] - z[j], axis=1)
            val = np.maximum(t1, t2)
            order = np.argsort(dist, kind="stable")
            self.dist = dist[order]
            self.val = val[order]
            self.pairs = pairs[order]
            self.cummax = np.maximum.accumulate(self.val)
        else:
            self.dist = np.zeros(0)
            self.val = np.zeros(0)
            self.pairs = np.zeros((0, 2), dtype=int)
            self.cummax = np.zeros(0)
        self.z = z
        self.r_max = r_max

    def estimate(self, r: float) -> TauEstimate:
        if r > self.r_max * (1 + 1e-12):
            raise CostError(f"r = {r} exceeds the tabulated radius {self.r_max}")
        k = int(np.searchsorted(self.dist, r, side="right"))
        if k == 0:
            return TauEstimate(0.0, r, len(self.z), 0, ())
        best = int(np.argmax(self.val[:k]))
        i, j = self.pairs[best]
        return TauEstimate(float(self.cummax[k - 1]), r, len(self.z), k,
                           (tuple(self.z[i]), tuple(self.z[j])))


def tau_modulus_report(c: CostModel, box, r: float, n_samples: int = 2500) -> TauEstimate:
    if r < 0:
        raise CostError("r must be nonnegative")
    return _PairTable(c, box, r, n_samples).estimate(r)


def tau_modulus(c: CostModel, box, r: float, n_samples: int = 2500) -> float:
    """Sampled ``τ(r) = sup_{‖z′−z‖≤r} ‖∇²ₓᵧc(z′)⁻¹ ∇²ₓᵧc(z) − I‖₂``."""
    return tau_modulus_report(c, box, r, n_samples).value


def tau_profile(c: CostModel, box, radii, n_samples: int = 2500) -> list[TauEstimate]:
    """τ at several radii from one shared sample set (monotone in r)."""
    radii = np.asarray(radii, dtype=float)
    table = _PairTable(c, box, float(radii.max()), n_samples)
    return [table.estimate(float(r)) for r in radii]
