"""Piecewise-constant probability measures on regular grids.

A :class:`GridMeasure` stores one weight per cell of an axis-aligned grid.
Every "continuous" functional is evaluated as a Riemann sum with the cell
volume correction, so the weights are read as a density ``w / cell_volume``
that is constant on each cell.

Entropy convention: ``entropy_lebesgue`` returns the relative entropy with
respect to Lebesgue measure, ``∫ ρ ln ρ``. This is the *negative* of the
Shannon differential entropy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import xlogy

WEIGHT_SUM_TOL = 1e-12
MIN_RESOLUTION = 8


class MeasureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Probability weights on the cells of a regular grid.

    ``axes[k]`` holds the cell centers along axis ``k``; weights are flattened
    in C order over the tensor grid.
    """

    axes: tuple
    weights: np.ndarray
    cell_volume: float
    truncated_mass: float = 0.0
    label: str = field(default="")

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).ravel() for a in self.axes)
        w = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "weights", w)
        if not axes:
            raise MeasureError("at least one axis is required")
        if w.size != int(np.prod([a.size for a in axes])):
            raise MeasureError(
                f"{w.size} weights for a grid of shape {self.shape}")
        if not self.cell_volume > 0:
            raise MeasureError(f"cell_volume must be positive, got {self.cell_volume}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise MeasureError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise MeasureError(f"weights sum to {w.sum():.15g}, expected 1")
        for k, a in enumerate(axes):
            if a.size > 2:
                steps = np.diff(a)
                if np.ptp(steps) > 1e-9 * max(abs(steps[0]), 1e-300):
                    raise MeasureError(f"axis {k} is not uniformly spaced")
        w.setflags(write=False)
        for a in axes:
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def spacing(self) -> np.ndarray:
        """Cell width per axis (derived from cell_volume for single-node axes)."""
        out = []
        for a in self.axes:
            out.append(a[1] - a[0] if a.size > 1 else np.nan)
        out = np.array(out)
        if np.any(np.isnan(out)):
            known = np.prod(out[~np.isnan(out)]) if np.any(~np.isnan(out)) else 1.0
            n_missing = int(np.isnan(out).sum())
            out[np.isnan(out)] = (self.cell_volume / known) ** (1.0 / n_missing)
        return out

    @property
    def nodes(self) -> np.ndarray:
        """Cell centers, shape ``(size, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def density(self) -> np.ndarray:
        return self.weights / self.cell_volume

    def box(self) -> np.ndarray:
        """Support box ``[[lo, hi], ...]`` covering the full cells."""
        h = self.spacing
        return np.array([[a[0] - hk / 2, a[-1] + hk / 2] for a, hk in zip(self.axes, h)])

    def mean(self) -> np.ndarray:
        return self.weights @ self.nodes

    def covariance(self) -> np.ndarray:
        x = self.nodes - self.mean()
        return (x * self.weights[:, None]).T @ x

    def variance(self) -> float:
        """Total variance ``E‖X − EX‖²`` (trace of the covariance)."""
        return float(np.trace(self.covariance()))


def _axis(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5), h


def from_density(density: Callable[[np.ndarray], np.ndarray], box: Sequence,
                 resolution, label: str = "") -> GridMeasure:
    """Restrict a density to the cells of ``box`` (midpoint rule) and renormalize.

    ``density`` receives node coordinates of shape ``(n, d)``.
    ``truncated_mass`` records ``1 − Σ ρ(xᵢ)·vol`` before renormalization.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    d = box.shape[0]
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (d,))
    if np.any(res < MIN_RESOLUTION):
        raise MeasureError(f"resolution must be >= {MIN_RESOLUTION}, got {tuple(res)}")
    axes, vol = [], 1.0
    for (lo, hi), n in zip(box, res):
        a, h = _axis(lo, hi, int(n))
        axes.append(a)
        vol *= h
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    rho = np.asarray(density(pts), dtype=float).ravel()
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise MeasureError("density must be finite and nonnegative on the box")
    mass = rho.sum() * vol
    if mass <= 0:
        raise MeasureError("density has no mass on the box")
    return GridMeasure(tuple(axes), rho * vol / mass, vol,
                       truncated_mass=1.0 - mass, label=label)


def make_gaussian_grid(mean, covariance, half_width_sigmas: float = 6.0,
                       resolution=512) -> GridMeasure:
    """Gaussian restricted to ``mean ± half_width_sigmas·√diag(cov)``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    d = mean.size
    if cov.shape != (d, d):
        raise MeasureError(f"covariance shape {cov.shape} does not match mean of size {d}")
    if not np.allclose(cov, cov.T, atol=1e-14):
        raise MeasureError("covariance is not symmetric")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise MeasureError("covariance is not positive definite") from exc
    prec = np.linalg.inv(cov)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    norm = -0.5 * (d * np.log(2 * np.pi) + logdet)

    def pdf(x):
        z = x - mean
        return np.exp(norm - 0.5 * np.einsum("ni,ij,nj->n", z, prec, z))

    sig = np.sqrt(np.diag(cov))
    box = np.stack([mean - half_width_sigmas * sig, mean + half_width_sigmas * sig], axis=1)
    return from_density(pdf, box, resolution, label=f"gaussian(d={d})")


def make_uniform_grid(low, high, resolution) -> GridMeasure:
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if np.any(high <= low):
        raise MeasureError("empty box")
    box = np.stack([low, high], axis=1)
    return from_density(lambda x: np.ones(len(x)), box, resolution, label="uniform")


def from_weights(axes, weights, cell_volume: float | None = None, label: str = "") -> GridMeasure:
    """Build a measure from raw weights; ``cell_volume`` defaults to the grid spacing product."""
    axes = tuple(np.atleast_1d(np.asarray(a, dtype=float)) for a in axes)
    if cell_volume is None:
        cell_volume = 1.0
        for a in axes:
            cell_volume *= (a[1] - a[0]) if a.size > 1 else 1.0
    w = np.asarray(weights, dtype=float).ravel()
    return GridMeasure(axes, w / w.sum(), float(cell_volume), label=label)


def entropy_lebesgue(m: GridMeasure) -> float:
    """``H(μ|Lebesgue) = Σ wᵢ ln(wᵢ / cell_volume)`` with ``0 ln 0 = 0``."""
    w = m.weights
    return float(xlogy(w, w).sum() - np.log(m.cell_volume) * w.sum())


def _positive_block(m: GridMeasure):
    w = m.weights.reshape(m.shape)
    pos = w > 0
    if not pos.any():
        raise MeasureError("measure has no positive cells")
    idx = np.nonzero(pos)
    sl = tuple(slice(i.min(), i.max() + 1) for i in idx)
    inner = pos[sl]
    if not inner.all():
        offsets = np.array([s.start for s in sl])
        bad = np.argwhere(~inner) + offsets
        shown = ", ".join(str(tuple(int(v) for v in b)) for b in bad[:10])
        more = f" (+{len(bad) - 10} more)" if len(bad) > 10 else ""
        raise MeasureError(f"zero-weight cells inside the support: {shown}{more}")
    return sl


def fisher_information_details(m: GridMeasure) -> tuple[float, np.ndarray]:
    """Fisher information and the multi-indices of cells left out of the sum.

    The positive cells must form one box. Cells on the faces of that box
    that touch a zero-weight cell are excluded (their stencil would reach
    into ``ln 0``); the grid's own outer boundary uses one-sided stencils.
    """
    sl = _positive_block(m)
    w = m.weights.reshape(m.shape)
    block = w[sl]
    logrho = np.log(block / m.cell_volume)
    h = m.spacing
    sq = np.zeros_like(block)
    for k in range(m.dim):
        if block.shape[k] < 2:
            continue
        sq += np.gradient(logrho, h[k], axis=k) ** 2
    keep = np.ones(block.shape, dtype=bool)
    for k, s in enumerate(sl):
        n_full = m.shape[k]
        if s.start > 0:
            idx = [slice(None)] * m.dim
            idx[k] = 0
            keep[tuple(idx)] = False
        if s.stop < n_full:
            idx = [slice(None)] * m.dim
            idx[k] = -1
            keep[tuple(idx)] = False
    offsets = np.array([s.start for s in sl])
    excluded = np.argwhere(~keep) + offsets
    return float((block * sq)[keep].sum()), excluded


def fisher_information(m: GridMeasure) -> float:
    """``I(μ) = ∫ ‖∇ ln ρ‖² dμ`` via central differences of the log-density."""
    return fisher_information_details(m)[0]


def moment(m: GridMeasure, k: float) -> float:
    """``m_k(μ) = Σ wᵢ ‖xᵢ‖^k``."""
    if not k > 0:
        raise MeasureError(f"moment order must be positive, got {k}")
    r = np.linalg.norm(m.nodes, axis=1)
    return float(m.weights @ r ** k)


def entropy_power(h: float, k: int) -> float:
    """``N_k = exp(−2h/k) / (2πe)`` for an entropy ``h = ∫ρ ln ρ`` in dimension ``k``."""
    return float(np.exp(-2.0 * h / k) / (2 * np.pi * np.e))
