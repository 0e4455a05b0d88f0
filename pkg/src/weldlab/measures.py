"""Boundary Liouville measures as piecewise-constant densities on grid cells.

Cells are centred on the field's grid points; masses of arbitrary intervals
use exact cell sums with linear interpolation inside the end cells.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from weldlab.errors import OutOfRange
from weldlab.field import BoundaryFieldGrid

NONNEGATIVE_KINDS = ("subcritical", "normalized", "truncated", "uniform")


@dataclass(frozen=True)
class BoundaryMeasure:
    edges: np.ndarray
    density: np.ndarray
    scale: float | None = None
    kind: str = "subcritical"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        density = np.asarray(self.density, dtype=float)
        if edges.ndim != 1 or edges.size != density.size + 1:
            raise ValueError("need len(edges) == len(density) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if not np.all(np.isfinite(density)):
            raise ValueError("density must be finite")
        if self.kind in NONNEGATIVE_KINDS and np.any(density < 0):
            raise ValueError(f"{self.kind} measure with negative density")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "density", density)
        cum = np.concatenate([[0.0], np.cumsum(density * np.diff(edges))])
        object.__setattr__(self, "_cum", cum)

    @property
    def signed(self) -> bool:
        return bool(np.any(self.density < 0))

    @property
    def negative_cells(self) -> np.ndarray:
        return np.nonzero(self.density < 0)[0]

    @property
    def total(self) -> float:
        return float(self._cum[-1])

    @property
    def cumulative_at_edges(self) -> np.ndarray:
        return self._cum.copy()

    def cdf(self, x) -> np.ndarray | float:
        """``F(x) = nu([x0, x])``, piecewise linear."""
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < self.edges[0] - 1e-12) or np.any(x_arr > self.edges[-1] + 1e-12):
            raise ValueError("x outside the measure's support grid")
        out = np.interp(x_arr, self.edges, self._cum)
        return float(out) if out.ndim == 0 else out

    def mass(self, a: float, b: float) -> float:
        if b < a:
            raise ValueError("need a <= b")
        return float(self.cdf(b) - self.cdf(a))

    def _require_nonnegative(self):
        if self.signed:
            raise ValueError("quantiles need a non-negative measure")

    def quantile(self, q) -> np.ndarray | float:
        """``inf{x : F(x) >= q}``; the left endpoint for q = 0."""
        self._require_nonnegative()
        q_arr = np.asarray(q, dtype=float)
        if np.any(q_arr < 0):
            raise ValueError("q must be non-negative")
        if np.any(q_arr > self.total * (1 + 1e-12)):
            raise OutOfRange(f"q exceeds total mass {self.total}")
        out = _inverse_left(self.edges, self._cum, q_arr)
        return float(out) if out.ndim == 0 else out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("cell_left,cell_right,density\n")
        for lo, hi, d in zip(self.edges[:-1], self.edges[1:], self.density):
            buf.write(f"{float(lo)!r},{float(hi)!r},{float(d)!r}\n")
        return buf.getvalue()

    def cumulative_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,F\n")
        for x, f in zip(self.edges, self._cum):
            buf.write(f"{float(x)!r},{float(f)!r}\n")
        return buf.getvalue()


def _inverse_left(edges: np.ndarray, cum: np.ndarray, q: np.ndarray) -> np.ndarray:
    k = np.searchsorted(cum, q, side="left")
    k = np.clip(k, 0, edges.size - 1)
    lo = np.maximum(k - 1, 0)
    span = cum[k] - cum[lo]
    frac = np.where(span > 0, (q - cum[lo]) / np.where(span > 0, span, 1.0), 1.0)
    return np.where(k == 0, edges[0], edges[lo] + frac * (edges[k] - edges[lo]))


def _inverse_right(edges: np.ndarray, cum: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``sup{x : F(x) <= c}``."""
    k = np.searchsorted(cum, c, side="right")
    hi = np.clip(k, 1, edges.size - 1)
    lo = hi - 1
    span = cum[hi] - cum[lo]
    frac = np.where(span > 0, (c - cum[lo]) / np.where(span > 0, span, 1.0), 0.0)
    return np.where(k >= edges.size, edges[-1], edges[lo] + np.clip(frac, 0, 1) * (edges[hi] - edges[lo]))


# -- densities on raw arrays (vectorised over replicas) ----------------------


def subcritical_density(h_eps: np.ndarray, gamma: float, eps: float) -> np.ndarray:
    return np.exp(0.5 * gamma * h_eps) * eps ** (gamma * gamma / 4.0)


def critical_density(h_eps: np.ndarray, eps: float) -> np.ndarray:
    return (-0.5 * h_eps + math.log(1.0 / eps)) * np.exp(h_eps) * eps


def truncation_indicator(values: np.ndarray, scales: np.ndarray, beta: float, eps: float) -> np.ndarray:
    """``1{h_delta/2 < log(1/delta) + beta for all dyadic delta in [eps, 1]}``.

    ``values`` has shape ``(..., len(scales), nx)``.
    """
    scales = np.asarray(scales, dtype=float)
    j_max = int(round(-math.log2(eps)))
    need = 2.0 ** -np.arange(0, j_max + 1)
    idx = []
    for d in need:
        hit = np.nonzero(np.isclose(scales, d, rtol=1e-12, atol=0))[0]
        if hit.size == 0:
            raise ValueError(f"truncation needs scale {d} in the field")
        idx.append(int(hit[0]))
    idx = np.array(idx)
    thresh = np.log(1.0 / need) + beta
    ok = 0.5 * values[..., idx, :] < thresh[:, None]
    return np.all(ok, axis=-2)


def truncated_density(values: np.ndarray, scales: np.ndarray, beta: float, eps: float) -> np.ndarray:
    scales = np.asarray(scales, dtype=float)
    k = int(np.nonzero(np.isclose(scales, eps, rtol=1e-12, atol=0))[0][0])
    h = values[..., k, :]
    dens = (-0.5 * h + math.log(1.0 / eps) + beta) * np.exp(h) * eps
    return np.where(truncation_indicator(values, scales, beta, eps), dens, 0.0)


def cell_edges(xs: np.ndarray) -> np.ndarray:
    mid = 0.5 * (xs[1:] + xs[:-1])
    return np.concatenate([[2 * xs[0] - mid[0]], mid, [2 * xs[-1] - mid[-1]]])


def interval_mass(edges: np.ndarray, density: np.ndarray, a: float, b: float) -> np.ndarray:
    """Mass of ``[a, b]`` for densities of shape ``(..., ncells)``."""
    w = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
    return density @ w


# -- constructors ------------------------------------------------------------


def _eps_row(fld: BoundaryFieldGrid, eps: float) -> np.ndarray:
    return fld.at_scale(eps)  # raises ValueError when eps is not stored


def subcritical_measure(fld: BoundaryFieldGrid, gamma: float, eps: float) -> BoundaryMeasure:
    if not 0 < gamma < 2:
        raise ValueError("subcritical gamma must lie in (0, 2)")
    dens = subcritical_density(_eps_row(fld, eps), gamma, eps)
    return BoundaryMeasure(fld.cell_edges(), dens, eps, "subcritical", {"gamma": gamma})


def critical_measure(fld: BoundaryFieldGrid, eps: float) -> BoundaryMeasure:
    dens = critical_density(_eps_row(fld, eps), eps)
    return BoundaryMeasure(fld.cell_edges(), dens, eps, "critical", {})


def truncated_derivative_measure(fld: BoundaryFieldGrid, beta: float = 5.0, eps: float = 2.0**-12) -> BoundaryMeasure:
    if beta <= 0:
        raise ValueError("beta must be positive")
    fld.scale_index(eps)
    dens = truncated_density(fld.values, fld.scales, beta, eps)
    return BoundaryMeasure(fld.cell_edges(), dens, eps, "truncated", {"beta": beta})


def normalized_subcritical(fld: BoundaryFieldGrid, gamma: float, eps: float) -> BoundaryMeasure:
    if gamma == 2:
        raise ValueError("normalization (4 - 2 gamma)^-1 is singular at gamma = 2")
    m = subcritical_measure(fld, gamma, eps)
    return BoundaryMeasure(m.edges, m.density / (4.0 - 2.0 * gamma), eps, "normalized", {"gamma": gamma})


def uniform_measure(a: float, b: float, n: int, density: float = 1.0) -> BoundaryMeasure:
    return BoundaryMeasure(np.linspace(a, b, n + 1), np.full(n, density), None, "uniform", {})


def cumulative(measure: BoundaryMeasure):
    """``F(x) = nu([x0, x])`` as a callable."""
    return measure.cdf


def quantile(measure: BoundaryMeasure, q):
    return measure.quantile(q)


def quantum_points(measure: BoundaryMeasure, q):
    """``(X(q), Y(q))`` with ``nu([0, X]) = nu([Y, 0]) = q``."""
    measure._require_nonnegative()
    if not measure.edges[0] <= 0 <= measure.edges[-1]:
        raise ValueError("measure support must contain 0")
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr < 0):
        raise ValueError("q must be non-negative")
    f0 = float(measure.cdf(0.0))
    right, left = measure.total - f0, f0
    if np.any(q_arr > min(right, left) * (1 + 1e-12)):
        raise OutOfRange(f"q exceeds one-sided mass (left {left:.4g}, right {right:.4g})")
    cum = measure._cum
    x = _inverse_left(measure.edges, cum, f0 + q_arr)
    y = _inverse_right(measure.edges, cum, f0 - q_arr)
    x = np.where(q_arr == 0, 0.0, np.maximum(x, 0.0))
    y = np.where(q_arr == 0, 0.0, np.minimum(y, 0.0))
    if x.ndim == 0:
        return float(x), float(y)
    return x, y
