"""Quantum wedge samples on the boundary grid.

Radial parts are stored in half-plane coordinates, ``radial(s) = h_rad(e^{-s})``,
except for the ``strip`` parametrisation where ``radial(s)`` is the strip
radial ``h_rad(e^{-s}) - Q s`` of the last-exit representative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from weldlab.errors import RangeExhausted
from weldlab.field import (
    RADIAL,
    RADIAL_LEFT,
    BoundaryFieldGrid,
    CovarianceSpec,
    WedgeModel,
    default_grid,
    dyadic_scales,
    push_field,
    sample_field,
)
from weldlab.measures import truncated_derivative_measure
from weldlab.paths import Path, bm_batch, conditioned_below_line_batch
from weldlab.rng import RngStream, as_generator

PARAMETRISATIONS = ("last-exit", "unit-circle", "strip")
DS = 2.0**-8


def Q_of(gamma: float) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 2.0 / gamma + gamma / 2.0


def check_parameters(gamma: float, alpha: float) -> float:
    if not 0 < gamma <= 2:
        raise ValueError("gamma must lie in (0, 2]")
    Q = Q_of(gamma)
    if alpha >= Q and not (gamma == 2 and alpha == 2):
        raise ValueError(f"need alpha < Q = {Q} (or (gamma, alpha) = (2, 2)), got alpha = {alpha}")
    return Q


def radial_grid(s_min: float = -4.0, s_max: float = 8.0, ds: float = DS) -> np.ndarray:
    """Uniform s grid containing 0."""
    lo = int(math.floor(s_min / ds))
    hi = int(math.ceil(s_max / ds))
    return ds * np.arange(lo, hi + 1, dtype=float)


def radial_batch(gamma: float, alpha: float, parametrisation: str, s, n: int, rng=None) -> np.ndarray:
    """``(n, len(s))`` radial parts; ``s`` must be uniform-ish and contain 0."""
    Q = check_parameters(gamma, alpha)
    if parametrisation not in PARAMETRISATIONS:
        raise ValueError(f"unknown parametrisation {parametrisation!r}")
    s = np.asarray(s, dtype=float)
    zero = np.nonzero(s == 0.0)[0]
    if zero.size != 1:
        raise ValueError("radial grid must contain s = 0")
    k0 = int(zero[0])
    gen_r = rng.generator(RADIAL) if isinstance(rng, RngStream) else as_generator(rng)
    gen_l = rng.generator(RADIAL_LEFT) if isinstance(rng, RngStream) else gen_r
    sp = s[k0:]
    u = -s[: k0 + 1][::-1]  # 0 .. |s_min|
    if parametrisation == "unit-circle":
        right = bm_batch(sp, n, drift=alpha, speed=2.0, rng=gen_r)
        # s < 0: conditioned to stay above the Q-line, written as X_u - Q u
        left = -conditioned_below_line_batch(u, n, alpha=alpha, Q=Q, speed=2.0, rng=gen_l)
    else:
        right = conditioned_below_line_batch(sp, n, alpha=alpha, Q=Q, speed=2.0, rng=gen_r)
        left = bm_batch(u, n, drift=-alpha, speed=2.0, rng=gen_l)
    out = np.concatenate([left[:, :0:-1], right], axis=1)
    if parametrisation == "strip":
        out = out - Q * s[None, :]
    return out


def sample_radial(gamma: float, alpha: float, parametrisation: str, s, rng=None) -> Path:
    vals = radial_batch(gamma, alpha, parametrisation, s, 1, rng)[0]
    meta = {"process": "wedge_radial", "gamma": gamma, "alpha": alpha, "parametrisation": parametrisation}
    if isinstance(rng, RngStream):
        meta.update(seed=rng.seed, stream_id=rng.stream_id)
    return Path(s, vals, meta)


def check_radial(radial: Path, Q: float, parametrisation: str, tol: float = 1e-12) -> None:
    """Raise if the parametrisation invariant fails on the grid."""
    s, v = radial.times, radial.values
    d = v - Q * s if parametrisation != "strip" else v
    if abs(radial.at(0.0) - 0.0) > 1e-9:
        raise ValueError("radial part must vanish at s = 0")
    if parametrisation in ("last-exit", "strip"):
        if np.any(d[s > tol] >= 0):
            raise ValueError("last-exit invariant violated: radial(s) >= Q s for some s > 0")
    else:
        if np.any(d[s < -tol] <= 0):
            raise ValueError("unit-circle invariant violated: radial(s) <= Q s for some s < 0")


@dataclass(frozen=True)
class WedgeSample:
    gamma: float
    alpha: float
    parametrisation: str
    radial: Path
    field: BoundaryFieldGrid

    def __post_init__(self):
        check_parameters(self.gamma, self.alpha)
        if self.parametrisation not in PARAMETRISATIONS:
            raise ValueError(f"unknown parametrisation {self.parametrisation!r}")
        check_radial(self.radial, self.Q, self.parametrisation)

    @property
    def Q(self) -> float:
        return Q_of(self.gamma)

    def halfplane_radial(self) -> Path:
        if self.parametrisation == "strip":
            return Path(self.radial.times, self.radial.values + self.Q * self.radial.times, dict(self.radial.meta))
        return self.radial


def sample_wedge(gamma: float, alpha: float, parametrisation: str = "last-exit", xs=None, scales=None,
                 rng=None, spec: CovarianceSpec = CovarianceSpec()) -> WedgeSample:
    """Wedge with independent radial and lateral parts on a symmetric boundary grid."""
    check_parameters(gamma, alpha)
    if parametrisation not in PARAMETRISATIONS:
        raise ValueError(f"unknown parametrisation {parametrisation!r}")
    xs = default_grid() if xs is None else np.asarray(xs, dtype=float)
    scales = dyadic_scales(0, 12) if scales is None else scales
    base = "last-exit" if parametrisation == "strip" else parametrisation
    fld = sample_field(xs, scales, WedgeModel(gamma, alpha, base, spec), rng)
    sample = WedgeSample(gamma, alpha, base, fld.radial, fld)
    if parametrisation == "strip":
        return strip_halfplane_change(sample, "to-strip")
    return sample


def _crossing(s: np.ndarray, d: np.ndarray, which: str) -> float:
    """Last (or first) zero of the piecewise-linear D, located between grid points."""
    if which == "last":
        nonneg = np.nonzero(d >= 0)[0]
        if nonneg.size == 0 or nonneg[-1] == d.size - 1:
            raise RangeExhausted("last crossing of the Q-line not inside the sampled range")
        k = int(nonneg[-1])
    else:
        nonpos = np.nonzero(d <= 0)[0]
        if nonpos.size == 0 or nonpos[0] == 0:
            raise RangeExhausted("first crossing of the Q-line not inside the sampled range")
        k = int(nonpos[0]) - 1
    # zero of D on [s_k, s_{k+1}]
    d0, d1 = d[k], d[k + 1]
    frac = 0.0 if d0 == d1 else d0 / (d0 - d1)
    return float(s[k] + np.clip(frac, 0.0, 1.0) * (s[k + 1] - s[k]))


def rescale_field(fld: BoundaryFieldGrid, r: float, Q: float) -> BoundaryFieldGrid:
    """Field of the same surface under ``z -> r z``: ``h(r x) + Q log r``, on the part of the grid that maps inside."""
    keep = np.abs(fld.xs) * r <= np.abs(fld.xs).max() + 1e-12
    xs = fld.xs[keep]
    return push_field(fld, lambda x: r * x, lambda x: np.full_like(x, r), xs, fld.scales, Q,
                      model={**fld.model, "rescaled_by": r})


def reparametrise(wedge: WedgeSample, target: str) -> WedgeSample:
    if target not in PARAMETRISATIONS:
        raise ValueError(f"unknown parametrisation {target!r}")
    if target == wedge.parametrisation:
        return wedge
    if wedge.parametrisation == "strip":
        wedge = strip_halfplane_change(wedge, "to-halfplane")
        return reparametrise(wedge, target)
    if target == "strip":
        return strip_halfplane_change(reparametrise(wedge, "last-exit"), "to-strip")
    Q = wedge.Q
    s, v = wedge.radial.times, wedge.radial.values
    a = _crossing(s, v - Q * s, "last" if target == "last-exit" else "first")
    # z -> e^{-a} z turns radial(s) into radial(s + a) - Q a
    ds = float(np.median(np.diff(s)))
    lo, hi = s[0] - a, s[-1] - a
    new_s = ds * np.arange(math.ceil(lo / ds - 1e-9), math.floor(hi / ds + 1e-9) + 1)
    new_v = wedge.radial.at(np.clip(new_s + a, s[0], s[-1])) - Q * a
    new_v[new_s == 0.0] = 0.0
    radial = Path(new_s, new_v, {**wedge.radial.meta, "parametrisation": target, "shift": a})
    fld = rescale_field(wedge.field, math.exp(-a), Q)
    fld = replace(fld, model={**wedge.field.model, "parametrisation": target}, radial=radial)
    return WedgeSample(wedge.gamma, wedge.alpha, target, radial, fld)


def strip_halfplane_change(sample: WedgeSample, direction: str) -> WedgeSample:
    """Switch between strip and half-plane coordinates via ``phi(z) = exp(-z)``.

    On radials this adds or removes ``Q s`` (``Q log|phi'| = -Q Re z``); the
    boundary grid itself stays in half-plane coordinates, see
    :func:`strip_boundary_values` for the strip-side field.
    """
    Q = sample.Q
    t = sample.radial.times
    if direction == "to-strip":
        if sample.parametrisation != "last-exit":
            raise ValueError("strip coordinates are taken from the last-exit representative")
        radial = Path(t, sample.radial.values - Q * t, {**sample.radial.meta, "coordinates": "strip"})
        return WedgeSample(sample.gamma, sample.alpha, "strip", radial, sample.field)
    if direction == "to-halfplane":
        if sample.parametrisation != "strip":
            raise ValueError("sample is not in strip coordinates")
        radial = Path(t, sample.radial.values + Q * t, {**sample.radial.meta, "coordinates": "half-plane"})
        return WedgeSample(sample.gamma, sample.alpha, "last-exit", radial, sample.field)
    raise ValueError("direction must be 'to-strip' or 'to-halfplane'")


def strip_boundary_values(fld: BoundaryFieldGrid, t, eps: float, Q: float, side: str = "bottom") -> np.ndarray:
    """Strip-side field ``h(phi(t)) + Q log|phi'(t)|`` along ``Im z = 0`` or ``pi``.

    ``phi(t) = e^{-t}`` on the bottom line and ``-e^{-t}`` on the top line;
    the strip scale ``eps`` corresponds to ``eps e^{-t}`` in the half-plane.
    """
    t = np.asarray(t, dtype=float)
    sign = 1.0 if side == "bottom" else -1.0
    x = sign * np.exp(-t)
    e = np.clip(eps * np.exp(-t), fld.scales.min(), fld.scales.max())
    return fld.evaluate(x, e) - Q * t


def halfplane_from_strip(values: np.ndarray, t, Q: float) -> np.ndarray:
    """Inverse of :func:`strip_boundary_values` on values: add back ``Q t``."""
    return np.asarray(values) + Q * np.asarray(t, dtype=float)


def zoom_scale(fld: BoundaryFieldGrid, C: float, eps: float | None = None, beta: float = 5.0,
               Q: float = 2.0, tol: float = 1e-10, max_iter: int = 200) -> tuple[BoundaryFieldGrid, float]:
    """Rescale ``h + C`` by ``z -> r_C z`` so that ``[0, 1]`` has unit truncated mass."""
    eps = float(fld.scales.min()) if eps is None else eps

    def mass_at(log_r: float) -> tuple[float, BoundaryFieldGrid]:
        r = math.exp(log_r)
        g = rescale_field(fld, r, Q)
        g = replace(g, values=g.values + C)
        m = truncated_derivative_measure(g, beta, eps)
        if m.edges[-1] < 1.0 - 1e-12 or m.edges[0] > 0:
            raise RangeExhausted("rescaled grid no longer covers [0, 1]")
        return m.mass(0.0, 1.0), g

    m0, g0 = mass_at(0.0)
    if abs(m0 - 1.0) <= tol:
        return g0, 1.0
    # mass of [0, 1] after rescaling grows with r; bracket log r
    lo, hi = (0.0, 0.0)
    step = 1.0
    if m0 > 1.0:
        lo = -step
        while mass_at(lo)[0] > 1.0:
            lo -= step
            step *= 2
            if lo < math.log(eps) - 20:
                raise RangeExhausted("could not shrink to unit mass")
    else:
        r_max = float(np.abs(fld.xs).max())
        hi = min(math.log(r_max) - 1e-9, step)
        if hi <= 0 or mass_at(hi)[0] < 1.0:
            raise RangeExhausted("insufficient resolution to reach unit mass")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        m, _ = mass_at(mid)
        if m > 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13:
            break
    log_r = 0.5 * (lo + hi)
    m, g = mass_at(log_r)
    # the mass is piecewise smooth in r; final exact normalization by a constant is not allowed
    # (it would change the field), so report what bisection reached
    return replace(g, model={**g.model, "zoom_C": C, "unit_mass_error": m - 1.0}), math.exp(log_r)
