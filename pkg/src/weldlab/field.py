"""Multi-scale boundary fields h_eps(x).

The field is a sum of independent stationary Gaussian layers

    Phi = sum_m w * exp(-a r^2 / u_m^2),   u_m = 2^{-(m - 1/2)/M},  w = log(2)/M,

and ``h = sqrt(2) * Phi`` on the real line.  ``h_eps`` keeps the layers with
``u_m > eps``, so every stored scale lives on one realization and
``E[h_eps | h_delta] = h_delta`` holds exactly.  With ``a = exp(-euler_gamma)``
the long-range covariance is ``-2 log r`` with no additive offset, and the
on-diagonal variance at a dyadic scale is exactly ``2 log(1/eps)``.

Two samplers share this kernel:

* the grid sampler (circulant embedding per scale band, or a dense
  eigendecomposition for non-uniform grids) for 1-d boundary grids, and
* :class:`BulkField`, a white-noise convolution evaluated lazily at arbitrary
  points of the closed upper half-plane with Neumann reflection.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from weldlab.errors import NumericFailure
from weldlab.paths import Path
from weldlab.rng import RngStream, as_generator

# Sub-stream labels for RngStream.generator(...)
NOISE, RADIAL, KAPPA, BULK, RADIAL_LEFT = 1, 2, 3, 4, 5

_EIG_TOL = 1e-8


@dataclass(frozen=True)
class CovarianceSpec:
    """Kernel parameters; ``kappa0`` is an independent N(0, kappa0) constant."""

    kappa0: float = 0.0
    sublayers: int = 4
    a: float = math.exp(-np.euler_gamma)

    def __post_init__(self):
        if self.kappa0 < 0:
            raise ValueError("kappa0 must be non-negative")
        if self.sublayers < 1:
            raise ValueError("sublayers must be >= 1")
        if self.a <= 0:
            raise ValueError("a must be positive")

    @property
    def weight(self) -> float:
        return math.log(2.0) / self.sublayers

    def width(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        return 2.0 ** (-(m - 0.5) / self.sublayers)

    def n_layers(self, eps) -> np.ndarray:
        """Number of layers with ``u_m > eps`` (0 for eps >= 2^{1/(2M)})."""
        eps = np.asarray(eps, dtype=float)
        lg = -np.log2(eps)
        k = np.ceil(self.sublayers * lg + 0.5 - 1e-9) - 1
        return np.maximum(k, 0).astype(int)

    def covariance(self, r, eps: float, delta: float | None = None) -> np.ndarray:
        """Exact ``Cov(h_eps(x), h_delta(y))`` at distance r."""
        delta = eps if delta is None else delta
        n = int(self.n_layers(max(eps, delta)))
        r = np.asarray(r, dtype=float)
        u = self.width(np.arange(1, n + 1))
        k = self.weight * np.exp(-self.a * r[..., None] ** 2 / u**2).sum(axis=-1)
        return 2.0 * k + self.kappa0

    def log_kernel(self, r, eps: float, delta: float | None = None) -> np.ndarray:
        """Reference form ``-2 log(max(r, eps, delta)) + kappa0``."""
        delta = eps if delta is None else delta
        return -2.0 * np.log(np.maximum(np.asarray(r, dtype=float), max(eps, delta))) + self.kappa0

    def to_config(self) -> dict:
        return {"kappa0": self.kappa0, "sublayers": self.sublayers, "a": self.a}

    @classmethod
    def from_config(cls, cfg: dict) -> "CovarianceSpec":
        return cls(
            kappa0=float(cfg.get("kappa0", 0.0)),
            sublayers=int(cfg.get("sublayers", 4)),
            a=float(cfg.get("a", math.exp(-np.euler_gamma))),
        )


@dataclass(frozen=True)
class NeumannModel:
    spec: CovarianceSpec = CovarianceSpec()

    def describe(self) -> dict:
        return {"kind": "neumann", **self.spec.to_config()}


@dataclass(frozen=True)
class WedgeModel:
    gamma: float
    alpha: float
    parametrisation: str = "last-exit"
    spec: CovarianceSpec = CovarianceSpec()

    def describe(self) -> dict:
        return {
            "kind": "wedge",
            "gamma": self.gamma,
            "alpha": self.alpha,
            "parametrisation": self.parametrisation,
            **self.spec.to_config(),
        }


def default_grid(n: int = 1024, half_width: float = 2.0) -> np.ndarray:
    """Cell centres of ``n`` equal cells on ``[-half_width, half_width]``."""
    if n < 2:
        raise ValueError("need at least two cells")
    dx = 2.0 * half_width / n
    return -half_width + dx * (np.arange(n) + 0.5)


def dyadic_scales(j_min: int = 0, j_max: int = 12) -> np.ndarray:
    if j_min < 0 or j_max < j_min:
        raise ValueError("need 0 <= j_min <= j_max")
    return 2.0 ** -np.arange(j_min, j_max + 1, dtype=float)


def check_scales(scales, resolution: int = 1) -> np.ndarray:
    """Validate decreasing scales of the form ``2^(-k/resolution)``, k >= 0.

    ``resolution = 4`` admits the layer boundaries of the default kernel, where
    the variance identity ``Var h_eps = 2 log(1/eps)`` is still exact.
    """
    scales = np.asarray(scales, dtype=float)
    if scales.ndim != 1 or scales.size == 0:
        raise ValueError("scales must be a non-empty 1-d array")
    j = -np.log2(scales) * resolution
    if np.any(np.abs(j - np.round(j)) > 1e-9) or np.any(np.round(j) < 0):
        raise ValueError("scales must be dyadic 2^-j with j >= 0" if resolution == 1
                         else f"scales must be of the form 2^(-k/{resolution}) with k >= 0")
    if np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be strictly decreasing")
    return 2.0 ** (-np.round(j) / resolution)


def _check_xs(xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 2:
        raise ValueError("xs must be a 1-d grid with at least two points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    return xs


def _uniform_step(xs: np.ndarray) -> float | None:
    d = np.diff(xs)
    if np.allclose(d, d[0], rtol=1e-9, atol=0.0):
        return float(d[0])
    return None


def _band_kernel(r: np.ndarray, spec: CovarianceSpec, m_lo: int, m_hi: int) -> np.ndarray:
    """Covariance of the layers ``m_lo < m <= m_hi`` of Phi (not h)."""
    out = np.zeros_like(r, dtype=float)
    for m in range(m_lo + 1, m_hi + 1):
        out += np.exp(-spec.a * r**2 / float(spec.width(m)) ** 2)
    return spec.weight * out


@lru_cache(maxsize=256)
def _circulant_sqrt_eigs(nx: int, dx: float, spec: CovarianceSpec, m_lo: int, m_hi: int) -> np.ndarray:
    u_max = float(spec.width(m_lo + 1))
    half = max(nx - 1, int(math.ceil(8.0 * u_max / dx)))
    size = 1 << int(math.ceil(math.log2(2 * half)))
    k = np.arange(size // 2 + 1)
    row = _band_kernel(k * dx, spec, m_lo, m_hi)
    c = np.concatenate([row, row[-2:0:-1]])
    lam = np.fft.fft(c).real
    if lam.min() < -_EIG_TOL * lam.max():
        raise NumericFailure(f"circulant embedding not PSD (min eigenvalue {lam.min():.3g})")
    return np.sqrt(np.clip(lam, 0.0, None) / size)


@lru_cache(maxsize=64)
def _dense_factor(xs_key: bytes, spec: CovarianceSpec, m_lo: int, m_hi: int) -> np.ndarray:
    xs = np.frombuffer(xs_key, dtype=float)
    cov = _band_kernel(np.abs(xs[:, None] - xs[None, :]), spec, m_lo, m_hi)
    lam, vec = np.linalg.eigh(cov)
    if lam.min() < -_EIG_TOL * max(lam.max(), 1e-300):
        raise NumericFailure(f"covariance not PSD (min eigenvalue {lam.min():.3g})")
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def _band_samples(xs: np.ndarray, spec: CovarianceSpec, m_lo: int, m_hi: int, n: int, gen) -> np.ndarray:
    """``n`` independent samples of one scale band of Phi on ``xs``."""
    if m_hi <= m_lo:
        return np.zeros((n, xs.size))
    dx = _uniform_step(xs)
    if dx is not None:
        root = _circulant_sqrt_eigs(xs.size, dx, spec, m_lo, m_hi)
        n_c = (n + 1) // 2
        z = gen.standard_normal((n_c, root.size)) + 1j * gen.standard_normal((n_c, root.size))
        y = np.fft.fft(root * z, axis=1)[:, : xs.size]
        return np.concatenate([y.real, y.imag], axis=0)[:n]
    factor = _dense_factor(xs.tobytes(), spec, m_lo, m_hi)
    return gen.standard_normal((n, xs.size)) @ factor.T


def neumann_noise_batch(xs, scales, spec: CovarianceSpec, n: int, rng=None, constant: bool = True,
                        resolution: int = 1) -> np.ndarray:
    """``(n, len(scales), len(xs))`` samples of ``h_eps(x)`` for the neumann model.

    ``constant=False`` drops the N(0, kappa0) offset (used for wedge lateral noise).
    """
    xs = _check_xs(xs)
    scales = check_scales(scales, resolution)
    gen = rng.generator(NOISE) if isinstance(rng, RngStream) else as_generator(rng)
    counts = spec.n_layers(scales)
    out = np.empty((n, scales.size, xs.size))
    acc = np.zeros((n, xs.size))
    prev = 0
    for k, cnt in enumerate(counts):
        acc += _band_samples(xs, spec, prev, int(cnt), n, gen)
        out[:, k, :] = acc
        prev = int(cnt)
    out *= math.sqrt(2.0)
    if constant and spec.kappa0 > 0:
        kgen = rng.generator(KAPPA) if isinstance(rng, RngStream) else gen
        out += math.sqrt(spec.kappa0) * kgen.standard_normal(n)[:, None, None]
    return out


def _mirror_index(xs: np.ndarray) -> np.ndarray:
    mirror = np.searchsorted(xs, -xs[::-1])[::-1]
    mirror = np.clip(mirror, 0, xs.size - 1)
    if not np.allclose(xs[mirror], -xs, rtol=0, atol=1e-9 * max(1.0, np.abs(xs).max())):
        raise ValueError("grid must be symmetric around 0")
    return mirror


def _radius_scale_index(r: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Index of the largest stored scale <= r, clipped to the stored range."""
    # scales decreasing: first index with scales[k] <= r
    idx = np.searchsorted(-scales, -r, side="left")
    return np.clip(idx, 0, scales.size - 1)


def wedge_values(xs, scales, noise: np.ndarray, radial: Path) -> np.ndarray:
    """Assemble ``h_eps(x) = lat_eps(x) + rad(max(|x|, eps))``.

    ``noise`` has shape ``(..., len(scales), len(xs))``.  The lateral part
    subtracts the two-point radial average of the noise at scale
    ``max(eps, eps(|x|))``, where ``eps(r)`` is the largest stored scale <= r.
    """
    xs = _check_xs(xs)
    scales = check_scales(scales)
    mirror = _mirror_index(xs)
    r = np.abs(xs)
    kr = _radius_scale_index(r, scales)
    ks = np.arange(scales.size)[:, None]
    idx = np.minimum(ks, kr[None, :])  # (ns, nx)
    cols = np.broadcast_to(np.arange(xs.size), idx.shape)
    avg = 0.5 * (noise[..., idx, cols] + noise[..., idx, mirror[cols]])
    s = -np.log(np.maximum(r[None, :], scales[:, None]))
    rad = radial.at(s)
    return noise - avg + rad


@dataclass(frozen=True)
class BoundaryFieldGrid:
    xs: np.ndarray
    scales: np.ndarray
    values: np.ndarray
    model: dict = field(default_factory=dict)
    radial: Path | None = None

    def __post_init__(self):
        xs = _check_xs(self.xs)
        scales = check_scales(self.scales)
        values = np.asarray(self.values, dtype=float)
        if values.shape != (scales.size, xs.size):
            raise ValueError(f"values shape {values.shape} != ({scales.size}, {xs.size})")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "values", values)

    def scale_index(self, eps: float) -> int:
        hit = np.nonzero(np.isclose(self.scales, eps, rtol=1e-12, atol=0.0))[0]
        if hit.size == 0:
            raise ValueError(f"scale {eps} not stored (have {self.scales.tolist()})")
        return int(hit[0])

    def at_scale(self, eps: float) -> np.ndarray:
        return self.values[self.scale_index(eps)]

    def cell_edges(self) -> np.ndarray:
        xs = self.xs
        mid = 0.5 * (xs[1:] + xs[:-1])
        return np.concatenate([[2 * xs[0] - mid[0]], mid, [2 * xs[-1] - mid[-1]]])

    def evaluate(self, z, eps) -> np.ndarray:
        """``h_eps(x)`` at real ``x`` inside the grid, any ``eps`` in the stored range.

        Linear in x, linear in ``log eps`` between stored scales.
        """
        x = np.asarray(z)
        if np.iscomplexobj(x):
            if np.any(np.abs(x.imag) > 1e-12):
                raise ValueError("grid fields are defined on the real line only")
            x = x.real
        x = np.asarray(x, dtype=float)
        eps = np.broadcast_to(np.asarray(eps, dtype=float), x.shape)
        if np.any(x < self.xs[0] - 1e-12) or np.any(x > self.xs[-1] + 1e-12):
            raise ValueError("evaluation point outside the field grid")
        lg = -np.log2(eps)
        js = -np.log2(self.scales)
        if np.any(lg < js[0] - 1e-9) or np.any(lg > js[-1] + 1e-9):
            raise ValueError("scale outside the stored range")
        rows = np.array([np.interp(x, self.xs, v) for v in self.values])  # (ns, ...)
        pos = np.interp(lg, js, np.arange(js.size))
        lo = np.clip(np.floor(pos).astype(int), 0, js.size - 1)
        hi = np.clip(lo + 1, 0, js.size - 1)
        frac = pos - lo
        flat = rows.reshape(js.size, -1)
        ii = np.arange(flat.shape[1])
        out = (1 - frac.ravel()) * flat[lo.ravel(), ii] + frac.ravel() * flat[hi.ravel(), ii]
        return out.reshape(x.shape)

    def to_ndjson(self) -> str:
        buf = io.StringIO()
        buf.write(json.dumps({"header": {"model": self.model, "n_x": int(self.xs.size),
                                         "scales": self.scales.tolist()}}, sort_keys=True) + "\n")
        for k, eps in enumerate(self.scales):
            for x, v in zip(self.xs, self.values[k]):
                buf.write(json.dumps({"x": float(x), "scale": float(eps), "value": float(v)}) + "\n")
        return buf.getvalue()

    @classmethod
    def from_ndjson(cls, text: str) -> "BoundaryFieldGrid":
        model: dict = {}
        recs = []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if "header" in rec:
                model = rec["header"].get("model", {})
            else:
                recs.append(rec)
        xs = np.array(sorted({r["x"] for r in recs}))
        scales = np.array(sorted({r["scale"] for r in recs}, reverse=True))
        xi = {x: i for i, x in enumerate(xs)}
        si = {s: k for k, s in enumerate(scales)}
        values = np.full((scales.size, xs.size), np.nan)
        for r in recs:
            values[si[r["scale"]], xi[r["x"]]] = r["value"]
        if np.isnan(values).any():
            raise ValueError("incomplete field snapshot")
        return cls(xs, scales, values, model)


def sample_field(xs, scales, model: NeumannModel | WedgeModel, rng=None) -> BoundaryFieldGrid:
    """One field realization on ``xs`` at the given dyadic scales."""
    xs = _check_xs(xs)
    scales = check_scales(scales)
    if isinstance(model, NeumannModel):
        vals = neumann_noise_batch(xs, scales, model.spec, 1, rng)[0]
        return BoundaryFieldGrid(xs, scales, vals, model.describe())
    if isinstance(model, WedgeModel):
        from weldlab.wedges import radial_grid, sample_radial

        _mirror_index(xs)
        s = radial_grid(s_max=_s_max(xs, scales), s_min=min(-4.0, -math.log(np.abs(xs).max()) - 0.5))
        radial = sample_radial(model.gamma, model.alpha, model.parametrisation, s, rng)
        noise = neumann_noise_batch(xs, scales, model.spec, 1, rng, constant=False)[0]
        vals = wedge_values(xs, scales, noise, radial)
        return BoundaryFieldGrid(xs, scales, vals, model.describe(), radial)
    raise ValueError(f"unknown model {model!r}")


def _s_max(xs: np.ndarray, scales: np.ndarray) -> float:
    r_min = min(float(np.abs(xs).min()), float(scales.min()))
    return max(8.0, -math.log(r_min) + 0.5)


def radial_part(fld: BoundaryFieldGrid) -> Path:
    """``s -> (h_eps(s)(r) + h_eps(s)(-r)) / 2`` at ``r = e^{-s}``, r the positive grid points."""
    mirror = _mirror_index(fld.xs)
    pos = np.nonzero(fld.xs > 0)[0][::-1]  # decreasing r -> increasing s
    r = fld.xs[pos]
    k = _radius_scale_index(r, fld.scales)
    vals = 0.5 * (fld.values[k, pos] + fld.values[k, mirror[pos]])
    return Path(-np.log(r), vals, {"process": "radial_part", "model": fld.model})


def add_constant(fld: BoundaryFieldGrid, C: float) -> BoundaryFieldGrid:
    return replace(fld, values=fld.values + C, radial=None if fld.radial is None else fld.radial.shifted(dv=C))


def recentre(fld: BoundaryFieldGrid, z0: float) -> BoundaryFieldGrid:
    """Translate so that ``z0`` becomes the origin; ``z0`` must be a grid translation."""
    dx = _uniform_step(fld.xs)
    if dx is not None:
        k = z0 / dx
        if abs(k - round(k)) > 1e-9:
            raise ValueError("z0 is not a multiple of the grid step")
        z0 = round(k) * dx
    elif not np.any(np.isclose(fld.xs, z0, rtol=0, atol=1e-12)):
        raise ValueError("z0 must be a grid point")
    return replace(fld, xs=fld.xs - z0, radial=None, model={**fld.model, "recentred": True})


# ---------------------------------------------------------------------------
# Bulk evaluation


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 wraparound is intended
    with np.errstate(over="ignore"):
        x = x ^ (x >> np.uint64(30))
        x = x * _M1
        x = x ^ (x >> np.uint64(27))
        x = x * _M2
        return x ^ (x >> np.uint64(31))


def _site_normals(key: np.uint64, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Standard normals indexed by lattice site, a pure function of (key, i, j)."""
    with np.errstate(over="ignore"):
        h = _mix64(key ^ _mix64(i.astype(np.int64).view(np.uint64) + _GOLD))
        h = _mix64(h ^ (j.astype(np.int64).view(np.uint64) * _GOLD))
        u1 = (_mix64(h ^ np.uint64(1)) >> np.uint64(11)).astype(float) * 2.0**-53
        u2 = (_mix64(h ^ np.uint64(2)) >> np.uint64(11)).astype(float) * 2.0**-53
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


class BulkField:
    """Lazily evaluated neumann field on the closed upper half-plane.

    Each layer of Phi is a white-noise convolution on a square lattice of
    spacing ``u/3`` with kernel ``exp(-2a|z|^2/u^2)``; the noise at a site is a
    hash of (stream, layer, site), so any set of points can be queried in any
    order with consistent answers.  ``h(z) = (Phi(z) + Phi(conj z)) / sqrt 2``.
    """

    def __init__(self, spec: CovarianceSpec = CovarianceSpec(), rng: RngStream | None = None,
                 half_patch: int = 6):
        rng = rng if rng is not None else RngStream(0)
        self.spec = spec
        self.half_patch = half_patch
        state = rng.seed_sequence(BULK).generate_state(2, np.uint64)
        self._key = state[0]
        self.constant = math.sqrt(spec.kappa0) * rng.generator(KAPPA).standard_normal() if spec.kappa0 > 0 else 0.0

    def _layer(self, m: int, z: np.ndarray) -> np.ndarray:
        u = float(self.spec.width(m))
        d = u / 3.0
        c = math.sqrt(4.0 * self.spec.a * self.spec.weight / (math.pi * u * u))
        off = np.arange(-self.half_patch, self.half_patch + 1)
        i0 = np.rint(z.real / d).astype(np.int64)
        j0 = np.rint(z.imag / d).astype(np.int64)
        gx = np.exp(-2 * self.spec.a * ((i0[:, None] + off) * d - z.real[:, None]) ** 2 / u**2)
        gy = np.exp(-2 * self.spec.a * ((j0[:, None] + off) * d - z.imag[:, None]) ** 2 / u**2)
        ii = i0[:, None, None] + off[None, :, None]
        jj = j0[:, None, None] + off[None, None, :]
        with np.errstate(over="ignore"):
            key = _mix64(self._key ^ np.uint64(m) * _GOLD)
        shape = (z.size, off.size, off.size)
        ii, jj = np.broadcast_to(ii, shape), np.broadcast_to(jj, shape)
        if z.size > 8:
            # nearby points share most sites: hash each distinct site once
            packed = (ii.astype(np.int64) << 32) + (jj.astype(np.int64) & 0xFFFFFFFF)
            uniq, inv = np.unique(packed.ravel(), return_inverse=True)
            ui = uniq >> 32
            uj = (uniq & 0xFFFFFFFF).astype(np.int64)
            uj = np.where(uj >= 2**31, uj - 2**32, uj)
            xi = _site_normals(key, ui, uj)[inv].reshape(shape)
        else:
            xi = _site_normals(key, ii, jj)
        return c * d * np.einsum("pi,pj,pij->p", gx, gy, xi)

    def phi_layers(self, z, n_layers: int, counts=None) -> np.ndarray:
        """``(len(z), n_layers)`` values of the individual layers of Phi.

        With ``counts``, point p only gets its first ``counts[p]`` layers (zeros after).
        """
        z = np.asarray(z, dtype=complex).ravel()
        out = np.zeros((z.size, n_layers))
        for m in range(1, n_layers + 1):
            if counts is None:
                out[:, m - 1] = self._layer(m, z)
            else:
                sel = np.nonzero(counts >= m)[0]
                if sel.size:
                    out[sel, m - 1] = self._layer(m, z[sel])
        return out

    def cumulative_layers(self, z, n_layers: int, counts=None) -> np.ndarray:
        """``(len(z), n_layers + 1)``: h at z keeping the first k layers, k = 0..n_layers (no constant).

        With per-point ``counts`` the columns past ``counts[p]`` are not meaningful.
        """
        z = np.asarray(z, dtype=complex).ravel()
        on_line = np.abs(z.imag) <= 1e-15
        out = np.zeros((z.size, n_layers + 1))
        if on_line.all():
            out[:, 1:] = math.sqrt(2.0) * np.cumsum(self.phi_layers(z.real + 0j, n_layers, counts), axis=1)
            return out
        cc = None if counts is None else np.concatenate([counts, counts])
        both = self.phi_layers(np.concatenate([z, np.conj(z)]), n_layers, cc)
        out[:, 1:] = np.cumsum(both[: z.size] + both[z.size:], axis=1) / math.sqrt(2.0)
        return out

    def evaluate(self, z, eps) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if np.any(z.imag < -1e-12):
            raise ValueError("bulk field is defined on the closed upper half-plane")
        eps = np.broadcast_to(np.asarray(eps, dtype=float), z.shape).ravel()
        counts = self.spec.n_layers(eps)
        n = int(counts.max()) if counts.size else 0
        zf = z.ravel()
        both = self.phi_layers(np.concatenate([zf, np.conj(zf)]), n)
        cum = np.concatenate([np.zeros((both.shape[0], 1)), np.cumsum(both, axis=1)], axis=1)
        idx = np.concatenate([counts, counts])
        phi = cum[np.arange(both.shape[0]), idx]
        h = (phi[: zf.size] + phi[zf.size:]) / math.sqrt(2.0)
        return (h + self.constant).reshape(z.shape)


class BulkWedgeField:
    """Wedge field off the real line: bulk noise minus its radial average plus ``rad``.

    The radial average uses the two boundary points ``+-|z|`` at scale
    ``max(eps, eps(|z|))`` with ``eps(r)`` the largest dyadic scale <= r,
    the same rule as :func:`wedge_values` on the real line.
    """

    def __init__(self, noise: BulkField, radial: Path, j_max: int = 16):
        self.noise = noise
        self.radial = radial
        self.scales = dyadic_scales(0, j_max)

    def evaluate_table(self, z, eps) -> np.ndarray:
        """Values at ``z`` for every row of ``eps`` (shape ``(ns, len(z))``), one layer pass."""
        z = np.asarray(z, dtype=complex).ravel()
        eps = np.atleast_2d(np.asarray(eps, dtype=float))
        spec = self.noise.spec
        r = np.abs(z)
        er = self.scales[_radius_scale_index(r, self.scales)]
        e2 = np.maximum(eps, er[None, :])
        c_z = spec.n_layers(eps.min(axis=0))
        c_r = spec.n_layers(e2.min(axis=0))
        tz = self.noise.cumulative_layers(z, int(c_z.max()), c_z)
        tr = self.noise.cumulative_layers(np.concatenate([r, -r]) + 0j, int(c_r.max()),
                                          np.concatenate([c_r, c_r]))
        cols = np.arange(z.size)
        out = np.empty(eps.shape)
        for k, row in enumerate(eps):
            hz = tz[cols, spec.n_layers(row)]
            c2 = spec.n_layers(e2[k])
            avg = 0.5 * (tr[cols, c2] + tr[z.size + cols, c2])
            out[k] = hz - avg + self.radial.at(-np.log(np.maximum(r, row)))
        return out

    def evaluate(self, z, eps) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        eps = np.broadcast_to(np.asarray(eps, dtype=float), z.shape)
        r = np.abs(z)
        er = self.scales[_radius_scale_index(r, self.scales)]
        e2 = np.maximum(eps, er)
        pts = np.concatenate([z.ravel(), r.ravel() + 0j, -r.ravel() + 0j])
        es = np.concatenate([eps.ravel(), e2.ravel(), e2.ravel()])
        vals = self.noise.evaluate(pts, es) - self.noise.constant
        n = z.size
        lat = vals[:n] - 0.5 * (vals[n:2 * n] + vals[2 * n:])
        rad = self.radial.at(-np.log(np.maximum(r.ravel(), eps.ravel())))
        return (lat + rad).reshape(z.shape)


def push_field(source, psi, dpsi, xs, scales, Q: float, clip_scales: bool = True,
               model: dict | None = None) -> BoundaryFieldGrid:
    """Coordinate change ``h2 = h1 o psi + Q log|psi'|`` onto the real grid ``xs``.

    ``h2_eps(x) = h1_{eps |psi'(x)|}(psi(x)) + Q log|psi'(x)|``.  ``source``
    is anything with ``evaluate(z, eps)``.  With ``clip_scales`` the source
    scale is clipped to ``source.scales``' range when it has one.
    """
    xs = _check_xs(xs)
    scales = check_scales(scales)
    w = np.asarray(psi(xs))
    dw = np.abs(np.asarray(dpsi(xs)))
    if not np.all(np.isfinite(w)) or not np.all(np.isfinite(dw)) or np.any(dw <= 0):
        raise ValueError("map not conformal on the requested grid")
    vals = np.empty((scales.size, xs.size))
    src_scales = getattr(source, "scales", None)
    for k, eps in enumerate(scales):
        e = eps * dw
        if clip_scales and src_scales is not None:
            e = np.clip(e, np.min(src_scales), np.max(src_scales))
        vals[k] = source.evaluate(w, e) + Q * np.log(dw)
    meta = {"kind": "pushed", "Q": Q, **(model or {})}
    return BoundaryFieldGrid(xs, scales, vals, meta)
