"""Conformal welding from quantum-length correspondences.

The welding map is a composition of elementary welds
``f(z) = (z+q)^a (z-p)^{1-a}``, ``a = q/(p+q)``, each gluing ``[0, p]`` to
``[-q, 0]`` along a straight slit from 0.  Pairs are processed from the
innermost outward; the outermost weld ends up at the base of the seam, so the
seam's Loewner driving, read from the base, is the concatenation of the
pieces in reverse order: piece ``k`` has capacity ``p_k q_k / 4`` and driving
``(q_k - p_k) sqrt(s / T_k)``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from weldlab.errors import DegenerateCorrespondence, InvalidCurve, NumericFailure, OutOfRange
from weldlab.field import BoundaryFieldGrid, BulkWedgeField, push_field
from weldlab.loewner import (
    DrivingFunction,
    LoewnerFlow,
    _check_simple,
    forward_map,
    slit_driving_path,
    slit_inverse,
    slit_map,
    slit_map_dlog,
    trace,
)
from weldlab.measures import (
    BoundaryMeasure,
    _inverse_left,
    _inverse_right,
    truncated_derivative_measure,
    truncated_density,
)

_MIN_IMAGE = 1e-12


@dataclass(frozen=True)
class Correspondence:
    x: np.ndarray
    y: np.ndarray
    q: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        x, y, q = (np.asarray(v, dtype=float) for v in (self.x, self.y, self.q))
        if not (x.shape == y.shape == q.shape) or x.ndim != 1:
            raise ValueError("x, y, q must be 1-d arrays of equal length")
        if np.any(x <= 0) or np.any(y >= 0):
            raise ValueError("need x > 0 and y < 0")
        if np.any(np.diff(q) <= 0) or np.any(np.diff(x) <= 0) or np.any(np.diff(y) >= 0):
            raise ValueError("q and x must increase and y must decrease strictly")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "q", q)

    def __len__(self) -> int:
        return self.q.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,y,q\n")
        for a, b, c in zip(self.x, self.y, self.q):
            buf.write(f"{float(a)!r},{float(b)!r},{float(c)!r}\n")
        return buf.getvalue()


def quantum_correspondence(measure_right: BoundaryMeasure, measure_left: BoundaryMeasure, q_grid) -> Correspondence:
    """Pairs ``(X(q), Y(q), q)`` with ``nu_R([0, X]) = nu_L([Y, 0]) = q``; q = 0 is dropped."""
    q = np.asarray(q_grid, dtype=float)
    q = q[q > 0]
    for m in (measure_right, measure_left):
        if m.signed:
            raise ValueError("welding needs non-negative measures")
    fr = float(measure_right.cdf(0.0))
    fl = float(measure_left.cdf(0.0))
    if q.size and q.max() > (measure_right.total - fr) * (1 + 1e-12):
        raise OutOfRange("right-hand measure has too little mass")
    if q.size and q.max() > fl * (1 + 1e-12):
        raise OutOfRange("left-hand measure has too little mass")
    x = _inverse_left(measure_right.edges, measure_right.cumulative_at_edges, fr + q)
    y = _inverse_right(measure_left.edges, measure_left.cumulative_at_edges, fl - q)
    return Correspondence(x, y, q, {"right": measure_right.kind, "left": measure_left.kind})


@dataclass(frozen=True)
class ElementaryWeld:
    p: float
    q: float

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive")

    @property
    def a(self) -> float:
        return self.q / (self.p + self.q)

    @property
    def tip(self) -> complex:
        return complex(slit_map(0.0, self.p, self.q))

    @property
    def capacity_time(self) -> float:
        return self.p * self.q / 4.0

    @property
    def driving_increment(self) -> float:
        return self.q - self.p

    def __call__(self, z):
        return slit_map(z, self.p, self.q)

    def inverse(self, w):
        return slit_inverse(w, self.p, self.q)

    def inverse_real(self, w) -> np.ndarray:
        return _slit_inverse_real(np.asarray(w, dtype=float), self.p, self.q)

    def derivative(self, z):
        return slit_map(z, self.p, self.q) * slit_map_dlog(z, self.p, self.q)


def elementary_weld(p: float, q: float) -> ElementaryWeld:
    return ElementaryWeld(float(p), float(q))


def _slit_inverse_parts(w: np.ndarray, p: float, q: float, tol: float = 1e-14):
    """Newton in ``u = log(distance to the base point)`` for real ``w != 0``.

    Returns ``(pos, e)``: the side of each point and its distance ``e`` from
    ``p`` (``w > 0``) or ``-q`` (``w < 0``).  The equation is convex and
    increasing in u with slope bounded below, so Newton converges from the
    right and one step lands there from the left.
    """
    a = q / (p + q)
    s = p + q
    pos = w > 0
    lw = np.log(np.abs(np.where(w == 0, 1.0, w)))
    u = lw.copy()
    for _ in range(200):
        e = np.exp(u)
        phi_pos = a * np.log(s + e) + (1 - a) * u - lw
        d_pos = a * e / (s + e) + (1 - a)
        phi_neg = a * u + (1 - a) * np.log(s + e) - lw
        d_neg = a + (1 - a) * e / (s + e)
        phi = np.where(pos, phi_pos, phi_neg)
        step = phi / np.where(pos, d_pos, d_neg)
        u = u - step
        # stop on a small step, or on a residual already at rounding level (flat slope when a ~ 0 or 1)
        done = (np.abs(step) <= tol * np.maximum(1.0, np.abs(u))) | (np.abs(phi) <= 4e-16 * (1.0 + np.abs(lw) + np.abs(u)))
        if np.all(done):
            break
    else:
        raise NumericFailure("real slit inverse did not converge")
    return pos, np.exp(u)


def _slit_inverse_real(w: np.ndarray, p: float, q: float, tol: float = 1e-14) -> np.ndarray:
    """Real preimage: ``(p, inf)`` for ``w > 0`` and ``(-inf, -q)`` for ``w < 0``."""
    pos, e = _slit_inverse_parts(w, p, q, tol)
    out = np.where(pos, p + e, -q - e)
    return np.where(w == 0, np.nan, out)


@dataclass(frozen=True)
class WeldedInterface:
    """Composed welding map ``F = f_K o ... o f_1`` and its seam."""

    p: np.ndarray
    q: np.ndarray
    curve: np.ndarray
    pair_images: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_welds(self) -> int:
        return self.p.size

    def driving(self) -> DrivingFunction:
        """Exact driving knots of the seam read from its base (tilted-slit pieces)."""
        p, q = self.p[::-1], self.q[::-1]
        t = np.concatenate([[0.0], np.cumsum(p * q / 4.0)])
        w = np.concatenate([[0.0], np.cumsum(q - p)])
        return DrivingFunction(t, w, None, {"scheme": "tilted-slit", "pieces": int(p.size)})

    def driving_on(self, times) -> np.ndarray:
        d = self.driving()
        return slit_driving_path(d.times, d.values, times)

    def forward(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        for p, q in zip(self.p, self.q):
            # rounding can push boundary images just below the axis; the map preserves the closed half-plane
            z = slit_map(z.real + 1j * np.maximum(z.imag, 0.0), p, q)
        return z

    def inverse_real(self, w) -> tuple[np.ndarray, np.ndarray]:
        """``(F^{-1}(w), (F^{-1})'(w))`` for real ``w != 0``."""
        z = np.asarray(w, dtype=float).copy()
        dlog = np.zeros_like(z)
        for p, q in zip(self.p[::-1], self.q[::-1]):
            pos, e = _slit_inverse_parts(z, p, q)
            a = q / (p + q)
            # f'/f = a/(zeta+q) + (1-a)/(zeta-p), written through the distance e to the base
            near, far = e, p + q + e
            dlog_f = np.where(pos, a / far + (1 - a) / near, -(a / near + (1 - a) / far))
            with np.errstate(divide="ignore", invalid="ignore"):
                dlog -= np.log(z * dlog_f)
            z = np.where(pos, p + e, -q - e)
        return z, np.exp(dlog)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("re,im\n")
        for c in self.curve:
            buf.write(f"{float(c.real)!r},{float(c.imag)!r}\n")
        return buf.getvalue()


def build_welding_curve(corr: Correspondence, track_pairs: bool = True) -> WeldedInterface:
    """Weld pairs from the innermost outward; returns the seam from its base."""
    xr = corr.x.copy()
    yr = corr.y.copy()
    ps = np.empty(len(corr))
    qs = np.empty(len(corr))
    seam = np.array([0j])
    images = np.zeros(len(corr), dtype=complex)
    for k in range(len(corr)):
        p, q = float(xr[k]), float(-yr[k])
        if p < _MIN_IMAGE or q < _MIN_IMAGE:
            raise DegenerateCorrespondence(f"pair {k} collapsed (p={p:.3g}, q={q:.3g})")
        ps[k], qs[k] = p, q
        seam = np.concatenate([[0j], slit_map(seam, p, q)])
        if track_pairs:
            images[:k] = slit_map(images[:k], p, q)
            images[k] = 0j
        rest = slice(k + 1, None)
        xr[rest] = slit_map(xr[rest], p, q).real
        yr[rest] = slit_map(yr[rest], p, q).real
    return WeldedInterface(ps, qs, seam, images, {"pairs": len(corr)})


def is_simple(curve: np.ndarray) -> bool:
    """No two non-adjacent segments of the polyline cross and it stays above the real line."""
    try:
        _check_simple(np.asarray(curve, dtype=complex))
    except InvalidCurve:
        return False
    return True


def push_through_weld(fld: BoundaryFieldGrid, interface: WeldedInterface, Q: float = 2.0,
                      xs=None) -> BoundaryFieldGrid:
    """``h o F^{-1} + Q log|(F^{-1})'|`` on the new real line (points mapping inside the old grid)."""
    xs = fld.xs if xs is None else np.asarray(xs, dtype=float)
    xs = xs[xs != 0]
    pre, dpre = interface.inverse_real(xs)
    # points squeezed below floating resolution next to a slit base have no usable derivative
    keep = (pre >= fld.xs[0]) & (pre <= fld.xs[-1]) & np.isfinite(dpre) & (dpre > 0)
    if np.allclose(xs, -xs[::-1], rtol=0, atol=1e-12):
        keep &= keep[::-1]  # keep a symmetric grid
    xs, pre, dpre = xs[keep], pre[keep], dpre[keep]

    # push_field only asks for the kept grid, so reuse the inverse computed above
    def psi(x):
        return pre if x is xs else interface.inverse_real(x)[0]

    def dpsi(x):
        return dpre if x is xs else interface.inverse_real(x)[1]

    return push_field(fld, psi, dpsi, xs, fld.scales, Q, model={**fld.model, "welded": interface.n_welds})


def zip_up(fld: BoundaryFieldGrid, eta_driving: DrivingFunction | None, t: float, beta: float = 5.0,
           eps: float | None = None, pairs_per_unit: int = 256, xs_new=None):
    """Weld ``[0, X(t)]`` to ``[Y(t), 0]`` by truncated critical length.

    Returns ``(pushed field, interface)``; the interface curve is the new seam
    followed by the image of the existing curve (traced from ``eta_driving``).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    eps = float(fld.scales.min()) if eps is None else eps
    existing = trace(LoewnerFlow(eta_driving)) if eta_driving is not None else np.array([0j])
    if t == 0:
        return fld, WeldedInterface(np.zeros(0), np.zeros(0), existing, np.zeros(0, complex), {"pairs": 0})
    m = truncated_derivative_measure(fld, beta, eps)
    k = max(1, int(math.ceil(pairs_per_unit * t)))
    corr = quantum_correspondence(m, m, t * np.arange(1, k + 1) / k)
    iface = build_welding_curve(corr)
    curve = np.concatenate([iface.curve, iface.forward(existing[1:])])
    iface = WeldedInterface(iface.p, iface.q, curve, iface.pair_images,
                            {**iface.meta, "quantum_time": t, "seam_points": int(iface.curve.size)})
    return push_through_weld(fld, iface, 2.0, xs_new), iface


# ---------------------------------------------------------------------------
# Side lengths along an independent curve (bulk field needed on the curve)


def _inverse_with_derivative(flow: LoewnerFlow, t: float, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    from weldlab.loewner import _upper_sqrt

    z = np.asarray(w, dtype=complex).copy()
    dz = np.ones_like(z)
    dts, vals, _ = flow.pieces(t)
    for dt, wv in zip(dts[::-1], vals[::-1]):
        d = z - wv
        r = _upper_sqrt(d * d - 4.0 * dt, d)
        dz = dz * d / np.where(r == 0, np.nan, r)
        z = wv + r
    return z, dz


def side_lengths_multi(source, eta_driving: DrivingFunction, t: float, eps_list, beta: float = 5.0,
                       Q: float = 2.0, cell: float | None = None, min_scale: float = 2.0**-16):
    """``[(L, R) for eps in eps_list]`` sharing one field evaluation along the curve.

    The centred forward map sends the two sides of ``eta([0, t])`` to
    ``[x_-, 0]`` and ``[0, x_+]``; the pushed field there is
    ``h_{eps |psi'|}(psi(x)) + Q log|psi'|`` with ``psi`` the inverse map.
    """
    eps_list = [float(e) for e in eps_list]
    if t == 0:
        return [(0.0, 0.0) for _ in eps_list]
    flow = LoewnerFlow(eta_driving)
    w_t = flow.value_at(t)
    # images of 0- and 0+ bracket the hull image, so track them with fixed sides
    xm = xp = 0.0
    for dt, wv in zip(*flow.pieces(t)[:2]):
        xm = wv - math.sqrt((xm - wv) ** 2 + 4.0 * dt)
        xp = wv + math.sqrt((xp - wv) ** 2 + 4.0 * dt)
    xm, xp = min(xm - w_t, 0.0), max(xp - w_t, 0.0)
    eps_min = min(eps_list)
    h = eps_min if cell is None else cell
    n = int(math.ceil((xp - xm) / h))
    edges = np.linspace(xm, xp, n + 1)
    xs = 0.5 * (edges[1:] + edges[:-1])
    z, dz = _inverse_with_derivative(flow, t, xs + w_t)
    z = np.where(z.imag < 0, np.conj(z), z)
    dpsi = np.abs(dz)
    j_max = int(round(-math.log2(eps_min)))
    scales = 2.0 ** -np.arange(0, j_max + 1)
    e = np.clip(scales[:, None] * dpsi[None, :], min_scale, 1.0)
    vals = evaluate_table(source, z, e) + Q * np.log(dpsi)[None, :]
    out = []
    for eps in eps_list:
        dens = truncated_density(vals, scales, beta, eps)
        m = BoundaryMeasure(edges, dens, eps, "truncated", {"beta": beta})
        out.append((m.mass(xm, 0.0), m.mass(0.0, xp)))
    return out


def side_lengths(source, eta_driving: DrivingFunction, t: float, eps: float, beta: float = 5.0, Q: float = 2.0):
    return side_lengths_multi(source, eta_driving, t, [eps], beta, Q)[0]


def evaluate_table(source, z: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """``source`` at points ``z`` for each row of scales ``eps`` (shape ``(ns, len(z))``)."""
    if hasattr(source, "evaluate_table"):
        return source.evaluate_table(z, eps)
    return np.stack([source.evaluate(z, row) for row in eps])
