"""Chordal Loewner flows with piecewise-constant driving.

Convention: the driving takes the value ``W_k`` on ``[t_k, t_{k+1})``, so the
first slit grows from 0; centred maps are recentred at the path value ``W_t``.

* forward step:  ``g <- W_k + sqrt((g - W_k)^2 + 4 dt)``
* reverse (centred) step:  ``f <- f - (W_{k+1} - W_k)``, then ``f <- sqrt(f^2 - 4 dt)``

The reverse flow thus sees the driving value of the step's right end, which
is what time reversal turns a left-valued forward step into.  Each step is a
closed-form vertical-slit map, so ``W = 0`` reproduces the continuous closed
forms to rounding error and compositions are exact semigroups in time.
Running the reverse flow on ``s -> W_{t-s} - W_t`` gives exactly the inverse
of the centred forward map.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from weldlab.errors import InvalidCurve, NumericFailure, SwallowedPoint
from weldlab.rng import as_generator


@dataclass(frozen=True)
class DrivingFunction:
    times: np.ndarray
    values: np.ndarray
    kappa: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        w = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or t.size < 1:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if t[0] != 0.0 or w[0] != 0.0:
            raise ValueError("driving must start at t = 0 with W_0 = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(w)):
            raise ValueError("driving values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", w)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def reversed_at(self, t: float) -> "DrivingFunction":
        """``s -> W_{t-s} - W_t`` on ``[0, t]`` (t must be a grid time).

        Same law as ``W_t - W_{t-s}`` for symmetric drivers; this sign makes the
        reverse flow the pathwise inverse of the centred forward map.
        """
        k = _grid_index(self.times, t)
        tt = self.times[k] - self.times[: k + 1][::-1]
        ww = self.values[: k + 1][::-1] - self.values[k]
        return DrivingFunction(tt, ww, self.kappa, {**self.meta, "reversed_at": t})

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# kappa={self.kappa} scheme=piecewise-constant-slit\n")
        buf.write("time,W\n")
        for t, w in zip(self.times, self.values):
            buf.write(f"{float(t)!r},{float(w)!r}\n")
        return buf.getvalue()


def _grid_index(times: np.ndarray, t: float) -> int:
    k = int(np.searchsorted(times, t - 1e-12 * max(1.0, abs(t))))
    if k >= times.size or abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t = {t} is not a grid time")
    return k


def sample_driving(kappa: float, T: float, dt: float, rng=None) -> DrivingFunction:
    if dt <= 0 or T <= 0:
        raise ValueError("need dt > 0 and T > 0")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    n = int(round(T / dt))
    times = dt * np.arange(n + 1)
    gen = as_generator(rng)
    b = np.concatenate([[0.0], np.cumsum(math.sqrt(dt) * gen.standard_normal(n))])
    return DrivingFunction(times, math.sqrt(kappa) * b, kappa, {"dt": dt})


def driving_from_brownian(times, b, kappa: float) -> DrivingFunction:
    """``sqrt(kappa) B`` for a shared Brownian path (coupling across kappa)."""
    return DrivingFunction(times, math.sqrt(kappa) * np.asarray(b, dtype=float), kappa)


def _upper_sqrt(w: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Root of ``w`` with Im >= 0; real roots take the sign of ``Re ref``."""
    r = np.sqrt(w.astype(complex))
    r = np.where(r.imag < 0, -r, r)
    real = r.imag == 0
    sgn = np.where(np.real(ref) < 0, -1.0, 1.0)
    return np.where(real, sgn * np.abs(r.real) + 0j, r)


@dataclass(frozen=True)
class LoewnerFlow:
    driving: DrivingFunction
    direction: str = "forward"

    def __post_init__(self):
        if self.direction not in ("forward", "reverse"):
            raise ValueError("direction must be 'forward' or 'reverse'")

    def pieces(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-step ``(dt, W_k, W_{k+1} - W_k)`` covering ``[0, t]``; the last step may be partial."""
        times, w = self.driving.times, self.driving.values
        if t < 0 or t > times[-1] * (1 + 1e-12):
            raise ValueError(f"t = {t} outside driving range [0, {times[-1]}]")
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(k, times.size - 1)
        dts = list(np.diff(times[: k + 1]))
        vals = list(w[:k])
        jumps = list(np.diff(w[: k + 1]))
        rest = t - times[k]
        if rest > 1e-15 * max(1.0, t) and k + 1 < times.size:
            dts.append(rest)
            vals.append(w[k])
            jumps.append(w[k + 1] - w[k])
        return np.array(dts), np.array(vals), np.array(jumps)

    def value_at(self, t: float) -> float:
        """Piecewise-constant driving value at ``t`` (the path value on grid times)."""
        times, w = self.driving.times, self.driving.values
        k = int(np.searchsorted(times, t * (1 + 1e-15) + 1e-300, side="right")) - 1
        return float(w[min(max(k, 0), w.size - 1)])

    def capacity(self, t: float) -> float:
        """Half-plane capacity ``a_t`` of the composed map (``= 2 t``)."""
        dts, _, _ = self.pieces(t)
        return 2.0 * float(np.sum(dts))


def forward_map(flow: LoewnerFlow, t: float, z, centred: bool = False, t0: float = 0.0, start=None):
    """``g_t(z)`` (or ``g_t(z) - W_t``) by composing the per-step slit maps.

    With ``t0 > 0`` and ``start = g_{t0}(z)``, only the steps in ``(t0, t]`` are applied.
    """
    z = np.asarray(z, dtype=complex)
    g = z.copy() if start is None else np.asarray(start, dtype=complex).copy()
    dts, vals, _ = flow.pieces(t)
    if t0 > 0:
        skip = flow.pieces(t0)[0].size
        if flow.pieces(t0)[0].sum() < t0 - 1e-15:
            raise ValueError("t0 must not be inside a step")
        dts, vals = dts[skip:], vals[skip:]
    upper = g.imag > 0
    for dt, w in zip(dts, vals):
        d = g - w
        g = w + _upper_sqrt(d * d + 4.0 * dt, d)
    if np.any(upper & (g.imag <= 0)):
        raise SwallowedPoint("point reached the hull before time t")
    if centred:
        g = g - flow.value_at(t)
    return g if g.ndim else complex(g)


def inverse_forward_map(flow: LoewnerFlow, t: float, w) -> np.ndarray:
    """``g_t^{-1}(w)`` for ``w`` in the closed upper half-plane."""
    z = np.asarray(w, dtype=complex).copy()
    dts, vals, _ = flow.pieces(t)
    for dt, wv in zip(dts[::-1], vals[::-1]):
        d = z - wv
        z = wv + _upper_sqrt(d * d - 4.0 * dt, d)
    return z if z.ndim else complex(z)


def trace(flow: LoewnerFlow, t: float | None = None) -> np.ndarray:
    """Curve points ``eta(t_k) = g_{t_k}^{-1}(W_{t_k})`` for all grid times up to ``t``."""
    t = flow.driving.T if t is None else t
    dts, vals, _ = flow.pieces(t)
    n = dts.size
    # z[j] is the tip image for time index j+1, pulled back step by step
    z = vals.astype(complex).copy()
    for k in range(n - 1, -1, -1):
        active = slice(k, n)
        d = z[active] - vals[k]
        z[active] = vals[k] + _upper_sqrt(d * d - 4.0 * dts[k], d)
    return np.concatenate([[0j], z])


def reverse_map(flow: LoewnerFlow, t: float, z, record_times=None):
    """Centred reverse flow ``f_t(z)``: ``df = -2/f dt - dW``.

    With ``record_times`` returns an array ``(len(record_times), *z.shape)`` of
    ``f`` at those grid times.
    """
    f = np.asarray(z, dtype=complex).copy()
    dts, _, jumps = flow.pieces(t)
    rec = None
    if record_times is not None:
        rt = np.asarray(record_times, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(dts)])
        idx = np.searchsorted(cum, rt - 1e-12)
        rec = np.empty((rt.size, *f.shape), dtype=complex)
        where = {}
        for i, k in enumerate(idx):
            where.setdefault(int(k), []).append(i)
        for i in where.get(0, []):
            rec[i] = f
    for k, (dt, jw) in enumerate(zip(dts, jumps)):
        f = f - jw
        f = _upper_sqrt(f * f - 4.0 * dt, f)
        if rec is not None:
            for i in where.get(k + 1, []):
                rec[i] = f
    if rec is not None:
        return rec
    return f if f.ndim else complex(f)


def swallow_time(flow: LoewnerFlow, x, t_max: float | None = None) -> np.ndarray | float:
    """``sigma(x) = inf{t : f_t(x) = 0}``, exact inside a step; ``inf`` if not before ``t_max``."""
    x_arr = np.asarray(x, dtype=float)
    f = x_arr.astype(float).ravel().copy()
    t_max = flow.driving.T if t_max is None else t_max
    dts, _, jumps = flow.pieces(t_max)
    out = np.full(f.shape, np.inf)
    out[f == 0] = 0.0
    alive = f != 0
    t = 0.0
    for dt, jw in zip(dts, jumps):
        if not alive.any():
            break
        # a driving jump that carries the point to or across 0 swallows it at once
        f_j = np.where(alive, f - jw, f)
        crossed = alive & (np.sign(f_j) != np.sign(f))
        out[crossed] = t
        alive &= ~crossed
        f2 = f_j * f_j
        hit = alive & (f2 <= 4.0 * dt)
        out[hit] = t + f2[hit] / 4.0
        alive &= ~hit
        f = np.where(alive, np.sign(f_j) * np.sqrt(np.maximum(f2 - 4.0 * dt, 0.0)), f)
        t += dt
    out = out.reshape(x_arr.shape)
    return float(out) if out.ndim == 0 else out


def caratheodory_plus_distance(flow_a: LoewnerFlow, flow_b: LoewnerFlow, T: float, eps: float = 0.1,
                               K: float = 2.0, n_t: int = 64, n_z: int = 64, n_x: int = 129) -> float:
    """Sup-distance of reverse flows on a space-time mesh plus swallow-time sup-distance.

    Swallow times are compared after capping at ``T`` (points not swallowed by
    ``T`` count as ``T``).
    """
    ts = T * np.arange(1, n_t + 1) / n_t
    zs = np.linspace(-K, K, n_z) + 1j * eps
    xs = np.linspace(-K, K, n_x)
    fa = _reverse_on_mesh(flow_a, ts, zs)
    fb = _reverse_on_mesh(flow_b, ts, zs)
    d1 = float(np.max(np.abs(fa - fb)))
    sa = np.minimum(swallow_time(flow_a, xs, T), T)
    sb = np.minimum(swallow_time(flow_b, xs, T), T)
    d2 = float(np.max(np.abs(sa - sb)))
    return max(d1, d2)


def caratheodory_plus_ladder(flows, reference: LoewnerFlow, T: float, eps: float = 0.1, K: float = 2.0,
                             n_t: int = 64, n_z: int = 64, n_x: int = 129) -> np.ndarray:
    """:func:`caratheodory_plus_distance` of each flow to ``reference``, in one batched pass.

    All drivings must share the reference's time grid.
    """
    flows = list(flows)
    times = reference.driving.times
    for fl in flows:
        if fl.driving.times.shape != times.shape or not np.array_equal(fl.driving.times, times):
            raise ValueError("ladder flows must share the reference time grid")
    ts = T * np.arange(1, n_t + 1) / n_t
    zs = np.linspace(-K, K, n_z) + 1j * eps
    xs = np.linspace(-K, K, n_x)
    everything = flows + [reference]
    pieces = [fl.pieces(T) for fl in everything]
    dts = pieces[0][0]
    jumps = np.stack([p[2] for p in pieces])
    cum = np.concatenate([[0.0], np.cumsum(dts)])
    snapped = times[np.clip(np.searchsorted(times, ts - 1e-12), 0, times.size - 1)]
    rec_at = np.searchsorted(cum, snapped - 1e-12)
    f = np.broadcast_to(zs, (len(everything), zs.size)).astype(complex)
    rec = np.empty((ts.size, len(everything), zs.size), dtype=complex)
    j = 0
    while j < ts.size and rec_at[j] == 0:
        rec[j] = f
        j += 1
    for k, dt in enumerate(dts):
        f = f - jumps[:, k, None]
        f = np.sqrt(f * f - 4.0 * dt)
        f = np.where(f.imag < 0, -f, f)
        while j < ts.size and rec_at[j] == k + 1:
            rec[j] = f
            j += 1
    d1 = np.max(np.abs(rec[:, :-1] - rec[:, -1:]), axis=(0, 2))
    s_ref = np.minimum(swallow_time(reference, xs, T), T)
    d2 = np.array([np.max(np.abs(np.minimum(swallow_time(fl, xs, T), T) - s_ref)) for fl in flows])
    return np.maximum(d1, d2)


def _reverse_on_mesh(flow: LoewnerFlow, ts: np.ndarray, zs: np.ndarray) -> np.ndarray:
    times = flow.driving.times
    snapped = times[np.clip(np.searchsorted(times, ts - 1e-12), 0, times.size - 1)]
    return reverse_map(flow, float(ts[-1]), zs, record_times=snapped)


# ---------------------------------------------------------------------------
# Tilted slits and driving extraction


def slit_parameters(tip: complex) -> tuple[float, float]:
    """``(p, q)`` such that ``(z+q)^a (z-p)^{1-a}``, ``a = q/(p+q)``, sends 0 to ``tip``."""
    tip = complex(tip)
    if tip.imag <= 0:
        raise InvalidCurve("tip must lie in the open upper half-plane")
    theta = math.atan2(tip.imag, tip.real)
    a = 1.0 - theta / math.pi
    s = abs(tip) / (a**a * (1 - a) ** (1 - a))
    return (1 - a) * s, a * s


def slit_map(z, p: float, q: float) -> np.ndarray:
    """``f(z) = (z+q)^a (z-p)^{1-a}``, principal branches (continuous on the closed half-plane)."""
    a = q / (p + q)
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):  # the prevertices are patched below
        lp = np.log(z + q + 0j)
        lm = np.log(z - p + 0j)
        # points on the real axis: arg in {0, pi}, never -pi
        lp = np.where((np.abs(lp.imag + math.pi) < 1e-15), lp.real + 1j * math.pi, lp)
        lm = np.where((np.abs(lm.imag + math.pi) < 1e-15), lm.real + 1j * math.pi, lm)
        out = np.exp(a * lp + (1 - a) * lm)
    out = np.where(z == p, 0j, np.where(z == -q, 0j, out))
    return out


def slit_map_dlog(z, p: float, q: float) -> np.ndarray:
    """``f'(z) / f(z)``."""
    a = q / (p + q)
    z = np.asarray(z, dtype=complex)
    return a / (z + q) + (1 - a) / (z - p)


def slit_inverse(w, p: float, q: float, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
    """Preimage under :func:`slit_map` of ``w`` in the closed upper half-plane (off the slit)."""
    w = np.asarray(w, dtype=complex)
    a = q / (p + q)
    tip = complex(slit_map(0.0, p, q))
    f2 = -a / q**2 - (1 - a) / p**2  # f(z) ~ tip + tip * f2 * z^2 / 2 near 0
    near = np.sqrt(2.0 * (w - tip) / (tip * f2))
    near = np.where(near.imag < 0, -near, near)
    far = w - (q - p)
    z = np.where(np.abs(w - tip) < 0.5 * abs(tip), near, far)
    z = np.where(z.imag < 0, z.real + 1e-300j, z)
    for _ in range(max_iter):
        fz = slit_map(z, p, q)
        step = (fz - w) / (fz * slit_map_dlog(z, p, q))
        step = np.where(np.isfinite(step), step, 0)
        z_new = z - step
        # stay in the closed upper half-plane
        z_new = np.where(z_new.imag < 0, z_new.real + 0j, z_new)
        z = z_new
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(z))):
            break
    else:
        bad = np.abs(slit_map(z, p, q) - w) > 1e-8 * np.maximum(1.0, np.abs(w))
        if np.any(bad):
            raise NumericFailure("slit inverse did not converge")
    return z


def _check_simple(curve: np.ndarray) -> None:
    if curve[0] != 0:
        raise InvalidCurve("curve must start at 0")
    if np.any(curve[1:].imag <= 0):
        raise InvalidCurve("curve touches or crosses the real line")
    seg = np.diff(curve)
    if np.any(np.abs(seg) == 0):
        raise InvalidCurve("repeated vertices")
    # segment intersection test for non-adjacent segments
    p0, p1 = curve[:-1], curve[1:]
    n = p0.size
    if n > 2:
        ax, ay = p0.real[:, None], p0.imag[:, None]
        bx, by = p1.real[:, None], p1.imag[:, None]
        cx, cy = p0.real[None, :], p0.imag[None, :]
        dx, dy = p1.real[None, :], p1.imag[None, :]

        def orient(px, py, qx, qy, rx, ry):
            return (qx - px) * (ry - py) - (qy - py) * (rx - px)

        o1 = orient(ax, ay, bx, by, cx, cy)
        o2 = orient(ax, ay, bx, by, dx, dy)
        o3 = orient(cx, cy, dx, dy, ax, ay)
        o4 = orient(cx, cy, dx, dy, bx, by)
        cross = (o1 * o2 < 0) & (o3 * o4 < 0)
        i, j = np.indices((n, n))
        cross &= np.abs(i - j) > 1
        if cross.any():
            raise InvalidCurve("self-intersecting curve")


def extract_driving(curve, check: bool = True) -> DrivingFunction:
    """Inverse Loewner transform of a polyline from 0 by successive tilted slits.

    Each segment (in the current uniformised coordinates) is treated as a
    straight slit whose map is :func:`slit_map`; its Loewner driving is
    ``W_0 + (q - p) sqrt(s / T)`` over capacity ``T = p q / 4``.  Returned
    knots are the segment endpoints.
    """
    z = np.asarray(curve, dtype=complex)
    if check:
        _check_simple(z)
    rest = z[1:].copy()
    times, values = [0.0], [0.0]
    t = w = 0.0
    for k in range(rest.size):
        tip = rest[0]
        p, q = slit_parameters(tip)
        t += p * q / 4.0
        w += q - p
        times.append(t)
        values.append(w)
        rest = rest[1:]
        if rest.size:
            rest = slit_inverse(rest, p, q)
            if np.any(rest.imag <= 0):
                raise InvalidCurve("curve touches the real line after uniformisation")
    return DrivingFunction(np.array(times), np.array(values), None,
                           {"scheme": "tilted-slit", "segments": int(z.size - 1)})


def slit_driving_path(knot_times, knot_values, times) -> np.ndarray:
    """Driving of a chain of straight slits evaluated at ``times``:
    ``W_{k} + (W_{k+1} - W_k) sqrt((t - t_k) / (t_{k+1} - t_k))`` on each piece."""
    kt = np.asarray(knot_times, dtype=float)
    kv = np.asarray(knot_values, dtype=float)
    t = np.asarray(times, dtype=float)
    k = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, kt.size - 2)
    frac = np.clip((t - kt[k]) / (kt[k + 1] - kt[k]), 0.0, 1.0)
    return kv[k] + (kv[k + 1] - kv[k]) * np.sqrt(frac)
