"""One-dimensional processes behind the wedge radial parts.

Every sampler comes in two flavours: ``sample_*`` returns a single
:class:`Path`, ``*_batch`` returns an ``(n, len(grid))`` array for Monte Carlo
work. Both take the grid explicitly; nothing here owns a clock.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from weldlab.rng import RngStream, as_generator


@dataclass(frozen=True)
class Path:
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if times.size == 0:
            raise ValueError("empty path")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.times.size

    def at(self, t: float | np.ndarray) -> np.ndarray | float:
        """Linear interpolation; raises outside the sampled range."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < self.times[0] - 1e-12) or np.any(t_arr > self.times[-1] + 1e-12):
            raise ValueError(f"time {t} outside path range [{self.times[0]}, {self.times[-1]}]")
        out = np.interp(t_arr, self.times, self.values)
        return float(out) if out.ndim == 0 else out

    def shifted(self, dt: float = 0.0, dv: float = 0.0) -> "Path":
        return Path(self.times + dt, self.values + dv, dict(self.meta))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.meta, sort_keys=True, default=_jsonable) + "\n")
        buf.write("time,value\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{float(t)!r},{float(v)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Path":
        lines = text.splitlines()
        meta = json.loads(lines[0][2:]) if lines and lines[0].startswith("# ") else {}
        body = [ln for ln in lines if ln and not ln.startswith("#")]
        if body[0].strip() != "time,value":
            raise ValueError("expected 'time,value' header")
        data = np.array([[float(a) for a in ln.split(",")] for ln in body[1:]])
        return cls(data[:, 0], data[:, 1], meta)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


def _meta(label: str, rng, **params) -> dict:
    meta = {"process": label, **params}
    if isinstance(rng, RngStream):
        meta["seed"] = rng.seed
        meta["stream_id"] = rng.stream_id
    return meta


def bm_batch(grid, n: int, drift=0.0, speed=1.0, start=0.0, rng=None) -> np.ndarray:
    """``n`` Brownian paths with the given drift and variance per unit time."""
    grid = _check_grid(grid)
    if speed < 0:
        raise ValueError("speed must be non-negative")
    gen = as_generator(rng)
    dt = np.diff(grid)
    inc = drift * dt + np.sqrt(speed * dt) * gen.standard_normal((n, dt.size))
    start = np.broadcast_to(np.asarray(start, dtype=float), (n,))
    out = np.empty((n, grid.size))
    out[:, 0] = start
    np.cumsum(inc, axis=1, out=out[:, 1:])
    out[:, 1:] += start[:, None]
    return out


def sample_bm(grid, drift: float = 0.0, speed: float = 1.0, start: float = 0.0, rng=None) -> Path:
    vals = bm_batch(grid, 1, drift, speed, start, rng)[0]
    return Path(grid, vals, _meta("bm", rng, drift=drift, speed=speed, start=start))


def radial_bm3_batch(grid, n: int, start=0.0, speed=1.0, drift=0.0, rng=None) -> np.ndarray:
    """Norm of a 3-d Brownian motion started at ``(start, 0, 0)``.

    With ``drift`` the motion carries a constant drift of that size along the
    first axis. Started from 0 this norm is the diffusion with generator
    ``(speed/2) f'' + drift * coth(drift * r / speed) f'`` (Rogers-Pitman),
    i.e. drifted Brownian motion conditioned to stay positive; ``drift = 0``
    gives BES(3). Marginals are exact at every grid point.
    """
    grid = _check_grid(grid)
    if speed < 0:
        raise ValueError("speed must be non-negative")
    gen = as_generator(rng)
    dt = np.diff(grid)
    start = np.broadcast_to(np.asarray(start, dtype=float), (n,))
    pos = np.zeros((n, 3))
    pos[:, 0] = start
    out = np.empty((n, grid.size))
    out[:, 0] = np.abs(start)
    scale = np.sqrt(speed * dt)
    # Chunked over time so memory stays O(n * chunk).
    chunk = max(1, 2_000_000 // max(n, 1) // 3)
    for lo in range(0, dt.size, chunk):
        hi = min(dt.size, lo + chunk)
        z = gen.standard_normal((n, hi - lo, 3)) * scale[None, lo:hi, None]
        z[:, :, 0] += drift * dt[None, lo:hi]
        traj = pos[:, None, :] + np.cumsum(z, axis=1)
        out[:, lo + 1 : hi + 1] = np.linalg.norm(traj, axis=2)
        pos = traj[:, -1, :]
    return out


def bessel3_batch(grid, n: int, start=0.0, speed=1.0, rng=None) -> np.ndarray:
    if np.any(np.asarray(start) < 0):
        raise ValueError("Bessel start must be non-negative")
    return radial_bm3_batch(grid, n, start=start, speed=speed, drift=0.0, rng=rng)


def sample_bessel3(grid, start: float = 0.0, rng=None, speed: float = 1.0) -> Path:
    """BES(3) path; ``speed`` rescales time (``speed=2`` gives ``t -> BES_{2t}``)."""
    vals = bessel3_batch(grid, 1, start, speed, rng)[0]
    return Path(grid, vals, _meta("bessel3", rng, start=start, speed=speed))


def conditioned_drift(x, delta: float, speed: float = 2.0):
    """Drift of ``delta``-drifted BM (given speed) conditioned to stay positive."""
    x = np.asarray(x, dtype=float)
    if delta == 0:
        return speed / x
    return delta / np.tanh(delta * x / speed)


def conditioned_below_line_batch(grid, n: int, alpha: float, Q: float, speed: float = 2.0, rng=None) -> np.ndarray:
    """``B_{speed s} + alpha s`` conditioned to stay below ``Q s`` for all ``s >= 0``.

    Returned as ``Q s - X_s`` where ``X`` is the ``(Q - alpha)``-drifted motion
    conditioned positive. ``Q == alpha`` degenerates to ``Q s - BES3``.
    """
    grid = _check_grid(grid)
    if Q < alpha:
        raise ValueError(f"need Q >= alpha, got Q={Q}, alpha={alpha}")
    if grid[0] != 0.0:
        raise ValueError("conditioned sampler grid must start at s = 0")
    x = radial_bm3_batch(grid, n, start=0.0, speed=speed, drift=Q - alpha, rng=rng)
    return Q * grid[None, :] - x


def sample_conditioned_below_line(grid, alpha: float, Q: float, speed: float = 2.0, rng=None) -> Path:
    vals = conditioned_below_line_batch(grid, 1, alpha, Q, speed, rng)[0]
    return Path(grid, vals, _meta("conditioned_below_line", rng, alpha=alpha, Q=Q, speed=speed))


def martingale_weight_batch(times, values, beta: float, gamma_w: float, alpha_var: float, t: float) -> np.ndarray:
    """Vectorised ``M_t`` for an ``(n, len(times))`` array of paths ``B``.

    ``M_t = X_t 1{X_u > 0 on grid, u <= t} exp(gamma B_t - gamma^2 alpha t / 2)``
    with ``X_u = -B_u + gamma alpha u + beta``.
    """
    times = np.asarray(times, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(f"t={t} outside path range")
    k = int(np.searchsorted(times, t + 1e-12, side="right")) - 1
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError("t must lie on the path grid")
    u = times[: k + 1]
    x = -values[:, : k + 1] + gamma_w * alpha_var * u[None, :] + beta
    alive = np.all(x > 0, axis=1)
    b_t = values[:, k]
    return np.where(alive, x[:, k] * np.exp(gamma_w * b_t - 0.5 * gamma_w**2 * alpha_var * times[k]), 0.0)


def martingale_weight(path: Path, beta: float, gamma_w: float, alpha_var: float, t: float) -> float:
    if beta <= 0 or gamma_w <= 0 or alpha_var <= 0:
        raise ValueError("beta, gamma_w and alpha_var must be positive")
    return float(martingale_weight_batch(path.times, path.values[None, :], beta, gamma_w, alpha_var, t)[0])


def join_two_sided(left: Path, right: Path) -> Path:
    """Glue a path over ``s <= 0`` (given in ``u = -s``) to one over ``s >= 0``.

    Both pieces must start at ``u = 0`` / ``s = 0`` with the same value.
    """
    if left.times[0] != 0 or right.times[0] != 0:
        raise ValueError("both pieces must start at 0")
    if not np.isclose(left.values[0], right.values[0]):
        raise ValueError("pieces disagree at s = 0")
    times = np.concatenate([-left.times[:0:-1], right.times])
    values = np.concatenate([left.values[:0:-1], right.values])
    return Path(times, values, {"left": left.meta, "right": right.meta})
