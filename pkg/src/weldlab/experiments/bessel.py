"""Girsanov reweighting to Bessel-3 and the Williams path decomposition."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps

from weldlab.experiments.core import Criterion, Experiment
from weldlab.stats import ess, ks_test, mean_se, weighted_ks, within_ci


def rn_weights(p: dict, gen: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, dict]:
    """``(X_t, M_t, {s: M_s})`` for ``n`` paths of ``X = -B + gamma alpha t + beta``, ``B`` of speed sqrt(alpha).

    The killing indicator is monitored in continuous time: on each grid step the
    weight is multiplied by the bridge survival probability ``1 - exp(-2 a b / (alpha dt))``.
    """
    alpha, gamma, beta, T = p["alpha"], p["gamma"], p["beta"], p["t"]
    steps = int(round(T / p["dt"]))
    dt = T / steps
    record = {int(round(s / dt)): s for s in p["check_times"]}
    db = math.sqrt(alpha * dt) * gen.standard_normal((steps, n))
    b = np.zeros(n)
    x = np.full(n, beta)
    surv = np.ones(n)
    mart = {}
    for k in range(steps):
        b_new = b + db[k]
        x_new = -b_new + gamma * alpha * (k + 1) * dt + beta
        ok = (x > 0) & (x_new > 0)
        cross = np.exp(-2.0 * np.clip(x, 0, None) * np.clip(x_new, 0, None) / (alpha * dt))
        surv = np.where(ok, surv * (1.0 - cross), 0.0)
        b, x = b_new, x_new
        if k + 1 in record:
            s = record[k + 1]
            mart[s] = np.clip(x, 0, None) * surv * np.exp(gamma * b - 0.5 * gamma * gamma * alpha * s)
    w = np.clip(x, 0, None) * surv * np.exp(gamma * b - 0.5 * gamma * gamma * alpha * T)
    return x, w, mart


def _rn_replica(p: dict, rng) -> dict:
    x, w, mart = rn_weights(p, rng.generator(1), p["block"])
    return {"x": x, "w": w, "martingale": {repr(s): mart[s] for s in sorted(mart)}}


def bessel3_cdf(x, x0: float, speed2: float, t: float):
    """CDF of a 3-d Bessel process at time ``t`` started at ``x0``, clock ``speed2 * t``."""
    v = speed2 * t
    x = np.asarray(x, dtype=float)
    return sps.ncx2.cdf(np.clip(x, 0, None) ** 2 / v, df=3, nc=x0 * x0 / v)


def _rn_summary(records: list, p: dict):
    x = np.concatenate([r["x"] for r in records])
    w = np.concatenate([r["w"] for r in records])
    n_eff = ess(w)
    ks = weighted_ks(x, w, lambda v: bessel3_cdf(v, p["beta"], p["alpha"], p["t"]))
    crits = [
        Criterion("rn_bessel_ks", ks.p > p["p_min"], ks.p, f"weighted KS p > {p['p_min']:g} (D = {ks.D:.4g})",
                  {"D": ks.D, "ess": n_eff}),
        Criterion("rn_ess", n_eff >= p["ess_min"], n_eff, f"ESS >= {p['ess_min']:g}"),
    ]
    mart = []
    all_ok = True
    for key in records[0]["martingale"]:
        m = np.concatenate([r["martingale"][key] for r in records])
        mean, se = mean_se(m)
        ok = within_ci(mean, p["beta"], se, p["ci_k"])
        all_ok &= ok
        mart.append([float(key), mean, se])
    crits.append(Criterion("rn_martingale_mean", all_ok, [m[1] for m in mart],
                           f"E M_t within {p['ci_k']:g} SE of M_0 = {p['beta']:g} at t in {p['check_times']}"))
    summary = {"n": int(x.size), "ess": n_eff, "ks_D": ks.D, "ks_p": ks.p, "martingale": mart,
               "series": {"weighted_ecdf_gap": _ecdf_gap(x, w, p)}}
    return summary, crits


def _ecdf_gap(x, w, p) -> list:
    order = np.argsort(x)
    xs, cw = x[order], np.cumsum(w[order]) / w.sum()
    grid = np.linspace(xs[0], xs[-1], 50)
    emp = np.interp(grid, xs, cw)
    return [[float(g), float(e - bessel3_cdf(g, p["beta"], p["alpha"], p["t"]))] for g, e in zip(grid, emp)]


RN = Experiment(
    "exp_rn",
    "Girsanov reweighting by M_t turns -B + gamma alpha t + beta into a Bessel-3 process",
    {"alpha": 2.0, "gamma": 1.0, "beta": 1.0, "t": 1.0, "dt": 1e-3, "block": 500, "check_times": [0.25, 0.5, 1.0],
     "p_min": 0.01, "ess_min": 100.0, "ci_k": 3.0},
    _rn_replica, _rn_summary, replicas=20,
)


# -- Williams decomposition ---------------------------------------------------------


def bessel3_future_minimum(x0: float, n: int, gen: np.random.Generator, c: float = 2e-3,
                           stop_factor: float = 1000.0) -> np.ndarray:
    """Running minimum of ``n`` Bessel-3 paths from ``x0`` until they reach ``stop_factor * x0``.

    Paths are norms of 3-d Brownian motions with steps ``dt = c R^2``; each step's
    minimum is drawn from the Brownian-bridge law of the radius between its endpoints.
    """
    pos = np.zeros((n, 3))
    pos[:, 0] = x0
    r = np.full(n, x0)
    low = np.full(n, x0)
    active = np.arange(n)
    stop = stop_factor * x0
    while active.size:
        ra = r[active]
        dt = c * ra * ra
        step = np.sqrt(dt)[:, None] * gen.standard_normal((active.size, 3))
        new = pos[active] + step
        rn = np.linalg.norm(new, axis=1)
        u = gen.random(active.size)
        bridge_min = 0.5 * (ra + rn - np.sqrt((ra - rn) ** 2 - 2.0 * dt * np.log(u)))
        low[active] = np.minimum(low[active], np.clip(bridge_min, 0, None))
        pos[active] = new
        r[active] = rn
        active = active[rn < stop]
    return low


def _williams_replica(p: dict, rng) -> dict:
    x0 = p["C"] + p["beta"]
    return {"theta": bessel3_future_minimum(x0, p["block"], rng.generator(1), p["step_c"], p["stop_factor"])}


def _williams_summary(records: list, p: dict):
    theta = np.concatenate([r["theta"] for r in records])
    x0 = p["C"] + p["beta"]
    ks = ks_test(theta, sps.uniform(0, x0).cdf)
    counts, edges = np.histogram(theta, bins=25, range=(0, x0))
    summary = {"n": int(theta.size), "ks_D": ks.D, "ks_p": ks.p, "mean": float(theta.mean()), "target_mean": x0 / 2,
               "series": {"theta_density": [[0.5 * (a + b), c / (theta.size * (b - a))]
                                            for a, b, c in zip(edges[:-1], edges[1:], counts)]}}
    crit = Criterion("williams_uniform", ks.p > p["p_min"], ks.p,
                     f"KS vs Uniform[0, {x0:g}] p > {p['p_min']:g} (D = {ks.D:.4g})", {"D": ks.D})
    return summary, [crit]


WILLIAMS = Experiment(
    "exp_williams",
    "Williams decomposition: the future minimum theta of Bessel-3 from C + beta is uniform on [0, C + beta]",
    {"C": 4.0, "beta": 1.0, "block": 500, "step_c": 2e-3, "stop_factor": 1000.0, "p_min": 0.01},
    _williams_replica, _williams_summary, replicas=20,
)
