"""Fields weighted by truncated derivative mass, seen from a d^beta-typical point.

Units: with ``Var h_eps = 2 log(1/eps)`` the truncation reads ``h/2 < log(1/delta) + beta``,
so under the reweighting ``X_s = -h_{e^{-s}}(z) + 2s + 2 beta`` is a Bessel-3 process in
clock ``2s`` started from ``2 beta - h_1(z)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats as sps

from weldlab.experiments.bessel import bessel3_cdf
from weldlab.experiments.core import Criterion, Experiment
from weldlab.field import CovarianceSpec, default_grid, neumann_noise_batch
from weldlab.measures import cell_edges, truncated_density
from weldlab.stats import ess, weighted_ks, weighted_mean_se, within_ci

LN2_4 = math.log(2.0) / 4.0


def rooted_block(p: dict, rng) -> dict:
    """A block of fields, each with its d^beta(I) weight and the field at one d^beta-sampled point.

    Scales are ``2^(-k/4)``, ``k = 0..4 j_max``; the truncation and the density use the dyadic subset.
    """
    xs = default_grid(p["n_cells"], p["half_width"])
    K = 4 * p["j_max"]
    scales = 2.0 ** (-np.arange(K + 1) / 4.0)
    dyadic = np.arange(0, K + 1, 4)
    v = neumann_noise_batch(xs, scales, CovarianceSpec(kappa0=p["kappa0"]), p["block"], rng, resolution=4)
    inside = (xs > p["a"]) & (xs < p["b"])
    dens = truncated_density(v[:, dyadic, :], scales[dyadic], p["beta"], 2.0 ** -p["j_max"]) * inside
    cells = dens * np.diff(cell_edges(xs))
    w = cells.sum(axis=1)
    gen = rng.generator(9)
    keep = np.array(p["record_k"], dtype=int)
    z = np.zeros(p["block"])
    h = np.zeros((p["block"], keep.size))
    for i in range(p["block"]):
        if w[i] <= 0:
            continue
        j = gen.choice(xs.size, p=cells[i] / w[i])
        z[i] = xs[j]
        h[i] = v[i, keep, j]
    return {"weight": w, "z": z, "h": h}


def _oracle_bessel(x0: np.ndarray, s: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Bessel-3 radii at clock ``2 s`` for each start in ``x0`` (exact Gaussian increments)."""
    pos = np.zeros((x0.size, 3))
    pos[:, 0] = x0
    out = np.empty((x0.size, s.size))
    prev = 0.0
    for i, si in enumerate(s):
        pos += math.sqrt(2.0 * (si - prev)) * gen.standard_normal(pos.shape)
        prev = si
        out[:, i] = np.linalg.norm(pos, axis=1)
    return out


def _pool(records: list) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w = np.concatenate([r["weight"] for r in records])
    z = np.concatenate([r["z"] for r in records])
    h = np.concatenate([np.asarray(r["h"]).reshape(len(r["weight"]), -1) for r in records])
    return w, z, h


def _zoom_summary(records: list, p: dict):
    w, _, h = _pool(records)
    ks = np.array(p["record_k"])
    s = ks * LN2_4
    y = h - 2.0 * s[None, :]
    n_eff = ess(w)
    gen = np.random.default_rng(p["oracle_seed"])
    pick = gen.choice(w.size, p["oracle_paths"], p=w / w.sum())
    x0 = 2.0 * p["beta"] - h[pick, 0]  # column 0 holds h_1 (k = 0)
    r = _oracle_bessel(x0, s, gen)
    rows, ok_all = [], True
    for a, b in p["pairs"]:
        ia, ib = int(np.nonzero(ks == a)[0][0]), int(np.nonzero(ks == b)[0][0])
        inc = y[:, ib] - y[:, ia]
        o_inc = -(r[:, ib] - r[:, ia])
        m, se = weighted_mean_se(inc, w)
        v, se_v = weighted_mean_se((inc - m) ** 2, w)
        o_m, o_v = float(o_inc.mean()), float(o_inc.var())
        ok = within_ci(m, o_m, se, p["ci_k"]) and within_ci(v, o_v, se_v, p["ci_k"])
        ok_all &= ok
        rows.append({"s": [s[ia], s[ib]], "mean": m, "mean_se": se, "oracle_mean": o_m,
                     "var": v, "var_se": se_v, "oracle_var": o_v, "pass": ok})
    crits = [
        Criterion("zoom_increment_moments", ok_all, [[r_["mean"], r_["oracle_mean"], r_["var"], r_["oracle_var"]]
                                                      for r_ in rows],
                  f"weighted mean and variance of h(e^-s) - 2s increments within {p['ci_k']:g} SE of -BES(3)"),
        Criterion("zoom_effective_size", n_eff >= p["ess_min"], n_eff, f"ESS >= {p['ess_min']:g}"),
    ]
    summary = {"fields": int(w.size), "ess": n_eff, "increments": rows,
               "series": {"weighted_mean_profile": [[float(si), weighted_mean_se(y[:, i] - y[:, 0], w)[0]]
                                                    for i, si in enumerate(s)]}}
    return summary, crits


ZOOM = Experiment(
    "exp_zoom",
    "zooming in at a d^beta-typical point gives the radial part of a (2,2)-quantum wedge",
    {"beta": 5.0, "j_max": 12, "kappa0": 0.0, "a": -1.0, "b": 1.0, "block": 250, "n_cells": 1024,
     "half_width": 2.0, "record_k": [0, 3, 7, 11], "pairs": [[3, 11], [3, 7], [7, 11]], "ci_k": 3.0,
     "ess_min": 500.0, "oracle_paths": 200000, "oracle_seed": 12345},
    rooted_block, _zoom_summary, replicas=240,
)


def _a0_cdf(beta2: float, var0: float):
    """CDF of ``h_1`` reweighted by ``(2 beta - a) e^a 1{a < 2 beta}`` from ``N(0, var0)``."""
    sd = math.sqrt(var0)

    def dens(a):
        return sps.norm.pdf(a, scale=sd) * (beta2 - a) * math.exp(a)

    lo = -12.0 * sd
    total = integrate.quad(dens, lo, beta2, limit=200)[0]

    def cdf(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array([integrate.quad(dens, lo, min(xi, beta2), limit=200)[0] / total if xi > lo else 0.0
                        for xi in x])
        return np.clip(out, 0.0, 1.0)

    return cdf


def _rooted_summary(records: list, p: dict):
    w, z, h = _pool(records)
    n_eff = ess(w)
    keep = w > 0
    ks_z = weighted_ks(z[keep], w[keep], sps.uniform(p["a"], p["b"] - p["a"]).cdf)
    # tabulate the A_0 oracle once and interpolate
    cdf0 = _a0_cdf(2.0 * p["beta"], p["kappa0"])
    grid = np.linspace(h[keep, 0].min() - 1.0, 2.0 * p["beta"], 400)
    table = cdf0(grid)
    ks_a0 = weighted_ks(h[keep, 0], w[keep], lambda x: np.interp(x, grid, table))
    # X at the last recorded scale against the Bessel-3 mixture over the weighted start
    s_last = p["record_k"][-1] * LN2_4
    x_last = -h[keep, -1] + 2.0 * s_last + 2.0 * p["beta"]
    gen = np.random.default_rng(p["oracle_seed"])
    starts = 2.0 * p["beta"] - h[keep, 0][gen.choice(keep.sum(), p["mixture_points"], p=w[keep] / w[keep].sum())]

    def mixture(x):
        x = np.atleast_1d(x)
        return np.mean(bessel3_cdf(x[:, None], starts[None, :], 2.0, s_last), axis=1)

    ks_x = weighted_ks(x_last, w[keep], mixture)
    pm = p["p_min"]
    crits = [
        Criterion("rooted_point_uniform", ks_z.p > pm, ks_z.p, f"weighted KS of z vs Uniform(I) p > {pm:g}"),
        Criterion("rooted_start_law", ks_a0.p > pm, ks_a0.p,
                  f"weighted KS of h_1(z) vs N(0, kappa0) tilted by (2 beta - a) e^a p > {pm:g}"),
        Criterion("rooted_bessel_marginal", ks_x.p > pm, ks_x.p,
                  f"weighted KS of -h + 2s + 2 beta at s = {s_last:.3f} vs Bessel-3 mixture p > {pm:g}"),
        Criterion("rooted_effective_size", n_eff >= p["ess_min"], n_eff, f"ESS >= {p['ess_min']:g}"),
    ]
    summary = {"fields": int(w.size), "ess": n_eff, "ks_point": ks_z.D, "ks_start": ks_a0.D, "ks_bessel": ks_x.D,
               "series": {"start_law_cdf": [[float(g), float(t)] for g, t in zip(grid[::8], table[::8])]}}
    return summary, crits


ROOTED = Experiment(
    "exp_rooted",
    "rooted measure: under d^beta weighting the radial part at the sampled point is -BES(3) in clock 2s plus drift",
    {"beta": 5.0, "j_max": 12, "kappa0": 1.0, "a": -1.0, "b": 1.0, "block": 250, "n_cells": 1024,
     "half_width": 2.0, "record_k": [0, 11], "p_min": 0.01, "ess_min": 100.0, "oracle_seed": 4321,
     "mixture_points": 400},
    rooted_block, _rooted_summary, replicas=20,
)
