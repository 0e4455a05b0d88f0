"""Sanity experiments: GMC first moment, Loewner closed forms, uniform integrability."""

from __future__ import annotations

import math

import numpy as np

from weldlab.experiments.core import Criterion, Experiment
from weldlab.field import CovarianceSpec, default_grid, dyadic_scales, neumann_noise_batch
from weldlab.loewner import DrivingFunction, LoewnerFlow, forward_map, reverse_map, sample_driving, swallow_time
from weldlab.measures import cell_edges, interval_mass, subcritical_density, truncated_density
from weldlab.stats import mean_se, within_ci

# -- first moment of the subcritical boundary measure -------------------------


def _gmc_replica(p: dict, rng) -> dict:
    xs = default_grid(p["n_cells"], p["half_width"])
    eps = p["eps"]
    spec = CovarianceSpec(kappa0=p["kappa0"])
    v = neumann_noise_batch(xs, np.array([eps]), spec, p["block"], rng)[:, 0, :]
    dens = subcritical_density(v, p["gamma"], eps)
    mass = interval_mass(cell_edges(xs), dens, p["a"], p["b"])
    return {"mass": mass}


def _gmc_summary(records: list, p: dict):
    m = np.concatenate([r["mass"] for r in records])
    mean, se = mean_se(m)
    target = p["b"] - p["a"]
    ok = within_ci(mean, target, se, p["ci_k"])
    summary = {"n": int(m.size), "mean": mean, "se": se, "target": target,
               "series": {"mass_histogram": _histogram(m)}}
    crit = Criterion("gmc_first_moment", ok, mean, f"|mean - {target:g}| <= {p['ci_k']:g} SE = {p['ci_k'] * se:.3g}",
                     {"se": se, "n": int(m.size)})
    return summary, [crit]


def _histogram(x: np.ndarray, bins: int = 40) -> list:
    counts, edges = np.histogram(x, bins=bins)
    mids = 0.5 * (edges[1:] + edges[:-1])
    return [[float(a), float(b)] for a, b in zip(mids, counts)]


GMC = Experiment(
    "exp_gmc",
    "first moment of the subcritical boundary measure: E nu^gamma_eps([a,b]) = b - a",
    {"gamma": 1.0, "eps": 2.0**-8, "kappa0": 0.0, "a": 0.0, "b": 1.0, "block": 100, "n_cells": 1024,
     "half_width": 2.0, "ci_k": 3.0},
    _gmc_replica, _gmc_summary, replicas=20,
)


# -- Loewner closed forms ---------------------------------------------------------


def numerical_hcap(g, radius: float, n: int = 512) -> float:
    """Coefficient ``a`` of ``g(z) = z + a/z + ...``: the mean of ``z g(z)`` over ``|z| = radius``.

    The lower half circle uses ``g(conj z) = conj g(z)``; the trapezoid rule on
    the circle converges geometrically once the hull is well inside it.
    """
    theta = np.pi * (np.arange(n) + 0.5) / n
    z = radius * np.exp(1j * theta)
    zg = z * np.asarray(g(z))
    # upper and reflected lower halves contribute conjugate terms
    return float(np.mean(zg.real))


def _loewner_replica(p: dict, rng) -> dict:
    T = p["T"]
    n = int(round(T / p["dt"]))
    zero = DrivingFunction(p["dt"] * np.arange(n + 1), np.zeros(n + 1), 0.0)
    flow = LoewnerFlow(zero)
    rel = {}
    z = np.array([0.3 + 0.2j, -1.0 + 0.5j, 3.0j, 1.5 + 1e-3j, -0.7 + 3.0j])
    ts = [0.1 * T, 0.5 * T, T]
    err = 0.0
    for t in ts:
        got = forward_map(flow, t, z, centred=True)
        exact = np.sqrt(z * z + 4 * t)
        exact = np.where(exact.imag < 0, -exact, exact)  # branch mapping H to H
        err = max(err, float(np.max(np.abs(got - exact) / np.abs(exact))))
    rel["forward"] = err
    err = 0.0
    for t in ts:
        x = np.array([-3.0, -2.5, 2.1, 4.0]) * math.sqrt(t)
        got = reverse_map(flow, t, x.astype(complex))
        exact = np.sign(x) * np.sqrt(x * x - 4 * t)
        err = max(err, float(np.max(np.abs(got - exact) / np.abs(exact))))
    rel["reverse"] = err
    x = np.linspace(-2 * math.sqrt(T) * 0.99, 2 * math.sqrt(T) * 0.99, 41)
    x = x[x != 0]
    sig = swallow_time(LoewnerFlow(zero, "reverse"), x, T)
    rel["swallow"] = float(np.max(np.abs(sig - x * x / 4) / (x * x / 4)))
    # capacity additivity on a Brownian driving: hcap(g_T) = hcap(g_t1) + hcap(g_{t1,T})
    d = sample_driving(p["kappa"], T, p["dt"], rng)
    bflow = LoewnerFlow(d)
    t1 = 0.5 * T
    R = 2.0 * (np.max(np.abs(d.values)) + 2.0 * math.sqrt(T)) + 1.0
    a_all = numerical_hcap(lambda w: forward_map(bflow, T, w), R)
    a_1 = numerical_hcap(lambda w: forward_map(bflow, t1, w), R)
    a_2 = numerical_hcap(lambda w: forward_map(bflow, T, w, t0=t1), R)
    rel["capacity_additivity"] = abs(a_all - (a_1 + a_2)) / a_all
    rel["capacity_value"] = abs(a_all - 2 * T) / (2 * T)
    return rel


def _loewner_summary(records: list, p: dict):
    keys = ["forward", "reverse", "swallow", "capacity_additivity", "capacity_value"]
    worst = {k: max(r[k] for r in records) for k in keys}
    tol = p["tol"]
    crits = [Criterion(f"loewner_{k}", worst[k] <= tol, worst[k], f"relative error <= {tol:g}") for k in keys]
    return {"max_relative_error": worst}, crits


LOEWNER = Experiment(
    "exp_loewner",
    "zero driving closed forms sqrt(z^2+4t), sqrt(x^2-4t), x^2/4 and additivity of half-plane capacity",
    {"T": 1.0, "dt": 1e-3, "kappa": 4.0, "tol": 1e-9},
    _loewner_replica, _loewner_summary, replicas=4,
)


# -- uniform integrability of the truncated derivative measure ------------------


def _ui_replica(p: dict, rng) -> dict:
    xs = default_grid(p["n_cells"], p["half_width"])
    j_max = max(p["eps_ladder"])
    scales = dyadic_scales(0, j_max)
    v = neumann_noise_batch(xs, scales, CovarianceSpec(), p["block"], rng)
    edges = cell_edges(xs)
    out = {}
    for j in p["eps_ladder"]:
        dens = truncated_density(v[:, : j + 1, :], scales[: j + 1], p["beta"], 2.0**-j)
        out[str(j)] = interval_mass(edges, dens, p["a"], p["b"])
    return out


def _ui_summary(records: list, p: dict):
    beta, L = p["beta"], p["b"] - p["a"]
    levels = [k * beta * L for k in p["tail_levels"]]
    means, ses, tails, ok_mean = [], [], [], True
    for j in p["eps_ladder"]:
        d = np.concatenate([r[str(j)] for r in records])
        m, se = mean_se(d)
        means.append(m)
        ses.append(se)
        ok_mean &= within_ci(m, beta * L, se, p["ci_k"])
        tails.append([float(np.mean(d * (d > K)) / m) for K in levels])
    worst = np.max(np.array(tails), axis=0)  # sup over eps, per level
    summary = {"eps_exponents": p["eps_ladder"], "means": means, "mean_se": ses, "tail_fraction": tails,
               "tail_levels": levels, "worst_tail": worst,
               "series": {"mean_vs_j": [[j, m] for j, m in zip(p["eps_ladder"], means)],
                          "worst_tail_vs_level": [[K, t] for K, t in zip(levels, worst)]}}
    crits = [
        Criterion("ui_first_moment", ok_mean, means, f"E d within {p['ci_k']:g} SE of beta |I| at every eps"),
        Criterion("ui_tail_decay", bool(np.all(np.diff(worst) < 0)), worst,
                  f"sup over eps of E[d 1(d > K)] / E d strictly decreasing in K = {levels}"),
    ]
    return summary, crits


UI = Experiment(
    "exp_ui",
    "uniform integrability in eps of the truncated derivative mass d^beta_eps(I)",
    {"beta": 5.0, "a": 0.0, "b": 1.0, "eps_ladder": [2, 4, 6, 8, 10, 12], "block": 250, "n_cells": 1024,
     "half_width": 2.0, "tail_levels": [1.0, 10.0, 100.0], "ci_k": 3.0},
    _ui_replica, _ui_summary, replicas=20,
)
