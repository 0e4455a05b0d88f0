"""Convergence of reverse SLE_kappa flows to SLE_4 under a shared Brownian driving."""

from __future__ import annotations

import math

import numpy as np

from weldlab.experiments.core import Criterion, Experiment
from weldlab.loewner import LoewnerFlow, caratheodory_plus_ladder, driving_from_brownian, swallow_time
from weldlab.stats import trend_test


def _flows_replica(p: dict, rng) -> dict:
    T, dt = p["T"], p["dt"]
    n = int(round(T / dt))
    times = dt * np.arange(n + 1)
    b = np.concatenate([[0.0], np.cumsum(math.sqrt(dt) * rng.generator(1).standard_normal(n))])
    kappas = [4.0 - 2.0**-k for k in range(1, p["n_max"] + 1)]
    flows = [LoewnerFlow(driving_from_brownian(times, b, k), "reverse") for k in kappas]
    ref = LoewnerFlow(driving_from_brownian(times, b, 4.0), "reverse")
    dist = caratheodory_plus_ladder(flows, ref, T, p["mesh_eps"], p["mesh_K"], p["n_t"], p["n_z"], p["n_x"])
    # in Bessel units the pull towards 0 is (2/kappa)/Y, so sigma_kappa(sqrt(kappa) x / 2) grows with kappa
    xs = np.linspace(-p["mesh_K"], p["mesh_K"], p["n_x"])
    xs = xs[xs != 0]
    sig = np.array([np.minimum(swallow_time(fl, math.sqrt(fl.driving.kappa) * xs / 2, T), T)
                    for fl in flows + [ref]])
    tol = 1e-12
    mono = bool(np.all(np.diff(sig, axis=0) >= -tol))
    return {"distance": dist, "swallow_monotone": mono}


def _flows_summary(records: list, p: dict):
    d = np.array([r["distance"] for r in records])
    nonincreasing = np.mean([np.all(np.diff(row) <= 0) for row in d])
    strict = np.mean([np.all(np.diff(row) < 0) for row in d])
    fracs = [trend_test(row)[1] for row in d]
    swallow = all(r["swallow_monotone"] for r in records)
    med = np.median(d, axis=0)
    summary = {"trials": len(records), "fraction_nonincreasing": float(nonincreasing),
               "fraction_strict": float(strict), "mean_adjacent_decrease_fraction": float(np.mean(fracs)),
               "median_distance": med,
               "series": {"median_distance_vs_n": [[n + 1, v] for n, v in enumerate(med)]}}
    crits = [
        Criterion("flows_distance_monotone", nonincreasing >= p["min_fraction"], float(nonincreasing),
                  f"fraction of trials with distance non-increasing in n >= {p['min_fraction']:g} "
                  f"(strict: {strict:.3f})"),
        Criterion("flows_swallow_monotone", swallow, swallow, "swallow times monotone in n on the mesh, every trial"),
    ]
    return summary, crits


FLOWS = Experiment(
    "exp_flows",
    "reverse SLE_kappa flows with a shared Brownian driving converge to the kappa = 4 flow as kappa -> 4",
    {"T": 1.0, "dt": 1e-4, "n_max": 6, "mesh_eps": 0.1, "mesh_K": 2.0, "n_t": 64, "n_z": 64, "n_x": 129,
     "min_fraction": 0.95},
    _flows_replica, _flows_summary, replicas=200,
)
