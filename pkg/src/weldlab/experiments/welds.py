"""Welding experiments: length matching along SLE_4, the interface law, zip-up stationarity."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps

from weldlab.errors import REPLICA_FAILURES
from weldlab.experiments.core import Criterion, Experiment
from weldlab.field import BulkField, BulkWedgeField, default_grid, radial_part
from weldlab.loewner import driving_from_brownian
from weldlab.measures import truncated_derivative_measure
from weldlab.stats import ks_2samp, ks_test, strictly_decreasing
from weldlab.wedges import _crossing, radial_grid, rescale_field, sample_radial, sample_wedge
from weldlab.welding import build_welding_curve, is_simple, quantum_correspondence, side_lengths_multi, zip_up

# -- length matching ------------------------------------------------------------


def _weld_replica(p: dict, rng) -> dict:
    rad = sample_radial(2.0, 1.0, "last-exit", radial_grid(p["s_min"], p["s_max"]), rng.child(0))
    src = BulkWedgeField(BulkField(rng=rng.child(1)), rad)
    T, dt = p["t"], p["dt"]
    n = int(round(T / dt))
    times = T * np.arange(n + 1) / n
    b = np.concatenate([[0.0], np.cumsum(math.sqrt(T / n) * rng.child(2).generator().standard_normal(n))])
    eps = [2.0**-j for j in p["eps_exponents"]]
    LR = side_lengths_multi(src, driving_from_brownian(times, b, 4.0), T, eps, p["beta"])
    return {"L": [l_ for l_, _ in LR], "R": [r_ for _, r_ in LR],
            "mismatch": [abs(l_ - r_) / (l_ + r_) if l_ + r_ > 0 else float("nan") for l_, r_ in LR]}


def _weld_summary(records: list, p: dict):
    m = np.array([r["mismatch"] for r in records], dtype=float)
    med = np.nanmedian(m, axis=0)
    js = p["eps_exponents"]
    summary = {"median_mismatch": med, "mean_mismatch": np.nanmean(m, axis=0),
               "series": {"median_mismatch_vs_j": [[j, v] for j, v in zip(js, med)]}}
    crit = Criterion("weld_length_matching", strictly_decreasing(med), med,
                     f"median |L - R| / (L + R) strictly decreasing over eps = 2^-{js}")
    return summary, [crit]


WELD = Experiment(
    "exp_weld",
    "a (2,1)-wedge cut by an independent SLE_4 has matching quantum lengths on the two sides of the curve",
    {"t": 0.5, "dt": 2.0**-10, "eps_exponents": [6, 8, 10], "beta": 5.0, "s_min": -4.0, "s_max": 12.0},
    _weld_replica, _weld_summary, replicas=100,
)


# -- interface law ----------------------------------------------------------------


def _interface_replica(p: dict, rng) -> dict:
    left = sample_wedge(2.0, p["alpha"], "last-exit", rng=rng.child(0)).field
    right = sample_wedge(2.0, p["alpha"], "last-exit", rng=rng.child(1)).field
    eps = 2.0 ** -p["j_max"]
    mL = truncated_derivative_measure(left, p["beta"], eps)
    mR = truncated_derivative_measure(right, p["beta"], eps)
    avail = min(mR.total - float(mR.cdf(0.0)), float(mL.cdf(0.0)))
    qmax = min(p["q_max"], avail * (1 - 1e-9))
    k = int(math.floor(p["pairs_per_unit"] * qmax))
    if k < p["min_pairs"]:
        return {"ok": False, "reason": "too little boundary mass", "mass": avail}
    corr = quantum_correspondence(mR, mL, qmax * np.arange(1, k + 1) / k)
    try:
        iface = build_welding_curve(corr)
    except REPLICA_FAILURES as exc:
        return {"ok": False, "reason": type(exc).__name__, "mass": avail}
    d = iface.driving()
    return {"ok": True, "times": d.times, "values": d.values, "simple": is_simple(iface.curve), "pairs": k}


def _interface_summary(records: list, p: dict):
    good = [r for r in records if r["ok"]]
    Ts = np.array([r["times"][-1] for r in good])
    tmax = float(np.quantile(Ts, p["t_quantile"]))
    use = [r for r in good if r["times"][-1] >= tmax]
    tg = tmax * np.arange(1, p["n_times"] + 1) / p["n_times"]
    W = np.array([np.interp(tg, r["times"], r["values"]) for r in use])
    var = W.var(axis=0, ddof=1)
    slope = float(np.polyfit(tg, var, 1)[0])
    inc = np.diff(np.concatenate([np.zeros((len(use), 1)), W], axis=1), axis=1) / math.sqrt(4.0 * tg[0])
    ks = ks_test(inc.ravel(), sps.norm.cdf)
    lo, hi = p["slope_range"]
    qv = [float(np.sum(np.diff(r["values"]) ** 2) / r["times"][-1]) for r in good]
    summary = {"seams": len(records), "welded": len(good), "used": len(use), "t_max": tmax,
               "capacity_quantiles": np.quantile(Ts, [0.0, 0.05, 0.5, 0.95]).tolist() if good else [],
               "simple_fraction": float(np.mean([r["simple"] for r in good])) if good else float("nan"),
               "slope": slope, "ks_D": ks.D, "ks_p": ks.p, "median_qv_over_t": float(np.median(qv)),
               "skipped": {r["reason"]: sum(1 for s in records if not s["ok"] and s["reason"] == r["reason"])
                           for r in records if not r["ok"]},
               "series": {"var_w_vs_t": [[float(t), float(v)] for t, v in zip(tg, var)]}}
    crits = [
        Criterion("interface_variance_slope", lo <= slope <= hi, slope,
                  f"regression slope of Var W_t on t in [{lo:g}, {hi:g}]"),
        Criterion("interface_gaussian_increments", ks.p > p["p_min"], ks.p,
                  f"pooled increments / sqrt(4 dt) vs N(0,1), KS p > {p['p_min']:g}"),
    ]
    return summary, crits


INTERFACE = Experiment(
    "exp_interface",
    "welding two independent (2,2)-wedges by truncated critical length gives a seam driven by sqrt(4) B",
    {"alpha": 2.0, "beta": 5.0, "j_max": 12, "pairs_per_unit": 256, "q_max": 1.0, "min_pairs": 16,
     "t_quantile": 0.1, "n_times": 20, "slope_range": [3.0, 5.0], "p_min": 0.01},
    _interface_replica, _interface_summary, replicas=300,
)


# -- zip-up stationarity ---------------------------------------------------------------


def canonical_radial(fld, Q: float = 2.0, at=(0.5, 1.0)) -> np.ndarray:
    """Rescale so the radial part last exits the line ``2s`` at ``s = 0``; return it at ``at``."""
    rad = radial_part(fld)
    s = rad.times
    a = _crossing(s, rad.values - Q * s, "last")
    return np.asarray(radial_part(rescale_field(fld, math.exp(-a), Q)).at(np.asarray(at, dtype=float)))


def _zipup_replica(p: dict, rng) -> dict:
    xs = default_grid(p["n_cells"], p["half_width"])
    # the two arms use independent fields, so a failure in one does not discard the other
    out = {}
    try:
        out["direct"] = canonical_radial(sample_wedge(2.0, 1.0, "last-exit", xs=xs, rng=rng.child(0)).field,
                                         at=p["s"])
    except REPLICA_FAILURES as exc:
        out["direct_failure"] = f"{type(exc).__name__}: {exc}"[:80]
    try:
        f = sample_wedge(2.0, 1.0, "last-exit", xs=xs, rng=rng.child(1)).field
        pushed, _ = zip_up(f, None, p["t"], p["beta"], pairs_per_unit=p["pairs_per_unit"])
        out["zipped"] = canonical_radial(pushed, at=p["s"])
    except REPLICA_FAILURES as exc:
        out["zipped_failure"] = f"{type(exc).__name__}: {exc}"[:80]
    return out


def _zipup_summary(records: list, p: dict):
    A = np.array([r["direct"] for r in records if "direct" in r]).reshape(-1, len(p["s"]))
    B = np.array([r["zipped"] for r in records if "zipped" in r]).reshape(-1, len(p["s"]))
    crits, rows = [], []
    for j, s in enumerate(p["s"]):
        ks = ks_2samp(A[:, j], B[:, j])
        rows.append({"s": s, "D": ks.D, "p": ks.p, "mean_direct": float(A[:, j].mean()),
                     "mean_zipped": float(B[:, j].mean())})
        crits.append(Criterion(f"zipup_radial_s{s:g}", ks.p > p["p_min"], ks.p,
                               f"two-sample KS of the canonical radial part at s = {s:g}, p > {p['p_min']:g}"))
    reasons: dict = {}
    for r in records:
        for arm in ("direct", "zipped"):
            if f"{arm}_failure" in r:
                key = f"{arm}: {r[arm + '_failure']}"
                reasons[key] = reasons.get(key, 0) + 1
    summary = {"direct_used": len(A), "zipped_used": len(B), "failures": reasons, "marginals": rows,
               "series": {f"zipped_quantiles_s{s:g}": [[float(a), float(b)] for a, b in
                                                       zip(np.quantile(A[:, j], np.linspace(0.02, 0.98, 49)),
                                                           np.quantile(B[:, j], np.linspace(0.02, 0.98, 49)))]
                          for j, s in enumerate(p["s"])}}
    return summary, crits


ZIPUP = Experiment(
    "exp_zipup",
    "zipping a (2,1)-wedge up by quantum length and rescaling canonically leaves its law unchanged",
    {"t": 0.5, "beta": 5.0, "pairs_per_unit": 1024, "n_cells": 8192, "half_width": 16.0, "s": [0.5, 1.0],
     "p_min": 0.01},
    _zipup_replica, _zipup_summary, replicas=500,
)
