"""Experiment plumbing: flat configs, replica scheduling and NDJSON reports."""

from __future__ import annotations

import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from weldlab.rng import RngStream

COMMON_KEYS = ("seed", "replicas", "workers")


class ConfigError(ValueError):
    """A configuration key is unknown or its value does not parse."""


class UnknownExperiment(KeyError):
    def __init__(self, name: str, known):
        self.name = name
        self.known = sorted(known)
        super().__init__(name)

    def __str__(self) -> str:
        return f"unknown experiment {self.name!r}; registered: {', '.join(self.known)}"


@dataclass(frozen=True)
class Criterion:
    name: str
    passed: bool
    value: float | list | None = None
    threshold: str = ""
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: {_fmt(self.value)} ({self.threshold})"


@dataclass(frozen=True)
class Experiment:
    """``replica(params, rng) -> dict`` plus ``summarize(records, params) -> (summary, criteria)``."""

    name: str
    anchor: str
    defaults: dict
    replica: Callable[[dict, RngStream], dict]
    summarize: Callable[[list, dict], tuple[dict, list]]
    replicas: int = 1
    description: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    replicas: int
    seed: int
    params: dict
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


# ---------------------------------------------------------------------------
# flat key = value configs


def parse_flat(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value, default):
    if not isinstance(value, str):
        return value
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, (list, tuple)) and default and isinstance(default[0], (list, tuple)):
            # nested lists: rows separated by ";", entries by ","
            return [_coerce(key, row, list(default[0])) for row in value.split(";") if row.strip()]
        if isinstance(default, (list, tuple)):
            items = [v.strip() for v in value.split(",") if v.strip()]
            kind = type(default[0]) if default else float
            return [kind(v) for v in items]
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} like {default!r}") from exc
    return value


def make_config(exp: Experiment, values: dict | None = None, *, seed: int | None = None,
                replicas: int | None = None, workers: int | None = None, out: str | None = None) -> ExperimentConfig:
    """Validate every key against the experiment's defaults before anything is sampled."""
    values = dict(values or {})
    unknown = sorted(set(values) - set(exp.defaults) - set(COMMON_KEYS))
    if unknown:
        raise ConfigError(f"unknown keys for {exp.name}: {', '.join(unknown)}")
    params = dict(exp.defaults)
    for k, v in values.items():
        if k in exp.defaults:
            params[k] = _coerce(k, v, exp.defaults[k])
    base = {"seed": 0, "replicas": exp.replicas, "workers": 1}
    common = {k: int(_coerce(k, values.get(k, base[k]), 0)) for k in COMMON_KEYS}
    if seed is not None:
        common["seed"] = seed
    if replicas is not None:
        common["replicas"] = replicas
    if workers is not None:
        common["workers"] = workers
    return ExperimentConfig(exp.name, common["replicas"], common["seed"], params, out, common["workers"])


# ---------------------------------------------------------------------------
# reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def _fmt(v) -> str:
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


@dataclass
class Report:
    header: dict
    records: list
    summary: dict
    criteria: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_ndjson(self) -> str:
        lines = [_dumps({"type": "header", **self.header})]
        for i, rec in enumerate(self.records):
            lines.append(_dumps({"type": "replica", "index": i, "stream_id": i, **rec}))
        lines.append(_dumps({"type": "summary", **self.summary}))
        for c in self.criteria:
            lines.append(_dumps({"type": "criterion", "name": c.name, "pass": c.passed, "value": c.value,
                                 "threshold": c.threshold, "detail": c.detail}))
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        h = self.header
        out = [f"{h['experiment']}: {h['anchor']}",
               f"seed {h['seed']}, {h['replicas']} replicas"]
        for k in sorted(self.summary):
            if k == "series":
                continue
            out.append(f"  {k} = {_fmt(_jsonable(self.summary[k]))}")
        out.extend(c.line() for c in self.criteria)
        out.append("ALL PASS" if self.passed else "SOME CRITERIA FAILED")
        return "\n".join(out) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        nd = d / f"{self.header['experiment']}.ndjson"
        txt = d / f"{self.header['experiment']}.summary.txt"
        nd.write_text(self.to_ndjson())
        txt.write_text(self.summary_text())
        return nd, txt

    @classmethod
    def from_ndjson(cls, text: str) -> "Report":
        header, records, summary, criteria = {}, [], {}, []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type", None)
            if kind == "header":
                header = rec
            elif kind == "replica":
                rec.pop("index", None)
                rec.pop("stream_id", None)
                records.append(rec)
            elif kind == "summary":
                summary = rec
            elif kind == "criterion":
                criteria.append(Criterion(rec["name"], rec["pass"], rec.get("value"), rec.get("threshold", ""),
                                          rec.get("detail", {})))
            else:
                raise ValueError(f"unrecognised report line type {kind!r}")
        if not header:
            raise ValueError("report has no header line")
        return cls(header, records, summary, criteria)


def plot_series(report: Report) -> dict[str, str]:
    """Two-column (x y) text per named series, gnuplot-ready."""
    series = report.summary.get("series", {})
    out = {}
    for name in sorted(series):
        rows = series[name]
        body = "".join(f"{float(x)!r} {float(y)!r}\n" for x, y in rows)
        out[name] = f"# {report.header['experiment']} {name}\n# x y\n" + body
    return out


# ---------------------------------------------------------------------------
# running


def _run_one(args) -> dict:
    name, params, seed, index = args
    from weldlab.experiments.registry import get

    return get(name).replica(params, RngStream(seed, index))


def _environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def run_config(exp: Experiment, cfg: ExperimentConfig) -> Report:
    jobs = [(exp.name, cfg.params, cfg.seed, i) for i in range(cfg.replicas)]
    if cfg.workers == 1:
        records = [_run_one(j) for j in jobs]
    else:
        # results come back in submission order, so the merge is by replica index
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    summary, criteria = exp.summarize(records, cfg.params)
    from weldlab import __version__

    header = {"experiment": exp.name, "anchor": exp.anchor, "seed": cfg.seed, "replicas": cfg.replicas,
              "params": cfg.params, "code_version": __version__, "environment": _environment()}
    return Report(header, records, summary, criteria)
