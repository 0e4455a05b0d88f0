"""HTTP front end for the experiment registry."""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from weldlab import __version__
from weldlab.experiments import ConfigError, UnknownExperiment, get, make_config, names, run_experiment


class ExperimentInfo(BaseModel):
    name: str
    anchor: str
    replicas: int
    defaults: dict[str, Any]


class RunRequest(BaseModel):
    experiment: str
    seed: int = 0
    replicas: int | None = Field(default=None, ge=1)
    params: dict[str, Any] = Field(default_factory=dict)


class CriterionOut(BaseModel):
    name: str
    passed: bool
    value: Any = None
    threshold: str = ""


class RunResponse(BaseModel):
    experiment: str
    seed: int
    replicas: int
    passed: bool
    criteria: list[CriterionOut]
    summary: str
    report: str


app = FastAPI(title="weldlab", version=__version__)


@app.get("/experiments", response_model=list[ExperimentInfo])
def list_experiments():
    out = []
    for n in names():
        e = get(n)
        out.append(ExperimentInfo(name=n, anchor=e.anchor, replicas=e.replicas, defaults=e.defaults))
    return out


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest):
    try:
        exp = get(req.experiment)
        cfg = make_config(exp, req.params, seed=req.seed, replicas=req.replicas)
    except UnknownExperiment as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from None
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    report = run_experiment(cfg)
    crits = [CriterionOut(name=c.name, passed=c.passed, value=_plain(c.value), threshold=c.threshold)
             for c in report.criteria]
    return RunResponse(experiment=exp.name, seed=cfg.seed, replicas=cfg.replicas, passed=report.passed,
                       criteria=crits, summary=report.summary_text(), report=report.to_ndjson())


def _plain(v):
    import json

    from weldlab.experiments.core import _dumps

    return json.loads(_dumps(v))
