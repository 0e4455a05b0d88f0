import json

import pytest

from weldlab.cli import main
from weldlab.experiments import (
    ConfigError,
    Report,
    UnknownExperiment,
    get,
    make_config,
    names,
    parse_flat,
    plot_series,
    run_experiment,
)

SMALL = {"block": "8", "n_cells": "256", "eps": str(2.0**-6)}


# -- configs ------------------------------------------------------------------------------


def test_parse_flat():
    text = """
    # a comment
    gamma = 1.5   # trailing comment
    eps=0.25

    name = a b
    """
    assert parse_flat(text) == {"gamma": "1.5", "eps": "0.25", "name": "a b"}


@pytest.mark.parametrize("bad", ["gamma 1.5", "= 3", "a = 1\na = 2"])
def test_parse_flat_rejects(bad):
    with pytest.raises(ConfigError):
        parse_flat(bad)


def test_make_config_coerces_and_validates():
    exp = get("exp_gmc")
    cfg = make_config(exp, {"gamma": "1.25", "block": "7", "replicas": "3", "seed": "11"})
    assert cfg.params["gamma"] == 1.25 and cfg.params["block"] == 7
    assert (cfg.replicas, cfg.seed) == (3, 11)
    assert make_config(exp, {"seed": "11"}, seed=4).seed == 4
    with pytest.raises(ConfigError, match="unknown keys"):
        make_config(exp, {"gama": "1"})
    with pytest.raises(ConfigError):
        make_config(exp, {"gamma": "one"})
    with pytest.raises(ConfigError):
        make_config(exp, replicas=0)


def test_list_and_nested_coercion():
    ratio = get("exp_ratio")
    cfg = make_config(ratio, {"gammas": "1.5, 1.7", "intervals": "0,2; 0,1"})
    assert cfg.params["gammas"] == [1.5, 1.7]
    assert cfg.params["intervals"] == [[0.0, 2.0], [0.0, 1.0]]


def test_registry():
    assert "exp_gmc" in names() and names() == sorted(names())
    with pytest.raises(UnknownExperiment) as exc:
        get("exp_nope")
    assert "exp_gmc" in str(exc.value)
    assert get("exp_points").replica is get("exp_coupled").replica


# -- runs and reports -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_report():
    return run_experiment(make_config(get("exp_gmc"), SMALL, seed=3, replicas=4))


def test_rerun_is_byte_identical(small_report):
    again = run_experiment(make_config(get("exp_gmc"), SMALL, seed=3, replicas=4))
    assert again.to_ndjson() == small_report.to_ndjson()
    other = run_experiment(make_config(get("exp_gmc"), SMALL, seed=4, replicas=4))
    assert other.to_ndjson() != small_report.to_ndjson()


def test_worker_count_does_not_change_report(small_report):
    par = run_experiment(make_config(get("exp_gmc"), SMALL, seed=3, replicas=4, workers=2))
    assert par.to_ndjson() == small_report.to_ndjson()


def test_report_round_trip(small_report):
    text = small_report.to_ndjson()
    lines = [json.loads(s) for s in text.splitlines()]
    assert [d["type"] for d in lines] == ["header"] + ["replica"] * 4 + ["summary", "criterion"]
    assert [d["stream_id"] for d in lines[1:5]] == [0, 1, 2, 3]
    back = Report.from_ndjson(text)
    assert back.to_ndjson() == text
    assert back.passed == small_report.passed


def test_summary_text_and_plot_series(small_report):
    txt = small_report.summary_text()
    assert "gmc_first_moment" in txt and txt.rstrip().endswith(("ALL PASS", "SOME CRITERIA FAILED"))
    series = plot_series(small_report)
    body = series["mass_histogram"].splitlines()
    assert body[0].startswith("#") and len(body[2].split()) == 2


# -- command line ------------------------------------------------------------------------------


def test_cli_run_list_plot(tmp_path, capsys):
    cfg = tmp_path / "gmc.cfg"
    cfg.write_text("".join(f"{k} = {v}\n" for k, v in SMALL.items()))
    out = tmp_path / "out"
    code = main(["run", "exp_gmc", "--config", str(cfg), "--seed", "3", "--replicas", "4", "--out", str(out)])
    rep = Report.from_ndjson((out / "exp_gmc.ndjson").read_text())
    assert code == (0 if rep.passed else 1)
    assert (out / "exp_gmc.summary.txt").exists()
    assert main(["plot-data", str(out / "exp_gmc.ndjson")]) == 0
    dat = (out / "exp_gmc.mass_histogram.dat").read_text().splitlines()
    assert len(dat[-1].split()) == 2
    capsys.readouterr()
    assert main(["list"]) == 0
    assert "exp_weld" in capsys.readouterr().out


def test_cli_exit_code_on_failed_criterion(tmp_path):
    # an absurd CI width of zero cannot be met
    cfg = tmp_path / "strict.cfg"
    cfg.write_text("".join(f"{k} = {v}\n" for k, v in SMALL.items()) + "ci_k = 0\n")
    assert main(["run", "exp_gmc", "--config", str(cfg), "--replicas", "2"]) == 1


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["run", "exp_nope"]) == 2
    assert "registered" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert main(["run", "exp_gmc", "--config", str(bad)]) == 2
    assert main(["run", "exp_gmc", "--config", str(tmp_path / "missing.cfg")]) == 2


# -- service --------------------------------------------------------------------------------------


def test_service_endpoints():
    from fastapi.testclient import TestClient

    from weldlab.service import app

    client = TestClient(app)
    r = client.get("/experiments")
    assert r.status_code == 200 and "exp_gmc" in [e["name"] for e in r.json()]
    r = client.post("/run", json={"experiment": "exp_gmc", "seed": 3, "replicas": 4, "params": SMALL})
    assert r.status_code == 200
    body = r.json()
    local = run_experiment(make_config(get("exp_gmc"), SMALL, seed=3, replicas=4))
    assert body["report"] == local.to_ndjson() and body["passed"] == local.passed
    assert client.post("/run", json={"experiment": "exp_nope"}).status_code == 404
    assert client.post("/run", json={"experiment": "exp_gmc", "params": {"gama": 1}}).status_code == 422
    assert client.post("/run", json={"experiment": "exp_gmc", "replicas": 0}).status_code == 422
