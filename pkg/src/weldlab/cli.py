"""``lab`` command line: run, list, plot-data, serve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

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

EXIT_FAIL = 1
EXIT_USAGE = 2


def _cmd_run(args) -> int:
    exp = get(args.experiment)
    values = parse_flat(Path(args.config).read_text()) if args.config else {}
    cfg = make_config(exp, values, seed=args.seed, replicas=args.replicas, workers=args.workers, out=args.out)
    report = run_experiment(cfg)
    if args.out:
        nd, txt = report.write(args.out)
        print(f"wrote {nd} and {txt}", file=sys.stderr)
    sys.stdout.write(report.summary_text())
    return 0 if report.passed else EXIT_FAIL


def _cmd_list(args) -> int:
    for n in names():
        e = get(n)
        extra = f" [{e.description}]" if e.description else ""
        print(f"{n:16s} {e.anchor}{extra}")
    return 0


def _cmd_plot_data(args) -> int:
    path = Path(args.report)
    report = Report.from_ndjson(path.read_text())
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    files = plot_series(report)
    if not files:
        print(f"{path}: no series to export", file=sys.stderr)
    for name, text in files.items():
        target = out / f"{report.header['experiment']}.{name}.dat"
        target.write_text(text)
        print(target)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("weldlab.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lab", description="critical LQG welding experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one registered experiment")
    run.add_argument("experiment")
    run.add_argument("--config", help="flat key = value file")
    run.add_argument("--seed", type=int)
    run.add_argument("--replicas", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="directory for the NDJSON report and the summary")
    run.set_defaults(func=_cmd_run)

    ls = sub.add_parser("list", help="list registered experiments")
    ls.set_defaults(func=_cmd_list)

    pd = sub.add_parser("plot-data", help="export report series as two-column files")
    pd.add_argument("report")
    pd.add_argument("--out", help="output directory (default: next to the report)")
    pd.set_defaults(func=_cmd_plot_data)

    sv = sub.add_parser("serve", help="start the HTTP service")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8000)
    sv.set_defaults(func=_cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UnknownExperiment as exc:
        print(f"lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FileNotFoundError) as exc:
        print(f"lab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
