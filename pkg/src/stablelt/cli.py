"""Command-line entry point: simulate, estimate, verify, report, schema.

Exit codes: 0 pass, 1 verdict fail, 2 usage or precondition error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .harness import (
    CONFIG_SCHEMA,
    EXPERIMENTS,
    ConfigError,
    PreconditionError,
    build_innovation,
    build_lfsm,
    build_model,
    load_config,
    run_experiment,
    stream_id,
    write_result,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _config_help() -> str:
    lines = ["config keys (JSON object, unknown keys rejected):"]
    for key, sub in CONFIG_SCHEMA["properties"].items():
        req = " (required)" if key in CONFIG_SCHEMA["required"] else ""
        lines.append(f"  {key}{req}: {sub.get('description', '')}")
    return "\n".join(lines)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="override master_seed")
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--out", help="override output_dir")

    p = argparse.ArgumentParser(
        prog="stablelt",
        description="Occupation functionals of linear processes and local times of their limits.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write normalized partial-sum paths (frame + CSV)")
    sub.add_parser("estimate", parents=[common], help="write a local-time estimate of a limit path (CSV)")
    v = sub.add_parser("verify", parents=[common], help="run a check; exit 0 on pass, 1 on fail")
    v.add_argument("theorem", choices=EXPERIMENTS)
    r = sub.add_parser("report", help="consolidate a results directory")
    r.add_argument("results_dir")
    r.add_argument("--out", help="report directory (default: <results_dir>/report)")
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def _load(args, **extra):
    overrides = {"master_seed": args.seed, "threads": args.threads, "output_dir": args.out, **extra}
    return load_config(args.config, overrides)


def cmd_simulate(args) -> int:
    from .path_engine import SamplePath, write_frame, write_path_csv
    from .harness import _sample_paths

    cfg = _load(args)
    model, spec = build_model(cfg), build_innovation(cfg)
    paths, _ = _sample_paths(cfg, model, spec, 0, 1)
    out = Path(cfg.output_dir) / cfg.exp_id / "paths"
    out.mkdir(parents=True, exist_ok=True)
    for n, p in paths.items():
        single = SamplePath(p.times, p.values[0], p.meta)
        write_path_csv(single, out / f"path_n{n}.csv")
        write_frame(single, out / f"path_n{n}.sltp")
    print(f"wrote {len(paths)} path(s) to {out}")
    return EXIT_PASS


def cmd_estimate(args) -> int:
    from .harness import _reference_paths
    from .local_time import estimate_grid, write_estimate_csv

    cfg = _load(args)
    lim = build_lfsm(cfg, build_model(cfg))
    path = _reference_paths(cfg, lim, 0, 1).row(0)
    lo, hi = float(np.min(path.values)), float(np.max(path.values))
    x_grid = np.arange(np.floor(lo / cfg.eta) * cfg.eta, hi + cfg.eta, cfg.eta)
    est = estimate_grid(path, cfg.t_list, x_grid, "window", eta=cfg.eta)
    out = Path(cfg.output_dir) / cfg.exp_id
    out.mkdir(parents=True, exist_ok=True)
    write_estimate_csv(est, out / "local_time.csv")
    print(f"wrote {out / 'local_time.csv'} (stream {stream_id(1 << 20, 0)})")
    return EXIT_PASS


def cmd_verify(args) -> int:
    cfg = _load(args, experiment=args.theorem)
    result = run_experiment(cfg)
    out = write_result(result, cfg)
    print(f"{cfg.experiment}: {'PASS' if result.passed else 'FAIL'} -> {out / 'summary.json'}")
    return EXIT_PASS if result.passed else EXIT_FAIL


_SERIES_METRIC = {"t2": "ks", "t3i": "ks", "t3ii": "ks", "t4": "mean_D2_sum", "t5": "mean_D2_integral", "p6": "gap", "prop1": "ks"}


def cmd_report(args) -> int:
    root = Path(args.results_dir)
    runs = sorted(p.parent for p in root.glob("*/summary.json")) if root.is_dir() else []
    if not runs:
        print("no results", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else root / "report"
    out.mkdir(parents=True, exist_ok=True)
    by_exp: dict[str, list] = {}
    for run in runs:
        summary = json.loads((run / "summary.json").read_text())
        by_exp.setdefault(summary["experiment"], []).append((run, summary))
    md = ["# Results", ""]
    for exp in sorted(by_exp):
        md += [f"## {exp}", "", "| run | verdict |", "|---|---|"]
        series_rows = []
        metric = _SERIES_METRIC.get(exp)
        for run, summary in by_exp[exp]:
            md.append(f"| {run.name} | {'pass' if summary['passed'] else 'fail'} |")
            table = run / "tables" / "metrics.csv"
            if metric and table.exists():
                with table.open() as fh:
                    for r in csv.DictReader(fh):
                        if r["metric"] == metric:
                            series_rows.append([run.name, r["f_id"], r["t"], r["x"], r.get("eps", ""), r["n"], r["value"]])
        if series_rows:
            with (out / f"series_{exp}.csv").open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["run", "f_id", "t", "x", "eps", "n", metric])
                w.writerows(series_rows)
            md += ["", f"series: `series_{exp}.csv` ({metric} vs n)"]
        md.append("")
    (out / "report.md").write_text("\n".join(md))
    print(f"report for {len(runs)} run(s) in {out}")
    return EXIT_PASS


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "schema":
            print(json.dumps(CONFIG_SCHEMA, indent=2))
            return EXIT_PASS
        handler = {"simulate": cmd_simulate, "estimate": cmd_estimate, "verify": cmd_verify, "report": cmd_report}[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        if exc.report:
            print(json.dumps(exc.report, indent=2, default=str), file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
