"""Command-line entry point.

Exit codes: 0 success, 1 internal error, 2 user/input error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__, kpi, reports, simulator, smote_gen
from .errors import EmptyInput, InputError
from .fidelity import compare
from .ingest import (
    EVENT_COLUMNS,
    gen_records_from_trace,
    jobs_from_event_log,
    parse_jobs,
    parse_sites,
    read_gen_records,
    write_gen_records,
)

logger = logging.getLogger("gridlens")

EXIT_OK, EXIT_INTERNAL, EXIT_USER = 0, 1, 2


def _open(path):
    try:
        return open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _out_dir(args) -> Path:
    if not args.out:
        raise InputError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_trace(path, fmt: str):
    """Jobs from either a jobs CSV or a simulator event log."""
    if fmt == "auto":
        with _open(path) as fh:
            header = fh.readline().strip().split(",")
        fmt = "events" if all(c in header for c in EVENT_COLUMNS) else "jobs"
    with _open(path) as fh:
        if fmt == "events":
            jobs = jobs_from_event_log(fh)
            if not jobs:
                raise EmptyInput("event log holds no jobs")
            return jobs, []
        bundle = parse_jobs(fh)
    return bundle.jobs, bundle.rejects


def _report_rejects(rejects, n_jobs):
    if not rejects:
        return
    logger.warning("%d rows rejected, %d jobs accepted", len(rejects), n_jobs)
    for line, reason in rejects[:10]:
        logger.warning("  line %d: %s", line, reason)
    if len(rejects) > 10:
        logger.warning("  ... %d more", len(rejects) - 10)


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    jobs, rejects = _load_trace(args.trace, args.format)
    _report_rejects(rejects, len(jobs))
    if args.sites:
        with _open(args.sites) as fh:
            sites = parse_sites(fh)
        unknown = sorted({j.computing_site for j in jobs} - set(sites))
        if unknown:
            logger.warning("%d job sites missing from the sites file: %s", len(unknown), unknown[:5])
    edges = kpi.default_queue_bins(args.bins)
    files = reports.write_kpi_reports(
        jobs, out, threshold=args.threshold_others, edges=edges, wasted_mode=kpi.WastedTimeMode(args.wasted_time)
    )
    manifest = reports.RunManifest(
        "analyze",
        reports.input_digests(args.trace, args.sites),
        {"threshold_others": args.threshold_others, "bins": args.bins, "wasted_time": args.wasted_time,
         "rejects": len(rejects)},
        args.seed,
    )
    manifest.record_outputs(out, files)
    manifest.write(out)
    print(f"analyzed {len(jobs)} jobs -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _out_dir(args)
    with _open(args.jobs) as fh:
        bundle = parse_jobs(fh)
    _report_rejects(bundle.rejects, len(bundle.jobs))
    with _open(args.sites) as fh:
        sites = parse_sites(fh)
    records, skipped = gen_records_from_trace(bundle, sites)
    if skipped:
        logger.warning("%d jobs skipped (unknown site or missing cpu_time)", len(skipped))
    seed = 0 if args.seed is None else args.seed
    model = smote_gen.fit(
        records, k=args.k, seed=seed, scaling=args.scaling,
        log_features=() if args.raw_space else smote_gen.DEFAULT_LOG_FEATURES,
    )
    synth = smote_gen.synthesize_matching(model)
    with open(out / "synthetic.csv", "w", encoding="utf-8", newline="") as fh:
        write_gen_records(synth, fh)
    smote_gen.save_model(model, out / "model.npz")
    files = ["synthetic.csv", "model.npz"] + reports.write_fidelity(compare(records, synth), out)
    manifest = reports.RunManifest(
        "synth",
        reports.input_digests(args.jobs, args.sites),
        {"k": args.k, "scaling": args.scaling, "raw_space": args.raw_space, "training_rows": len(records)},
        seed,
    )
    manifest.record_outputs(out, files)
    manifest.write(out)
    print(f"synthesized {len(synth)} rows -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    with _open(args.real) as fh:
        real = read_gen_records(fh)
    with _open(args.synth) as fh:
        synth = read_gen_records(fh)
    report = compare(real, synth)
    files = reports.write_fidelity(report, out)
    manifest = reports.RunManifest("evaluate", reports.input_digests(args.real, args.synth), {}, args.seed)
    manifest.record_outputs(out, files)
    manifest.write(out)
    for name, v in report.per_feature.items():
        print(f"{name:18s} {v['statistic']:16s} {v['score']:.4f}")
    print(f"{'overall':18s} {'':16s} {report.overall:.4f}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    scenario = simulator.load_scenario(args.scenario, policy=args.policy, seed=args.seed)
    result = simulator.run(scenario)
    (out / "summary.json").write_text(result.to_json(), encoding="utf-8")
    with open(out / "events.csv", "w", encoding="utf-8", newline="") as fh:
        simulator.write_event_log(result.event_log, fh)
    with open(out / "queue_times.csv", "w", encoding="utf-8", newline="") as fh:
        simulator.write_queue_times(result, fh)
    manifest = reports.RunManifest(
        "simulate",
        reports.input_digests(*simulator.scenario_inputs(args.scenario)),
        {"policy": scenario.policy.name, "policy_params": dict(scenario.policy.params),
         "cutoff": scenario.cutoff, "replay_failures": scenario.replay_failures},
        scenario.seed,
    )
    manifest.record_outputs(out, ["summary.json", "events.csv", "queue_times.csv"])
    manifest.write(out)
    s = result.summary()
    print(f"{s['jobs']} jobs under {s['policy']}: {s['outcomes']}; mean queue time {s['queue_time']['mean']}")
    return EXIT_OK


def cmd_ingest_check(args) -> int:
    with _open(args.jobs) as fh:
        bundle = parse_jobs(fh)
    n_sites = None
    if args.sites:
        with _open(args.sites) as fh:
            n_sites = len(parse_sites(fh))
    print(f"{len(bundle.jobs)} jobs accepted, {len(bundle.rejects)} rejected")
    for line, reason in bundle.rejects:
        print(f"line {line}: {reason}")
    if n_sites is not None:
        print(f"{n_sites} sites")
    if args.out:
        out = _out_dir(args)
        with open(out / "rejects.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["line", "reason"])
            w.writerows(bundle.rejects)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for all randomness")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threshold-others", type=float, default=kpi.DEFAULT_OTHERS_THRESHOLD,
                        help="share below which sites fold into Others (analyze)")
    common.add_argument("--k", type=int, default=smote_gen.DEFAULT_K, help="SMOTE neighbour count (synth)")
    common.add_argument("--policy", default=None, help="allocation policy override (simulate)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gridlens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gridlens {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="compute KPI reports from a trace or event log")
    p.add_argument("trace")
    p.add_argument("--sites")
    p.add_argument("--format", choices=("auto", "jobs", "events"), default="auto")
    p.add_argument("--bins", type=int, default=50, help="number of log-spaced queue-time bins")
    p.add_argument("--wasted-time", choices=("wall", "cpu"), default="wall")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", parents=[common], help="fit SMOTE and write a size-matched synthetic table")
    p.add_argument("jobs")
    p.add_argument("sites")
    p.add_argument("--scaling", choices=("minmax", "zscore"), default="minmax")
    p.add_argument("--raw-space", action="store_true", help="interpolate heavy-tailed features in raw space")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", parents=[common], help="per-feature fidelity between two GenRecord CSVs")
    p.add_argument("real")
    p.add_argument("synth")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", parents=[common], help="run a what-if scenario")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest-check", parents=[common], help="validate a jobs CSV")
    p.add_argument("jobs")
    p.add_argument("--sites")
    p.set_defaults(func=cmd_ingest_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
