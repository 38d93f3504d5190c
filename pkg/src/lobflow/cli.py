"""Command-line pipeline: synthesize sessions, extract labeled flow with
replay verification, and emit realism reports.

Exit codes: 0 success, 1 failed reference check, 2 input or config error,
3 consistency failure (replay mismatch, verify-mode flow difference, or a
report that fails its own schema). Runs are reproducible from flags plus
input files: nothing here reads the clock or any hidden state.

With several --snapshots inputs, each session becomes one run written to
its own subdirectory <out>/<idx>_<stem>/ and runs execute in parallel up
to --jobs; a single input writes into <out> directly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InstrumentSpec, flows_equal
from .errors import (
    ConfigError,
    EmptyFile,
    InconsistentUpdate,
    ParseError,
)
from .flow import DEFAULT_MATCH_WINDOW, extract_session, read_flow_csv, write_flow_csv
from .ingest import load_session, write_snapshots, write_trades
from .metrics import REPORT_METRICS, ReportConfig, build_report
from .replay import replay_and_verify
from .synth import genconfig_from_dict, generate

__all__ = ["RunConfig", "cmd_extract", "cmd_metrics", "cmd_synth", "main"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_INCONSISTENT = 3

_INPUT_ERRORS = (ConfigError, ParseError, EmptyFile, OSError, ValueError)


@dataclass(frozen=True)
class RunConfig:
    """One unit of CLI work: a single session's inputs and output directory."""

    command: str
    out_dir: str
    spec_path: str | None = None
    snapshot_path: str | None = None
    trade_path: str | None = None
    flow_path: str | None = None
    verify_flow_path: str | None = None
    ranges_path: str | None = None
    metric_names: tuple[str, ...] | None = None
    dt: float | None = None
    window: float | None = None
    seed: int | None = None
    inline_extract: bool = False


def _require_inputs(run: RunConfig) -> None:
    # read paths must exist at invocation; catching this up front keeps the
    # error message ahead of any partial output
    for p in (run.spec_path, run.snapshot_path, run.trade_path,
              run.flow_path, run.verify_flow_path, run.ranges_path):
        if p is not None and not os.path.isfile(p):
            raise ConfigError(f"input not found: {p}")


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

def _first_flow_diff(a, b) -> str:
    if len(a) != len(b):
        return f"lengths differ ({len(a)} vs {len(b)})"
    for name in ("ts", "kind", "side", "tick", "size", "level"):
        bad = np.nonzero(getattr(a, name) != getattr(b, name))[0]
        if bad.size:
            return f"first difference at event {int(bad[0])} ({name})"
    return "tick_size differs"


def _write_mismatches(path: str, mismatches) -> None:
    lines = ["snapshot_idx,side,price,expected_qty,got_qty"]
    lines.extend(
        f"{m.snapshot_idx},{m.side.value},{m.price},{m.expected_qty},{m.got_qty}"
        for m in mismatches
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _extract_one(run: RunConfig) -> tuple[int, list[str], list[str]]:
    out: list[str] = []
    err: list[str] = []
    try:
        _require_inputs(run)
        spec = InstrumentSpec.from_json(run.spec_path)
        session = load_session(run.snapshot_path, run.trade_path, spec)
        window = DEFAULT_MATCH_WINDOW if run.window is None else run.window
        flow, match = extract_session(session, window=window)
    except InconsistentUpdate as exc:
        err.append(f"extract: {exc}")
        return EXIT_INCONSISTENT, out, err
    except _INPUT_ERRORS as exc:
        err.append(f"extract: {exc}")
        return EXIT_INPUT, out, err

    os.makedirs(run.out_dir, exist_ok=True)
    n = write_flow_csv(os.path.join(run.out_dir, "flow.csv"), flow)
    outcome = replay_and_verify(None, flow, session.snapshots)
    report = {
        "matched": match.matched,
        "unmatched": len(match.unmatched),
        "match_rate": match.match_rate,
        "window": match.window,
        "skipped_off_book": match.skipped_off_book,
        "events": n,
        "replay": {
            "checked": outcome.checked,
            "match_fraction": outcome.match_fraction,
            "mismatches": len(outcome.mismatches),
        },
    }
    with open(os.path.join(run.out_dir, "match_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")

    code = EXIT_OK
    if not outcome.ok:
        _write_mismatches(os.path.join(run.out_dir, "mismatches.csv"), outcome.mismatches)
        err.append(
            f"replay: {len(outcome.mismatches)} mismatching prices over {outcome.checked} "
            f"snapshots (match_fraction {outcome.match_fraction:.4f}); see mismatches.csv"
        )
        code = EXIT_INCONSISTENT
    if run.verify_flow_path is not None:
        try:
            reference = read_flow_csv(run.verify_flow_path, spec.tick_size)
        except _INPUT_ERRORS as exc:
            err.append(f"verify: {exc}")
            return EXIT_INPUT, out, err
        if not flows_equal(flow, reference):
            err.append(
                f"verify: extracted flow differs from {run.verify_flow_path}: "
                f"{_first_flow_diff(flow, reference)}"
            )
            code = EXIT_INCONSISTENT
    out.append(
        f"{run.out_dir}: {n} events, match_rate {match.match_rate:.4f}, "
        f"replay {outcome.match_fraction:.4f}"
    )
    return code, out, err


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _load_ranges(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read ranges {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("ranges file must map check name -> [lo, hi]")
    ranges = {}
    for key, bounds in raw.items():
        try:
            lo, hi = float(bounds[0]), float(bounds[1])
        except (TypeError, ValueError, IndexError, KeyError) as exc:
            raise ConfigError(f"range {key!r} must be a [lo, hi] pair: {exc}") from exc
        if not lo <= hi:
            raise ConfigError(f"range {key!r}: lo {lo} exceeds hi {hi}")
        ranges[str(key)] = (lo, hi)
    return ranges


def _report_config(run: RunConfig) -> ReportConfig:
    kw: dict = {}
    if run.dt is not None:
        if not run.dt > 0:
            raise ConfigError("--dt must be positive")
        kw["lrd_dt"] = run.dt
        kw["volvol_dt"] = run.dt
    if run.window is not None:
        if not run.window > 0:
            raise ConfigError("--window must be positive")
        kw["activity_window"] = run.window
    if run.ranges_path is not None:
        kw["ranges"] = _load_ranges(run.ranges_path)
    return ReportConfig(**kw)


def _acquire_flow(run: RunConfig, session, spec: InstrumentSpec):
    if run.inline_extract:
        flow, _ = extract_session(session)
        return flow
    path = run.flow_path or os.path.join(run.out_dir, "flow.csv")
    if not os.path.isfile(path):
        raise ConfigError(
            f"no flow input: pass --flow, extract into {run.out_dir} first, "
            "or use --inline-extract"
        )
    return read_flow_csv(path, spec.tick_size)


def _load_report_schema() -> dict:
    from importlib import resources

    text = resources.files("lobflow.schemas").joinpath("report.schema.json").read_text("utf-8")
    return json.loads(text)


def _csv(path: str, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join("" if c is None else f"{c:.10g}" if isinstance(c, float) else str(c) for c in row) + "\n")


def _write_metric_csvs(out_dir: str, metrics: dict) -> None:
    """Dump the bulk series next to report.json, one CSV per metric."""
    r = metrics.get("return_acf")
    if r is not None:
        rows = []
        for label, a in [("tick", r.tick), *r.by_dt.items()]:
            if a is None:
                continue
            rows.extend(
                (label, int(lag), float(rho), float(a.conf_band))
                for lag, rho in zip(a.lags.tolist(), a.rho.tolist())
            )
        _csv(os.path.join(out_dir, "return_acf.csv"), "clock,lag,rho,conf_band", rows)
    s = metrics.get("signature")
    if s is not None:
        _csv(os.path.join(out_dir, "signature.csv"), "lag_s,sigma2,normalized",
             zip(s.lags.tolist(), s.sigma2.tolist(), s.normalized.tolist()))
    w = metrics.get("window_activity")
    if w is not None:
        _csv(os.path.join(out_dir, "window_activity.csv"), "window_idx,count,volume",
             zip(range(w.n_windows), w.counts.tolist(), w.volumes.tolist()))
    for name in ("queue_gamma_bid", "queue_gamma_ask"):
        q = metrics.get(name)
        if q is not None:
            edges = q.hist_edges.tolist()
            _csv(os.path.join(out_dir, f"{name}.csv"), "bin_left,bin_right,count",
                 zip(edges[:-1], edges[1:], q.hist_counts.tolist()))
    v = metrics.get("volume_volatility")
    if v is not None:
        _csv(os.path.join(out_dir, "volume_volatility.csv"), "idx,corr",
             enumerate(v.per_window_corr))
    lr = metrics.get("vol_liquidity_ratio")
    if lr is not None:
        _csv(os.path.join(out_dir, "vol_liquidity_ratio.csv"), "idx,ratio",
             enumerate(lr.ratios))
    b = metrics.get("book_shape")
    if b is not None:
        _csv(os.path.join(out_dir, "book_shape.csv"), "level,bid_avg,ask_avg",
             zip(range(1, len(b.bid_avg) + 1), b.bid_avg.tolist(), b.ask_avg.tolist()))
    p = metrics.get("intraday")
    if p is not None:
        _csv(os.path.join(out_dir, "intraday.csv"), "bucket_start_ns,norm_count,norm_volume",
             zip(p.bucket_start.tolist(), p.norm_count.tolist(), p.norm_volume.tolist()))
    e = metrics.get("excitation")
    if e is not None:
        rows = []
        for i, label in enumerate(e.labels):
            vals = [None if np.isnan(x) else float(x) for x in e.excitation[i]]
            rows.append((label, *vals))
        _csv(os.path.join(out_dir, "excitation.csv"), "prev," + ",".join(e.labels), rows)


def _metrics_one(run: RunConfig) -> tuple[int, list[str], list[str]]:
    out: list[str] = []
    err: list[str] = []
    try:
        _require_inputs(run)
        spec = InstrumentSpec.from_json(run.spec_path)
        session = load_session(run.snapshot_path, run.trade_path, spec)
        flow = _acquire_flow(run, session, spec)
        config = _report_config(run)
        report = build_report(session, flow, config, select=run.metric_names)
    except _INPUT_ERRORS as exc:
        err.append(f"metrics: {exc}")
        return EXIT_INPUT, out, err

    payload = report.to_json_dict()
    os.makedirs(run.out_dir, exist_ok=True)
    with open(os.path.join(run.out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    _write_metric_csvs(run.out_dir, report.metrics)

    import jsonschema

    try:
        jsonschema.validate(payload, _load_report_schema())
    except jsonschema.ValidationError as exc:
        err.append(f"report.json failed its schema self-check: {exc.message}")
        return EXIT_INCONSISTENT, out, err

    for name, message in report.errors.items():
        err.append(f"metric {name} failed: {message}")
    failed = [k for k, c in report.reference_checks.items() if not c["passed"]]
    for key in failed:
        c = report.reference_checks[key]
        detail = c.get("reason") or f"value {c['value']} not in [{c['lo']}, {c['hi']}]"
        err.append(f"check failed: {key}: {detail}")
    n_checks = len(report.reference_checks)
    out.append(
        f"{run.out_dir}: {len(report.metrics)} metrics computed, "
        f"{len(report.errors)} failed, checks {n_checks - len(failed)}/{n_checks} passed"
    )
    return (EXIT_CHECK_FAILED if failed else EXIT_OK), out, err


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _synth_one(run: RunConfig) -> tuple[int, list[str], list[str]]:
    out: list[str] = []
    err: list[str] = []
    try:
        _require_inputs(run)
        with open(run.spec_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError("generator config must be a JSON object")
        if run.seed is not None:
            raw["seed"] = run.seed
        config = genconfig_from_dict(raw)
        result = generate(config)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        err.append(f"synth: {exc}")
        return EXIT_INPUT, out, err

    os.makedirs(run.out_dir, exist_ok=True)
    n_snap = write_snapshots(
        os.path.join(run.out_dir, "snapshots.csv"),
        result.data.snapshots,
        tick_size=config.tick_size,
    )
    n_trades = write_trades(
        os.path.join(run.out_dir, "trades.csv"), result.data.trades, config.tick_size
    )
    n_flow = write_flow_csv(os.path.join(run.out_dir, "flow_truth.csv"), result.flow)
    out.append(
        f"{run.out_dir}: snapshots.csv {n_snap} rows, trades.csv {n_trades}, "
        f"flow_truth.csv {n_flow} (seed {config.seed})"
    )
    return EXIT_OK, out, err


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def _emit(result: tuple[int, list[str], list[str]]) -> int:
    code, out, err = result
    for line in out:
        print(line)
    for line in err:
        print(line, file=sys.stderr)
    return code


def cmd_extract(run: RunConfig) -> int:
    """Label the flow behind one snapshot/trade session and verify it replays."""
    return _emit(_extract_one(run))


def cmd_metrics(run: RunConfig) -> int:
    """Compute the realism report for one session and evaluate range checks."""
    return _emit(_metrics_one(run))


def cmd_synth(run: RunConfig) -> int:
    """Generate one synthetic session with its ground-truth flow."""
    return _emit(_synth_one(run))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lobflow",
        description="Order-flow extraction, replay verification, and realism reports "
                    "for L2 order-book data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser(
        "extract",
        help="label Limit/Cancel/Market flow from snapshots (+ trades) and verify by replay",
    )
    ex.add_argument("--snapshots", nargs="+", required=True, metavar="CSV",
                    help="snapshot stream(s); several files become parallel runs")
    ex.add_argument("--trades", nargs="*", default=[], metavar="CSV",
                    help="trade prints, one file per snapshots entry (optional)")
    ex.add_argument("--spec", required=True, metavar="JSON", help="instrument spec file")
    ex.add_argument("--out", required=True, metavar="DIR")
    ex.add_argument("--window", type=float, default=None, metavar="S",
                    help=f"trade match window in seconds (default {DEFAULT_MATCH_WINDOW})")
    ex.add_argument("--verify-flow", nargs="*", default=[], metavar="CSV",
                    help="reference flow file(s); a differing extraction exits 3")
    ex.add_argument("--jobs", type=int, default=1, help="parallel sessions (default 1)")

    me = sub.add_parser(
        "metrics",
        help="compute stylized-fact metrics and emit report.json + per-metric CSVs",
    )
    me.add_argument("--snapshots", nargs="+", required=True, metavar="CSV")
    me.add_argument("--trades", nargs="*", default=[], metavar="CSV")
    me.add_argument("--flow", nargs="*", default=[], metavar="CSV",
                    help="labeled flow input; default <out>/flow.csv from a prior extract")
    me.add_argument("--spec", required=True, metavar="JSON", help="instrument spec file")
    me.add_argument("--out", required=True, metavar="DIR")
    me.add_argument("--metrics", default=None, metavar="NAMES",
                    help="comma-separated subset of: " + ",".join(REPORT_METRICS))
    me.add_argument("--ranges", default=None, metavar="JSON",
                    help='reference ranges {"path.to.value": [lo, hi], ...}; '
                         "any violation exits 1")
    me.add_argument("--dt", type=float, default=None, metavar="S",
                    help="sampling interval override for return-based metrics")
    me.add_argument("--window", type=float, default=None, metavar="S",
                    help="event-count window override for window activity")
    me.add_argument("--inline-extract", action="store_true",
                    help="run extraction in-process instead of reading a flow file")
    me.add_argument("--jobs", type=int, default=1, help="parallel sessions (default 1)")

    sy = sub.add_parser("synth", help="generate a synthetic session with ground-truth flow")
    sy.add_argument("--spec", required=True, metavar="JSON", help="generator config file")
    sy.add_argument("--out", required=True, metavar="DIR")
    sy.add_argument("--seed", type=int, default=None, help="override the seed in the config")
    return parser


def _paired(values: list, n_runs: int, name: str) -> list:
    if not values:
        return [None] * n_runs
    if len(values) != n_runs:
        raise ConfigError(f"--{name} needs one path per --snapshots entry "
                          f"({len(values)} given for {n_runs} runs)")
    return list(values)


def _plan_runs(args: argparse.Namespace) -> list[RunConfig]:
    if args.command == "synth":
        return [RunConfig(command="synth", out_dir=args.out,
                          spec_path=args.spec, seed=args.seed)]

    snapshots = list(args.snapshots)
    trades = _paired(args.trades, len(snapshots), "trades")
    verify = _paired(getattr(args, "verify_flow", []), len(snapshots), "verify-flow")
    flows = _paired(getattr(args, "flow", []), len(snapshots), "flow")

    metric_names: tuple[str, ...] | None = None
    if getattr(args, "metrics", None):
        metric_names = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
        unknown = set(metric_names) - set(REPORT_METRICS)
        if unknown:
            raise ConfigError(
                f"unknown metrics {sorted(unknown)}; valid names: {', '.join(REPORT_METRICS)}"
            )
        if not metric_names:
            raise ConfigError("--metrics given but no names parsed")

    multi = len(snapshots) > 1
    runs = []
    for i, snap in enumerate(snapshots):
        out_dir = (
            os.path.join(args.out, f"{i:03d}_{Path(snap).stem}") if multi else args.out
        )
        runs.append(RunConfig(
            command=args.command,
            out_dir=out_dir,
            spec_path=args.spec,
            snapshot_path=snap,
            trade_path=trades[i],
            flow_path=flows[i],
            verify_flow_path=verify[i],
            ranges_path=getattr(args, "ranges", None),
            metric_names=metric_names,
            dt=getattr(args, "dt", None),
            window=args.window,
            inline_extract=getattr(args, "inline_extract", False),
        ))
    return runs


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        runs = _plan_runs(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    worker = {"extract": _extract_one, "metrics": _metrics_one, "synth": _synth_one}[args.command]
    jobs = getattr(args, "jobs", 1)
    if len(runs) == 1 or jobs <= 1:
        results = [worker(run) for run in runs]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(runs))) as pool:
            results = list(pool.map(worker, runs))
    return max(_emit(result) for result in results)


if __name__ == "__main__":
    sys.exit(main())
