"""Plan, run and analyze simulated robotic hemispherical antenna scans.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from . import __version__
from .acquisition import (
    CSV_HEADER,
    PowerRecord,
    ScanAborted,
    ScanSettings,
    completeness_check,
    expected_bounds,
    load_dataset,
    rig_planner,
    run_scan,
)
from .analysis import (
    align,
    deviation_distribution,
    peak_direction,
    power_metrics,
    repeatability,
    write_deltas,
    write_polar_cut,
    write_report,
)
from .clock import SimClock, SimulatedTimeWallStamps
from .config import (
    Campaign,
    ConfigError,
    backend,
    build_campaign,
    config_hash,
    load_config,
    seed_override,
)
from .grid import SCAN_PRESETS, generate_grid
from .planner import PlannerParams, benchmark, plan_to_pose
from .rf import LinkBackend
from .scpi.analyzer import Analyzer
from .scpi.client import EmbeddedConnection, TcpConnection, TransportError, configure
from .scpi.server import serve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("hemiscan")


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ helpers


def _campaign(args) -> Campaign:
    path = args.config or os.environ.get("HEMISCAN_CONFIG")
    overrides = seed_override(args.seed) if args.seed is not None else None
    try:
        cfg = load_config(path, overrides)
        return build_campaign(cfg)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"configuration error: {exc}") from exc


def _outdir(args, camp: Campaign | None) -> Path:
    out = Path(args.out or (camp.cfg["output_dir"] if camp else "hemiscan-out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _clock(args):
    return SimClock() if args.deterministic_time else SimulatedTimeWallStamps()


def _metadata(camp: Campaign, args, extra: dict | None = None) -> dict:
    cfg = camp.cfg
    meta = {
        "config_hash": config_hash(cfg),
        "seeds": dict(cfg["seeds"]),
        "grid": {k: (v.value if hasattr(v, "value") else v) for k, v in camp.grid.__dict__.items()},
        "link": dict(cfg["link"]),
        "planner": dict(cfg["planner"]),
        "tool_version": __version__,
        "mode": "embedded" if args.embedded else "tcp",
    }
    meta.update(extra or {})
    return meta


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _connector(camp: Campaign, args, be: LinkBackend):
    inst = camp.cfg["instrument"]
    fc = float(camp.link.frequency)

    def setup(conn):
        configure(conn, fc, float(inst["span_hz"]), float(inst["rbw_hz"]), float(inst["vbw_hz"]))
        return conn

    if args.embedded:
        analyzer = Analyzer(be, noise_seed=camp.noise_seed, n_bins=int(inst["n_bins"]))
        return lambda: setup(EmbeddedConnection(analyzer))
    host = args.host or inst["host"]
    port = int(args.port if args.port is not None else inst["port"])
    timeout = float(inst["timeout_s"])
    return lambda: setup(TcpConnection(host, port, timeout))


def _reference_records(be: LinkBackend, dataset, samples) -> list[PowerRecord]:
    by_index = {s.index: s for s in samples}
    out = []
    for r in dataset.records:
        s = by_index[r.index]
        out.append(PowerRecord(r.index, r.phi_deg, r.theta_deg, r.radius_m, be.ideal(s.coord), r.valid, r.timestamp))
    return out


def _write_records(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())


def _do_scan(camp: Campaign, args, out: Path, be: LinkBackend, name: str):
    link = be.link
    floor, ceiling = expected_bounds(be, camp.samples, float(camp.cfg["scan"]["validity_margin_db"]))
    settings = ScanSettings(camp.dwell, link.frequency, link.sweep_rate, floor, ceiling)
    path = out / f"{name}.csv"
    ds = run_scan(
        camp.samples,
        camp.rig,
        _connector(camp, args, be),
        settings,
        _clock(args),
        path,
        plan=rig_planner(camp.rig, camp.params),
        metadata=_metadata(camp, args),
        diagnostics_path=out / f"{name}.log",
    )
    return ds, path


# ------------------------------------------------------------------ subcommands


def cmd_plan(args) -> int:
    camp = _campaign(args)
    out = _outdir(args, camp)
    with open(out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "phi_deg", "theta_deg", "radius_m"])
        for s in camp.samples:
            w.writerow([s.index, repr(s.phi_deg), repr(s.theta_deg), repr(s.coord.r)])
    q = camp.rig.q_home.copy()
    ok = 0
    with open(out / "plan.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "status", "used_recovery", "planning_time_s", "path_length_rad"])
        for s in camp.samples:
            res = plan_to_pose(camp.rig, camp.rig.target(s.coord), q, camp.params)
            q = res.end_config
            length = repr(res.trajectory.joint_path_length) if res.ok else ""
            w.writerow([s.index, res.status.value, str(res.used_recovery).lower(), f"{res.planning_time:.6f}", length])
            ok += res.ok
    frac = ok / len(camp.samples)
    print(f"grid points: {len(camp.samples)}  reachable: {ok}  reachability: {frac:.4f}")
    return EXIT_OK


def cmd_scan(args) -> int:
    camp = _campaign(args)
    out = _outdir(args, camp)
    be = backend(camp.cfg)
    try:
        ds, path = _do_scan(camp, args, out, be, "dataset")
    except ScanAborted as exc:
        print(f"scan aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_records(out / "reference.csv", _reference_records(be, ds, camp.samples))
    comp = completeness_check(ds, camp.samples)
    threshold = float(camp.cfg["scan"]["coverage_threshold"])
    summary = {
        "records": len(ds.records),
        "grid_points": len(camp.samples),
        "coverage": comp.coverage,
        "missing": comp.missing,
        "invalid": comp.invalid,
        "acquisition_time_s": ds.metadata.get("acquisition_time_s"),
        "motion_time_s": ds.metadata.get("motion_time_s"),
    }
    _write_json(out / "scan_summary.json", summary)
    print(f"records: {len(ds.records)}/{len(camp.samples)}  coverage: {comp.coverage:.4f}  -> {path}")
    if comp.missing:
        print(f"missing indices: {comp.missing}")
    if comp.invalid:
        print(f"invalid indices: {comp.invalid}")
    return EXIT_OK if comp.coverage >= threshold else EXIT_RUNTIME


def cmd_analyze(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    try:
        datasets = [load_dataset(p) for p in args.datasets]
    except (OSError, ValueError) as exc:
        raise _Fail(EXIT_CONFIG, f"cannot read dataset: {exc}") from exc
    report = {}
    try:
        if args.reference:
            ref = load_dataset(args.reference)
            series = align(datasets[0].records, ref.records)
            metrics = power_metrics(series, linear_rho=args.linear_rho, std_err=args.std_err)
            dist = deviation_distribution(series)
            extra = {"deviation": dist.__dict__}
            write_report(out / "metrics.json", metrics, extra)
            write_deltas(out / "deltas.csv", series)
            for theta in args.cut or []:
                write_polar_cut(out / f"cut_theta_{theta:g}.csv", series, theta)
            report.update(metrics.to_dict())
            rho = "undefined" if metrics.pearson_rho is None else f"{metrics.pearson_rho:.4f}"
            print(
                f"MAE {metrics.mae_db:.3f} dB  RMSE {metrics.rmse_db:.3f} dB  std.err {metrics.std_err_db:.4f} dB  "
                f"rho {rho}  peak {metrics.max_prx_dbm:.2f} dBm at {metrics.peak_dir}"
            )
        if len(datasets) >= 2:
            rep = repeatability(datasets)
            _write_json(out / "repeatability.json", {"repeatability_db": rep, "n_scans": len(datasets)})
            report["repeatability_db"] = rep
            print(f"repeatability {rep:.4f} dB over {len(datasets)} scans")
        if not args.reference and len(datasets) < 2:
            pk = peak_direction(datasets[0])
            print(f"peak direction {pk}")
    except ValueError as exc:
        raise _Fail(EXIT_CONFIG, f"analysis error: {exc}") from exc
    return EXIT_OK


def cmd_benchmark(args) -> int:
    camp = _campaign(args)
    out = _outdir(args, camp)
    presets = args.presets or list(SCAN_PRESETS)
    planners = args.planners or ["rrt_connect", "joint_interpolation"]
    rows_all = []
    summaries = []
    for preset in presets:
        if preset not in SCAN_PRESETS:
            raise _Fail(EXIT_CONFIG, f"unknown grid preset {preset!r}")
        samples = generate_grid(SCAN_PRESETS[preset])
        for planner in planners:
            params = PlannerParams(**{**camp.params.__dict__, "planner": planner})
            rows, summary = benchmark(camp.rig, samples, planner, params)
            summary["grid"] = preset
            summaries.append(summary)
            rows_all.extend((preset, r) for r in rows)
            print(
                f"{preset:>11s} {planner:>19s}: success {summary['success_rate'] * 100:.1f}%  "
                f"mean time {summary['mean_planning_time_s']:.3f} s  mean path {summary['mean_path_length_rad']}"
            )
    with open(out / "benchmark.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["grid", "planner", "pose_index", "status", "time_s", "path_length_rad"])
        for preset, r in rows_all:
            w.writerow([preset, r.planner, r.pose_index, r.status, f"{r.time_s:.6f}", repr(r.path_length_rad)])
    totals = {}
    for planner in planners:
        mine = [s for s in summaries if s["planner"] == planner]
        n = sum(s["n_poses"] for s in mine)
        totals[planner] = {
            "success_rate": sum(s["success_rate"] * s["n_poses"] for s in mine) / n,
            "mean_planning_time_s": sum(s["mean_planning_time_s"] * s["n_poses"] for s in mine) / n,
            "calibration_error_mm": "n/a",
        }
    _write_json(
        out / "benchmark.json",
        {
            "per_grid": summaries,
            "overall": totals,
            "note": "calibration error has no simulation counterpart and is reported as n/a",
        },
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    camp = _campaign(args)
    out = _outdir(args, camp)
    be = backend(camp.cfg, verification=True)
    try:
        ds, _ = _do_scan(camp, args, out, be, "verify_scan")
    except ScanAborted as exc:
        print(f"verification scan aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    t = be.target
    target = (t.phi_deg, t.theta_deg)
    peak = peak_direction(ds)
    on_grid = any(abs(s.phi_deg - t.phi_deg) < 1e-9 and abs(s.theta_deg - t.theta_deg) < 1e-9 for s in camp.samples)
    passed = on_grid and abs(peak[0] - target[0]) < 1e-9 and abs(peak[1] - target[1]) < 1e-9
    report = {"target_dir": list(target), "peak_dir": list(peak), "target_on_grid": on_grid, "pass": passed}
    _write_json(out / "verify.json", report)
    print(f"reflector target {target}  measured peak {peak}  {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_RUNTIME


def cmd_serve(args) -> int:
    camp = _campaign(args)
    inst = camp.cfg["instrument"]
    be = backend(camp.cfg, verification=args.reflector)
    host = args.host or inst["host"]
    port = int(args.port if args.port is not None else inst["port"])
    try:
        handle = serve(host, port, Analyzer(be, noise_seed=camp.noise_seed, n_bins=int(inst["n_bins"])))
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    h, p = handle.address
    print(f"SCPI emulator listening on {h}:{p}", flush=True)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    try:
        while not stop.is_set():
            stop.wait(0.2)
    finally:
        handle.shutdown()
    return EXIT_OK


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="campaign TOML/JSON (default: $HEMISCAN_CONFIG or packaged defaults)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override planner, noise and environment seeds")
    common.add_argument("--embedded", action="store_true", help="use the in-process analyzer emulator")
    common.add_argument("--deterministic-time", action="store_true", help="logical clock for timestamps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hemiscan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hemiscan {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", parents=[common], help="grid + reachability report, no RF")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("scan", parents=[common], help="full acquisition run")
    sp.add_argument("--host")
    sp.add_argument("--port", type=int)
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("analyze", parents=[common], help="metrics against a reference, repeatability")
    sp.add_argument("datasets", nargs="+", help="dataset CSV(s); two or more also yield repeatability")
    sp.add_argument("--reference", help="reference dataset CSV on the same grid")
    sp.add_argument("--cut", type=float, action="append", help="export a polar cut at this theta (deg)")
    sp.add_argument("--linear-rho", action="store_true", help="correlate linear powers instead of dB")
    sp.add_argument("--std-err", choices=["sem", "std"], default="sem", help="std/sqrt(N) (default) or plain std of the deviations")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("benchmark", parents=[common], help="planner benchmark over the preset scan grids")
    sp.add_argument("--presets", nargs="*", choices=sorted(SCAN_PRESETS))
    sp.add_argument("--planners", nargs="*", choices=["rrt_connect", "joint_interpolation"])
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("verify", parents=[common], help="corner-reflector verification scan")
    sp.add_argument("--host")
    sp.add_argument("--port", type=int)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("serve", parents=[common], help="run the SCPI analyzer emulator")
    sp.add_argument("--host")
    sp.add_argument("--port", type=int)
    sp.add_argument("--reflector", action="store_true", help="serve the reflector target instead of the DUT link")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _Fail as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"instrument error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
