"""Measurement loop: plan, move, dwell, trigger, fetch, validate, persist.

The dataset CSV is rewritten through a temporary file and an atomic rename
on every append, so a crash at any instant leaves either the previous or the
new complete file on disk, never a torn record.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import __version__
from .grid import SphericalSample
from .planner import PlannerParams, PlanOutcome, Rig, plan_to_pose
from .rf import LinkBackend, ideal_power_dbm, reflector_power_dbm
from .scpi.client import TransportError, client_measure

log = logging.getLogger(__name__)

CSV_HEADER = ("index", "phi_deg", "theta_deg", "radius_m", "p_rx_dbm", "valid", "timestamp")
RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 1.0


class ScanAborted(RuntimeError):
    """The instrument stayed unreachable; the partial dataset on disk is intact."""

    def __init__(self, message: str, dataset: "ScanDataset"):
        super().__init__(message)
        self.dataset = dataset


class DatasetFormatError(ValueError):
    pass


# ------------------------------------------------------------------ crash instrumentation

_crash_hook: Callable[[str], None] | None = None


def set_crash_hook(hook: Callable[[str], None] | None) -> None:
    """Install a callback invoked at every persistence checkpoint (used by fault-injection tests)."""
    global _crash_hook
    _crash_hook = hook


def _checkpoint(name: str) -> None:
    if _crash_hook is not None:
        _crash_hook(name)


def crash_after_env_hook() -> None:
    """Kill the process hard at checkpoint number $HEMISCAN_CRASH_AT (1-based)."""
    target = os.environ.get("HEMISCAN_CRASH_AT")
    if not target:
        return
    limit = int(target)
    count = 0

    def hook(name: str) -> None:
        nonlocal count
        count += 1
        if count >= limit:
            os._exit(137)

    set_crash_hook(hook)


# ------------------------------------------------------------------ records


@dataclass(frozen=True)
class PowerRecord:
    index: int
    phi_deg: float
    theta_deg: float
    radius_m: float
    p_rx_dbm: float
    valid: bool
    timestamp: str

    def row(self) -> list[str]:
        return [
            str(self.index),
            repr(float(self.phi_deg)),
            repr(float(self.theta_deg)),
            repr(float(self.radius_m)),
            repr(float(self.p_rx_dbm)),
            "true" if self.valid else "false",
            self.timestamp,
        ]

    @classmethod
    def from_row(cls, row: dict) -> "PowerRecord":
        valid = row["valid"].strip().lower()
        if valid not in ("true", "false"):
            raise DatasetFormatError(f"bad valid flag {row['valid']!r}")
        return cls(
            int(row["index"]),
            float(row["phi_deg"]),
            float(row["theta_deg"]),
            float(row["radius_m"]),
            float(row["p_rx_dbm"]),
            valid == "true",
            row["timestamp"],
        )


@dataclass
class ScanDataset:
    metadata: dict = field(default_factory=dict)
    records: list[PowerRecord] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)

    def add(self, rec: PowerRecord) -> None:
        if self.records and rec.index <= self.records[-1].index:
            raise ValueError("record indices must be strictly increasing")
        self.records.append(rec)

    def powers(self) -> np.ndarray:
        return np.array([r.p_rx_dbm for r in self.records])

    def valid_records(self) -> list[PowerRecord]:
        return [r for r in self.records if r.valid]


def validate_record(p_rx: float, floor: float, ceiling: float) -> bool:
    try:
        p = float(p_rx)
    except (TypeError, ValueError):
        return False
    if not math.isfinite(p):
        return False
    return floor <= p <= ceiling


# ------------------------------------------------------------------ persistence


def _fsync_dir(path: Path) -> None:
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    _checkpoint("open-temp")
    with open(tmp, "wb") as fh:
        half = len(data) // 2
        fh.write(data[:half])
        fh.flush()
        _checkpoint("partial-write")
        fh.write(data[half:])
        fh.flush()
        os.fsync(fh.fileno())
    _checkpoint("before-rename")
    os.replace(tmp, path)
    _fsync_dir(path.parent)
    _checkpoint("after-rename")


def _encode(records: Iterable[PowerRecord]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue().encode("utf-8")


def init_dataset_file(path) -> None:
    """Create (or truncate to) a header-only dataset and clear any stale temp file."""
    path = Path(path)
    path.with_name(f".{path.name}.tmp").unlink(missing_ok=True)
    _atomic_write(path, _encode([]))


def atomic_append(path, record: PowerRecord) -> None:
    """Append one record so the file on disk is always a complete, parsable dataset."""
    path = Path(path)
    old = path.read_bytes() if path.exists() else _encode([])
    if not old.endswith(b"\n"):
        raise DatasetFormatError(f"{path} does not end with a complete line")
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(record.row())
    _atomic_write(path, old + buf.getvalue().encode("utf-8"))


def read_records(path) -> list[PowerRecord]:
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if tuple(reader.fieldnames) != CSV_HEADER:
            raise DatasetFormatError(f"unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise DatasetFormatError("truncated record")
            out.append(PowerRecord.from_row(row))
    idx = [r.index for r in out]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise DatasetFormatError("record indices are not strictly increasing")
    return out


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def write_metadata(path, metadata: dict) -> None:
    data = json.dumps(metadata, indent=2, sort_keys=True).encode("utf-8") + b"\n"
    _atomic_write(sidecar_path(path), data)


def load_dataset(path) -> ScanDataset:
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    return ScanDataset(meta, read_records(path))


# ------------------------------------------------------------------ completeness


@dataclass(frozen=True)
class Completeness:
    coverage: float
    missing: list[int]
    invalid: list[int]


def completeness_check(dataset: ScanDataset | list[PowerRecord], grid) -> Completeness:
    """Coverage = valid records matched to grid indices / grid size.

    ``missing`` lists grid indices with no record at all; ``invalid`` lists
    indices whose record is flagged invalid. The two never overlap.
    """
    records = dataset.records if isinstance(dataset, ScanDataset) else list(dataset)
    indices = [s.index for s in grid]
    if not indices:
        return Completeness(0.0, [], [])
    by_index = {r.index: r for r in records}
    missing = [i for i in indices if i not in by_index]
    invalid = [i for i in indices if i in by_index and not by_index[i].valid]
    ok = len(indices) - len(missing) - len(invalid)
    return Completeness(ok / len(indices), missing, invalid)


# ------------------------------------------------------------------ scan loop


def expected_bounds(backend: LinkBackend, samples, margin_db: float = 6.0) -> tuple[float, float]:
    """Receiver floor and a link-budget ceiling (max ideal power over the grid plus margins)."""
    link = backend.link
    if backend.target is not None:
        peak = max(reflector_power_dbm(backend.target, link, s.coord) for s in samples)
    else:
        peak = max(ideal_power_dbm(backend.pattern, link, s.coord) for s in samples)
    ceiling = peak + margin_db + 4.0 * link.multipath_ripple_sigma + 4.0 * link.noise_sigma
    return link.noise_floor, ceiling


@dataclass(frozen=True)
class ScanSettings:
    dwell: float = 1.0
    fc: float = 60e9
    sweep_rate: float = 10.0
    floor: float = -90.0
    ceiling: float = 0.0

    def __post_init__(self) -> None:
        if not self.dwell > 0:
            raise ValueError("dwell must be positive")
        if self.floor >= self.ceiling:
            raise ValueError("validity floor must be below the ceiling")


PlanFn = Callable[[object, np.ndarray], PlanOutcome]


def rig_planner(rig: Rig, params: PlannerParams) -> PlanFn:
    def plan(t_final, q_start):
        return plan_to_pose(rig, t_final, q_start, params)

    return plan


def run_scan(
    samples: list[SphericalSample],
    rig: Rig,
    connect: Callable[[], object],
    settings: ScanSettings,
    clock,
    out_path,
    plan: PlanFn | None = None,
    metadata: dict | None = None,
    diagnostics_path=None,
) -> ScanDataset:
    """Algorithm loop over the grid; returns the dataset (also persisted record by record)."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty sampling grid")
    plan = plan or rig_planner(rig, PlannerParams())
    out_path = Path(out_path)
    meta = dict(metadata or {})
    meta.setdefault("tool_version", __version__)
    meta.setdefault("start_time", clock.timestamp())
    meta["dwell_s"] = settings.dwell
    meta["validity_bounds_dbm"] = [settings.floor, settings.ceiling]
    write_metadata(out_path, meta)
    init_dataset_file(out_path)
    diag_fh = open(diagnostics_path, "w") if diagnostics_path else None
    ds = ScanDataset(meta)
    q = rig.q_home.copy()
    conn = None
    acq_time = 0.0
    motion_time = 0.0
    velocity_scale = PlannerParams().velocity_scale
    try:
        for smp in samples:
            entry = {"index": smp.index, "phi_deg": smp.phi_deg, "theta_deg": smp.theta_deg}
            outcome = plan(rig.target(smp.coord), q)
            entry["plan_status"] = outcome.status.value
            entry["planning_time_s"] = round(outcome.planning_time, 6)
            entry["used_recovery"] = outcome.used_recovery
            if outcome.end_config is not None:
                q = np.asarray(outcome.end_config, dtype=float)
            if not outcome.ok:
                entry["status"] = "missing"
                _diag(ds, diag_fh, entry)
                log.warning("pose %d unreachable: %s", smp.index, outcome.status.value)
                continue
            move = outcome.trajectory.execution_time(velocity_scale)
            motion_time += move
            entry["path_length_rad"] = round(outcome.trajectory.joint_path_length, 6)
            t_before = clock.now()
            p_rx, attempts = None, 0
            last_err = None
            while attempts < RETRY_ATTEMPTS:
                attempts += 1
                try:
                    if conn is None:
                        conn = connect()
                    p_rx = client_measure(conn, smp.coord, settings.fc, settings.dwell, clock, settings.sweep_rate)
                    break
                except TransportError as exc:
                    last_err = exc
                    log.warning("pose %d attempt %d: %s", smp.index, attempts, exc)
                    if conn is not None:
                        try:
                            conn.close()
                        except Exception:  # noqa: BLE001 - best effort on a broken link
                            pass
                    conn = None
                    if attempts < RETRY_ATTEMPTS:
                        clock.sleep(RETRY_BACKOFF_S)
            entry["attempts"] = attempts
            if p_rx is None:
                entry["status"] = "aborted"
                _diag(ds, diag_fh, entry)
                raise ScanAborted(f"instrument unreachable at pose {smp.index}: {last_err}", ds)
            acq_time += clock.now() - t_before
            valid = validate_record(p_rx, settings.floor, settings.ceiling)
            rec = PowerRecord(smp.index, smp.phi_deg, smp.theta_deg, smp.coord.r, p_rx, valid, clock.timestamp())
            _checkpoint("before-append")
            atomic_append(out_path, rec)
            ds.add(rec)
            entry["status"] = "ok" if valid else "invalid"
            entry["p_rx_dbm"] = p_rx
            entry["dwell_time_s"] = round(clock.now() - t_before, 6)
            _diag(ds, diag_fh, entry)
    finally:
        if diag_fh:
            diag_fh.close()
        if conn is not None:
            try:
                conn.close()
            except Exception:  # noqa: BLE001
                pass
        meta["acquisition_time_s"] = acq_time
        meta["motion_time_s"] = motion_time
        meta["n_records"] = len(ds.records)
        write_metadata(out_path, meta)
    return ds


def _diag(ds: ScanDataset, fh, entry: dict) -> None:
    ds.diagnostics.append(entry)
    if fh is not None:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")
        fh.flush()


def settings_dict(settings: ScanSettings) -> dict:
    return asdict(settings)
