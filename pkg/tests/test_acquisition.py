import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scan_helpers import embedded_connector, simple_scan, stub_planner

from hemiscan.acquisition import (
    CSV_HEADER,
    RETRY_ATTEMPTS,
    DatasetFormatError,
    PowerRecord,
    ScanAborted,
    ScanDataset,
    ScanSettings,
    atomic_append,
    completeness_check,
    expected_bounds,
    init_dataset_file,
    load_dataset,
    read_records,
    run_scan,
    set_crash_hook,
    validate_record,
)
from hemiscan.clock import SimClock
from hemiscan.grid import SCAN_PRESETS, GridSpec, generate_grid
from hemiscan.rf import LinkBackend, LinkConfig
from hemiscan.scpi import Analyzer, EmbeddedConnection, TransportError, configure

TESTS = Path(__file__).parent
SMALL = GridSpec(radius=0.08, phi_step=90.0, theta_step=30.0, theta_end=60.0)


def rec(i, p=-20.0, valid=True):
    return PowerRecord(i, 10.0 * i, 20.0, 0.08, p, valid, "2000-01-01T00:00:00+00:00")


def test_record_row_roundtrip():
    r = rec(3, -21.25)
    assert PowerRecord.from_row(dict(zip(CSV_HEADER, r.row()))) == r
    with pytest.raises(DatasetFormatError):
        PowerRecord.from_row(dict(zip(CSV_HEADER, r.row()[:5] + ["yes", "t"])))


def test_validate_record():
    assert validate_record(-30.0, -90.0, 0.0)
    assert not validate_record(-95.0, -90.0, 0.0)
    assert not validate_record(5.0, -90.0, 0.0)
    assert not validate_record(float("nan"), -90.0, 0.0)
    assert not validate_record("x", -90.0, 0.0)


def test_atomic_append_and_read(tmp_path):
    path = tmp_path / "d.csv"
    init_dataset_file(path)
    assert read_records(path) == []
    for i in range(3):
        atomic_append(path, rec(i))
    assert [r.index for r in read_records(path)] == [0, 1, 2]
    assert not (tmp_path / ".d.csv.tmp").exists()


def test_read_rejects_bad_files(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DatasetFormatError):
        read_records(p)
    p.write_text(",".join(CSV_HEADER) + "\n" + ",".join(rec(2).row()) + "\n" + ",".join(rec(1).row()) + "\n")
    with pytest.raises(DatasetFormatError):
        read_records(p)
    p.write_text(",".join(CSV_HEADER) + "\n1,2\n")
    with pytest.raises(DatasetFormatError):
        read_records(p)
    assert read_records(tmp_path / "missing.csv") == []


def test_append_refuses_torn_file(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text(",".join(CSV_HEADER) + "\n0,1")
    with pytest.raises(DatasetFormatError):
        atomic_append(p, rec(1))


def test_crash_hook_sees_checkpoints(tmp_path):
    seen = []
    set_crash_hook(seen.append)
    try:
        init_dataset_file(tmp_path / "d.csv")
        atomic_append(tmp_path / "d.csv", rec(0))
    finally:
        set_crash_hook(None)
    assert seen == ["open-temp", "partial-write", "before-rename", "after-rename"] * 2


def test_dataset_add_requires_increasing_index():
    ds = ScanDataset()
    ds.add(rec(1))
    with pytest.raises(ValueError):
        ds.add(rec(1))


def test_completeness_split():
    grid = generate_grid(SMALL)
    records = [rec(0), rec(1, valid=False), rec(4)]
    c = completeness_check(records, grid)
    assert c.missing == [2, 3] + list(range(5, len(grid)))
    assert c.invalid == [1]
    assert c.coverage == pytest.approx(2 / len(grid))
    assert completeness_check([], []).coverage == 0.0


def test_expected_bounds():
    be = LinkBackend(LinkConfig(noise_sigma=0.5, multipath_ripple_sigma=1.0))
    samples = generate_grid(SMALL)
    lo, hi = expected_bounds(be, samples, margin_db=6.0)
    assert lo == -90.0
    assert hi == pytest.approx(max(be.ideal(s.coord) for s in samples) + 6.0 + 4.0 + 2.0)


def test_settings_validation():
    with pytest.raises(ValueError):
        ScanSettings(dwell=0.0)
    with pytest.raises(ValueError):
        ScanSettings(floor=0.0, ceiling=-1.0)


def test_run_scan_records_and_metadata(tmp_path, rig):
    samples = generate_grid(SMALL)
    be = LinkBackend(LinkConfig(noise_sigma=0.0))
    out = tmp_path / "scan.csv"
    ds = simple_scan(samples, rig, be, out, stub_planner(), dwell=2.0)
    assert [r.index for r in ds.records] == [s.index for s in samples]
    on_disk = load_dataset(out)
    assert on_disk.records == ds.records
    assert on_disk.metadata["acquisition_time_s"] == pytest.approx(2.0 * len(samples))
    assert on_disk.metadata["n_records"] == len(samples)
    assert on_disk.metadata["motion_time_s"] > 0
    # timestamps advance by the dwell only
    assert ds.records[1].timestamp == "2000-01-01T00:00:04.000000+00:00"
    for r, s in zip(ds.records, samples):
        assert abs(r.p_rx_dbm - be.ideal(s.coord)) < 3e-3
        assert (r.phi_deg, r.theta_deg) == (s.phi_deg, s.theta_deg)


def test_run_scan_skips_unreachable(tmp_path, rig):
    samples = generate_grid(SMALL)
    be = LinkBackend(LinkConfig())
    ds = simple_scan(samples, rig, be, tmp_path / "s.csv", stub_planner(fail={1, 4}))
    c = completeness_check(ds, samples)
    assert c.missing == [1, 4]
    statuses = [d["status"] for d in ds.diagnostics]
    assert statuses.count("missing") == 2


def test_run_scan_flags_out_of_bounds(tmp_path, rig):
    samples = generate_grid(SMALL)
    be = LinkBackend(LinkConfig(noise_sigma=0.0))
    settings = ScanSettings(1.0, 60e9, 10.0, -90.0, -25.0)
    ds = run_scan(samples, rig, embedded_connector(be, 0), settings, SimClock(), tmp_path / "s.csv", plan=stub_planner())
    c = completeness_check(ds, samples)
    assert c.invalid and not c.missing
    assert all(not r.valid for r in ds.records if r.p_rx_dbm > -25.0)


class FlakyConnector:
    def __init__(self, backend, failures):
        self.analyzer = Analyzer(backend)
        self.failures = failures
        self.calls = 0

    def __call__(self):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError("connection refused")
        conn = EmbeddedConnection(self.analyzer)
        configure(conn, 60e9)
        return conn


def test_run_scan_retries_then_succeeds(tmp_path, rig):
    samples = generate_grid(SMALL)
    conn = FlakyConnector(LinkBackend(), RETRY_ATTEMPTS - 1)
    clock = SimClock()
    ds = run_scan(samples, rig, conn, ScanSettings(ceiling=10.0), clock, tmp_path / "s.csv", plan=stub_planner())
    assert len(ds.records) == len(samples)
    assert ds.diagnostics[0]["attempts"] == RETRY_ATTEMPTS
    # two 1 s back-offs before the first dwell
    assert ds.records[0].timestamp == "2000-01-01T00:00:03.000000+00:00"


def test_run_scan_aborts_with_partial_dataset(tmp_path, rig):
    samples = generate_grid(SMALL)
    conn = FlakyConnector(LinkBackend(), 100)
    out = tmp_path / "s.csv"
    with pytest.raises(ScanAborted) as err:
        run_scan(samples, rig, conn, ScanSettings(ceiling=10.0), SimClock(), out, plan=stub_planner())
    assert err.value.dataset.records == []
    assert read_records(out) == []
    assert json.loads((tmp_path / "s.json").read_text())["n_records"] == 0


def test_scan_is_reproducible(tmp_path, rig):
    samples = generate_grid(SMALL)
    be = LinkBackend(LinkConfig(noise_sigma=0.3, multipath_ripple_sigma=1.0, seed=3))
    a = simple_scan(samples, rig, be, tmp_path / "a.csv", stub_planner(), noise_seed=5)
    b = simple_scan(samples, rig, be, tmp_path / "b.csv", stub_planner(), noise_seed=5)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert [r.p_rx_dbm for r in a.records] == [r.p_rx_dbm for r in b.records]


def expected_complete_records(crash_at: int, n_grid: int) -> int:
    """Records on disk after a kill at checkpoint ``crash_at`` (1-based).

    Checkpoints: 4 for the initial metadata, 4 for the empty dataset, then 5
    per record (before-append + four in the atomic rewrite, the rename
    happening between the 4th and 5th).
    """
    if crash_at < 13:
        return 0
    return min(n_grid, (crash_at - 13) // 5 + 1)


def run_child(out: Path, crash_at: int | None) -> int:
    env = dict(os.environ)
    env.pop("HEMISCAN_CRASH_AT", None)
    if crash_at is not None:
        env["HEMISCAN_CRASH_AT"] = str(crash_at)
    env["PYTHONPATH"] = os.pathsep.join([str(TESTS), env.get("PYTHONPATH", "")])
    proc = subprocess.run([sys.executable, str(TESTS / "crash_child.py"), str(out)], env=env, capture_output=True, timeout=60)
    return proc.returncode


def check_crash_point(tmp_path: Path, crash_at: int) -> None:
    grid = generate_grid(SCAN_PRESETS["8cm_20deg"])
    out = tmp_path / f"crash_{crash_at}.csv"
    code = run_child(out, crash_at)
    total = 8 + 5 * len(grid) + 4
    assert code == (137 if crash_at <= total else 0)
    records = read_records(out)  # raises on any torn or partial record
    n = expected_complete_records(crash_at, len(grid))
    assert [r.index for r in records] == list(range(n))
    assert all(np.isfinite(r.p_rx_dbm) and r.timestamp for r in records)
    c = completeness_check(records, grid)
    assert c.missing == list(range(n, len(grid)))
    assert c.invalid == []


@pytest.mark.parametrize("crash_at", [1, 4, 7, 8, 12, 13, 14, 15, 16, 17, 18, 200, 371, 372])
def test_crash_at_checkpoint(tmp_path, crash_at):
    check_crash_point(tmp_path, crash_at)
