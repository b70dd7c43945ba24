"""Power-domain comparison metrics between a measured scan and a reference.

Conventions pinned here:
    - Deviations are in dB: delta = P_meas - P_ref.
    - Standard error is the sample standard deviation of delta divided by sqrt(N)
      (``std_err="std"`` reports the plain sample standard deviation instead).
    - Medians of even-length samples take the lower-middle order statistic.
    - SNR = peak power minus the (lower-middle) median of the lowest decile
      of powers, ceil(N/10) values.
    - Peak direction ties go to the lowest theta, then the lowest phi.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .se3 import DomainError


@dataclass(frozen=True, eq=False)
class AlignedSeries:
    phi_deg: np.ndarray
    theta_deg: np.ndarray
    measured: np.ndarray
    reference: np.ndarray

    def __post_init__(self) -> None:
        arrs = [np.asarray(getattr(self, k), dtype=float) for k in ("phi_deg", "theta_deg", "measured", "reference")]
        n = len(arrs[0])
        if any(a.ndim != 1 or len(a) != n for a in arrs):
            raise DomainError("aligned series need equal-length 1-D vectors")
        if n < 2:
            raise DomainError("aligned series need at least two points")
        for k, a in zip(("phi_deg", "theta_deg", "measured", "reference"), arrs):
            object.__setattr__(self, k, a)

    @property
    def delta(self) -> np.ndarray:
        return self.measured - self.reference

    @classmethod
    def from_values(cls, measured, reference) -> "AlignedSeries":
        n = len(measured)
        return cls(np.zeros(n), np.zeros(n), measured, reference)


def align(meas_records, ref_records) -> AlignedSeries:
    """Pair two record lists point-for-point; the grids must be identical."""
    m = [r for r in meas_records if r.valid]
    r = [x for x in ref_records if x.valid]
    key_m = [(x.index, round(x.phi_deg, 9), round(x.theta_deg, 9), round(x.radius_m, 12)) for x in m]
    key_r = [(x.index, round(x.phi_deg, 9), round(x.theta_deg, 9), round(x.radius_m, 12)) for x in r]
    if key_m != key_r:
        raise DomainError("measured and reference datasets are on different grids")
    return AlignedSeries(
        np.array([x.phi_deg for x in m]),
        np.array([x.theta_deg for x in m]),
        np.array([x.p_rx_dbm for x in m]),
        np.array([x.p_rx_dbm for x in r]),
    )


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise DomainError("median of an empty sample")
    return float(v[(len(v) - 1) // 2])


def pearson(x, y, linear: bool = False) -> float | None:
    """Pearson correlation; None when either vector has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if linear:
        x = 10.0 ** (x / 10.0)
        y = 10.0 ** (y / 10.0)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = math.sqrt(float(np.dot(xc, xc)))
    sy = math.sqrt(float(np.dot(yc, yc)))
    if sx == 0.0 or sy == 0.0:
        return None
    rho = float(np.dot(xc, yc)) / (sx * sy)
    return max(-1.0, min(1.0, rho))


def peak_direction_of(phi_deg, theta_deg, power) -> tuple[float, float]:
    p = np.asarray(power, dtype=float)
    if len(p) == 0:
        raise DomainError("no valid records")
    best = np.max(p)
    idx = np.flatnonzero(p == best)
    phi = np.asarray(phi_deg, dtype=float)[idx]
    theta = np.asarray(theta_deg, dtype=float)[idx]
    k = np.lexsort((phi, theta))[0]
    return float(phi[k]), float(theta[k])


def peak_direction(dataset) -> tuple[float, float]:
    recs = [r for r in dataset.records if r.valid]
    if not recs:
        raise DomainError("no valid records")
    return peak_direction_of([r.phi_deg for r in recs], [r.theta_deg for r in recs], [r.p_rx_dbm for r in recs])


def snr_of(power) -> float:
    p = np.asarray(power, dtype=float)
    if len(p) < 10:
        raise DomainError("SNR needs at least 10 valid records")
    k = math.ceil(len(p) / 10)
    quiet = np.sort(p)[:k]
    return float(np.max(p) - lower_median(quiet))


def snr_estimate(dataset) -> float:
    return snr_of([r.p_rx_dbm for r in dataset.records if r.valid])


STD_ERR_MODES = {"sem": "sample std of delta / sqrt(N)", "std": "sample std of delta"}


@dataclass(frozen=True)
class MetricsReport:
    n: int
    mae_db: float
    rmse_db: float
    std_err_db: float
    pearson_rho: float | None
    snr_db: float | None
    max_prx_dbm: float
    peak_dir: tuple[float, float]

    std_err_mode: str = "sem"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["peak_dir"] = list(self.peak_dir)
        d["pearson_rho_defined"] = self.pearson_rho is not None
        d["std_err_definition"] = STD_ERR_MODES[self.std_err_mode]
        d["snr_definition"] = "peak minus lower-median of lowest ceil(N/10) powers"
        return d


def power_metrics(series: AlignedSeries, linear_rho: bool = False, std_err: str = "sem") -> MetricsReport:
    if std_err not in STD_ERR_MODES:
        raise DomainError(f"std_err must be one of {sorted(STD_ERR_MODES)}")
    d = series.delta
    n = len(d)
    mae = float(np.mean(np.abs(d)))
    rmse = float(math.sqrt(float(np.mean(d * d))))
    sd = float(np.std(d, ddof=1))
    err = sd / math.sqrt(n) if std_err == "sem" else sd
    rho = pearson(series.measured, series.reference, linear=linear_rho)
    snr = snr_of(series.measured) if n >= 10 else None
    peak = peak_direction_of(series.phi_deg, series.theta_deg, series.measured)
    return MetricsReport(n, mae, rmse, err, rho, snr, float(np.max(series.measured)), peak, std_err)


@dataclass(frozen=True)
class DeviationStats:
    min: float
    median: float
    std: float
    max: float


def deviation_distribution(series_or_delta) -> DeviationStats:
    """Order statistics of |delta|; std is the sample std (0 for a single value)."""
    if isinstance(series_or_delta, AlignedSeries):
        d = np.abs(series_or_delta.delta)
    else:
        d = np.abs(np.asarray(series_or_delta, dtype=float))
    if len(d) == 0:
        raise DomainError("empty deviation vector")
    std = float(np.std(d, ddof=1)) if len(d) > 1 else 0.0
    return DeviationStats(float(np.min(d)), lower_median(d), std, float(np.max(d)))


def repeatability(scans) -> float:
    """Mean over scan pairs and grid points of |P_i - P_j| (dB)."""
    scans = list(scans)
    if len(scans) < 2:
        raise DomainError("repeatability needs at least two scans")
    grids = []
    powers = []
    for s in scans:
        recs = s.records if hasattr(s, "records") else s
        grids.append([(r.index, round(r.phi_deg, 9), round(r.theta_deg, 9), round(r.radius_m, 12)) for r in recs])
        powers.append(np.array([r.p_rx_dbm for r in recs]))
    if any(g != grids[0] for g in grids[1:]):
        raise DomainError("repeat scans are on different grids")
    diffs = [np.mean(np.abs(powers[i] - powers[j])) for i, j in combinations(range(len(scans)), 2)]
    return float(np.mean(diffs))


# ------------------------------------------------------------------ exporters


def write_report(path, report: MetricsReport, extra: dict | None = None) -> None:
    d = report.to_dict()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")


def write_deltas(path, series: AlignedSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phi_deg", "theta_deg", "p_meas_dbm", "p_ref_dbm", "delta_db"])
        for row in zip(series.phi_deg, series.theta_deg, series.measured, series.reference, series.delta):
            w.writerow([repr(float(v)) for v in row])


def write_polar_cut(path, series: AlignedSeries, theta_deg: float) -> int:
    """Fixed-theta cut: ``phi_deg,p_meas_dbm,p_ref_dbm`` sorted by phi. Returns the row count."""
    sel = np.isclose(series.theta_deg, theta_deg, atol=1e-9)
    order = np.argsort(series.phi_deg[sel], kind="stable")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phi_deg", "p_meas_dbm", "p_ref_dbm"])
        for p, m, r in zip(series.phi_deg[sel][order], series.measured[sel][order], series.reference[sel][order]):
            w.writerow([repr(float(p)), repr(float(m)), repr(float(r))])
    return int(sel.sum())
