import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemiscan.acquisition import PowerRecord, ScanDataset
from hemiscan.analysis import (
    AlignedSeries,
    align,
    deviation_distribution,
    lower_median,
    peak_direction,
    peak_direction_of,
    pearson,
    power_metrics,
    repeatability,
    snr_of,
    write_deltas,
    write_polar_cut,
    write_report,
)
from hemiscan.se3 import DomainError

finite = st.floats(-120.0, 20.0, allow_nan=False)


def records(powers, phis=None, thetas=None):
    n = len(powers)
    phis = phis if phis is not None else [10.0 * i for i in range(n)]
    thetas = thetas if thetas is not None else [20.0] * n
    return [PowerRecord(i, phis[i], thetas[i], 0.05, float(p), True, "t") for i, p in enumerate(powers)]


def test_hand_oracle_metrics():
    meas = [-10.0, -12.0, -14.0, -16.0]
    ref = [-11.0, -11.0, -15.0, -13.0]
    # delta = [1, -1, 1, -3]
    rep = power_metrics(AlignedSeries.from_values(meas, ref))
    assert rep.mae_db == pytest.approx(1.5)
    assert rep.rmse_db == pytest.approx(math.sqrt(3.0))
    mean = -0.5
    sd = math.sqrt(sum((d - mean) ** 2 for d in [1, -1, 1, -3]) / 3)
    assert rep.std_err_db == pytest.approx(sd / 2.0)
    plain = power_metrics(AlignedSeries.from_values(meas, ref), std_err="std")
    assert plain.std_err_db == pytest.approx(sd)
    assert plain.to_dict()["std_err_definition"] == "sample std of delta"
    with pytest.raises(DomainError):
        power_metrics(AlignedSeries.from_values(meas, ref), std_err="bogus")
    assert rep.max_prx_dbm == -10.0
    assert rep.snr_db is None
    x = np.array(meas) - np.mean(meas)
    y = np.array(ref) - np.mean(ref)
    assert rep.pearson_rho == pytest.approx(float(x @ y / np.sqrt((x @ x) * (y @ y))))


def test_lower_median():
    assert lower_median([4, 1, 3, 2]) == 2.0
    assert lower_median([5, 1, 3]) == 3.0
    with pytest.raises(DomainError):
        lower_median([])


def test_snr_lowest_decile():
    p = list(range(-100, -79))  # 21 values, ceil(2.1) = 3 quietest
    assert snr_of(p) == pytest.approx(-80 - (-99))
    with pytest.raises(DomainError):
        snr_of([1.0] * 9)


def test_pearson_zero_variance_is_none():
    assert pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]) is None
    rep = power_metrics(AlignedSeries.from_values([-5.0] * 12, list(np.linspace(-9, -3, 12))))
    assert rep.pearson_rho is None
    assert json.loads(json.dumps(rep.to_dict()))["pearson_rho_defined"] is False


def test_pearson_linear_option():
    a = [-10.0, -20.0, -30.0]
    b = [-11.0, -19.0, -33.0]
    lin = pearson(a, b, linear=True)
    assert lin == pytest.approx(float(np.corrcoef(10 ** (np.array(a) / 10), 10 ** (np.array(b) / 10))[0, 1]))


def test_peak_tie_break():
    phi = [90.0, 10.0, 0.0, 270.0]
    theta = [30.0, 20.0, 20.0, 10.0]
    p = [-1.0, -1.0, -1.0, -2.0]
    assert peak_direction_of(phi, theta, p) == (0.0, 20.0)
    ds = ScanDataset()
    for r in records(p, phi, theta):
        ds.add(r)
    assert peak_direction(ds) == (0.0, 20.0)


def test_align_rejects_grid_mismatch():
    a = records([-1.0, -2.0, -3.0])
    b = records([-1.0, -2.0, -3.0], phis=[0.0, 10.0, 25.0])
    with pytest.raises(DomainError):
        align(a, b)
    s = align(a, records([-2.0, -2.0, -2.0]))
    assert list(s.delta) == [1.0, 0.0, -1.0]


def test_aligned_series_validation():
    with pytest.raises(DomainError):
        AlignedSeries.from_values([1.0], [1.0])
    with pytest.raises(DomainError):
        AlignedSeries(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3))


def test_deviation_distribution():
    st_ = deviation_distribution([1.0, -3.0, 2.0, -0.5])
    assert (st_.min, st_.median, st_.max) == (0.5, 1.0, 3.0)
    assert st_.std == pytest.approx(np.std([1.0, 3.0, 2.0, 0.5], ddof=1))
    assert deviation_distribution([2.0]).std == 0.0


def test_repeatability():
    a = records([-10.0, -11.0, -12.0])
    b = records([-10.5, -11.0, -11.0])
    c = records([-10.0, -12.0, -12.0])
    # pairs: ab 1.5/3, ac 1/3, bc 2.5/3
    assert repeatability([a, b, c]) == pytest.approx(5.0 / 9.0)
    assert repeatability([a, a]) == 0.0
    with pytest.raises(DomainError):
        repeatability([a])
    with pytest.raises(DomainError):
        repeatability([a, records([-1.0, -1.0])])


def test_writers(tmp_path):
    s = AlignedSeries([0.0, 90.0, 0.0], [10.0, 10.0, 20.0], [-1.0, -2.0, -3.0], [-1.5, -2.0, -2.0])
    write_report(tmp_path / "m.json", power_metrics(s), {"label": "x"})
    d = json.loads((tmp_path / "m.json").read_text())
    assert d["label"] == "x" and d["peak_dir"] == [0.0, 10.0]
    write_deltas(tmp_path / "d.csv", s)
    rows = (tmp_path / "d.csv").read_text().splitlines()
    assert rows[0] == "phi_deg,theta_deg,p_meas_dbm,p_ref_dbm,delta_db"
    assert float(rows[3].split(",")[-1]) == -1.0
    assert write_polar_cut(tmp_path / "c.csv", s, 10.0) == 2


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=60))
def test_mae_le_rmse(pairs):
    m, r = zip(*pairs)
    rep = power_metrics(AlignedSeries.from_values(m, r))
    assert rep.mae_db <= rep.rmse_db * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(finite, finite), min_size=3, max_size=60),
    st.floats(0.1, 10.0),
    st.floats(-50.0, 50.0),
)
def test_pearson_affine_invariance(pairs, scale, shift):
    x, y = (np.array(v) for v in zip(*pairs))
    base = pearson(x, y)
    moved = pearson(scale * x + shift, y)
    if base is None or moved is None:
        return
    assert moved == pytest.approx(base, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=40))
def test_peak_invariant_under_monotone_map(p):
    # integer powers keep the cubic map exact, so ties are preserved
    n = len(p)
    phi = [float(10 * i) for i in range(n)]
    theta = [float(i % 5) for i in range(n)]
    a = peak_direction_of(phi, theta, p)
    b = peak_direction_of(phi, theta, [float(v) ** 3 + 5.0 * v for v in p])
    assert a == b
