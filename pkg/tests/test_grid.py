import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hemiscan.grid import (
    PRESET_POINTS,
    SCAN_PRESETS,
    GridSpec,
    Ordering,
    generate_grid,
    grid_counts,
)
from hemiscan.se3 import DomainError


@pytest.mark.parametrize("name", sorted(SCAN_PRESETS))
def test_preset_totals(name):
    n_phi, n_theta, n = grid_counts(SCAN_PRESETS[name])
    assert n == PRESET_POINTS[name] == n_phi * n_theta
    assert len(generate_grid(SCAN_PRESETS[name])) == n


def test_preset_polar_sets():
    assert SCAN_PRESETS["8cm_20deg"].polar_values() == [0.0, 20.0, 40.0, 60.0]
    assert len(SCAN_PRESETS["5cm_10deg"].polar_values()) == 7
    assert SCAN_PRESETS["15cm_15deg"].polar_values() == [0.0, 15.0, 30.0, 45.0, 60.0]


def test_azimuth_is_half_open():
    phis = SCAN_PRESETS["4cm_15deg"].phi_values()
    assert phis[0] == 0.0 and phis[-1] == 345.0


def test_exclusive_theta_end():
    g = GridSpec(radius=0.05, phi_step=90.0, theta_step=30.0, theta_end=90.0, theta_end_inclusive=False)
    assert g.polar_values() == [0.0, 30.0, 60.0]


def test_explicit_theta_values():
    g = GridSpec(radius=0.05, phi_step=180.0, theta_values=(40.0, 0.0))
    assert g.polar_values() == [0.0, 40.0]
    with pytest.raises(DomainError):
        GridSpec(radius=0.05, phi_step=180.0, theta_values=(10.0, 10.0)).polar_values()


def test_single_point_grid():
    g = GridSpec(radius=0.05, phi_step=10.0, phi_start=30.0, phi_end=30.0, theta_start=20.0, theta_end=20.0)
    pts = generate_grid(g)
    assert [(p.phi_deg, p.theta_deg) for p in pts] == [(30.0, 20.0)]


def test_bad_specs():
    with pytest.raises(DomainError):
        GridSpec(radius=0.0, phi_step=10.0)
    with pytest.raises(DomainError):
        GridSpec(radius=0.05, phi_step=0.0)
    with pytest.raises(DomainError):
        GridSpec(radius=0.05, phi_step=10.0, theta_start=50.0, theta_end=40.0)


def test_radius_outside_typical_range_warns():
    with pytest.warns(RuntimeWarning):
        GridSpec(radius=0.5, phi_step=10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        GridSpec(radius=0.03, phi_step=10.0)
        GridSpec(radius=0.20, phi_step=10.0)


def test_serpentine_reverses_odd_columns():
    g = GridSpec(radius=0.05, phi_step=90.0, theta_step=30.0, theta_end=60.0, ordering=Ordering.SERPENTINE)
    pts = generate_grid(g)
    assert [p.theta_deg for p in pts[:6]] == [0.0, 30.0, 60.0, 60.0, 30.0, 0.0]
    assert [p.index for p in pts] == list(range(len(pts)))


def test_labels_are_exact_grid_values():
    pts = generate_grid(SCAN_PRESETS["5cm_10deg"])
    assert (90.0, 20.0) in {(p.phi_deg, p.theta_deg) for p in pts}


@given(st.sampled_from([5.0, 10.0, 12.0, 15.0, 20.0, 30.0, 45.0, 90.0]), st.sampled_from([5.0, 10.0, 15.0, 20.0, 30.0]))
def test_counts_are_product_and_unique(dphi, dtheta):
    g = GridSpec(radius=0.05, phi_step=dphi, theta_step=dtheta, theta_end=60.0)
    pts = generate_grid(g)
    n_phi, n_theta, n = grid_counts(g)
    assert n_phi == round(360 / dphi)
    assert n_theta == int(60 // dtheta) + 1
    assert len(pts) == n
    assert len({(p.phi_deg, p.theta_deg) for p in pts}) == n
    assert all(0.0 <= p.phi_deg < 360.0 and 0.0 <= p.theta_deg <= 60.0 for p in pts)
