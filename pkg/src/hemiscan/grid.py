"""Hemispherical sampling grids.

A grid is the Cartesian product of an azimuth set (half-open span, so 0 and
360 degrees are never both emitted) and a polar-angle set. The total point
count is N = N_phi * N_theta; the pole is sampled once per azimuth column so
every column has the same shape.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

from .se3 import DomainError, SphericalCoord

RADIUS_RANGE_M = (0.03, 0.20)
_EPS = 1e-9


class Ordering(str, Enum):
    AZIMUTH_MAJOR = "azimuth-major"
    SERPENTINE = "serpentine"


@dataclass(frozen=True)
class GridSpec:
    radius: float
    phi_step: float
    theta_step: float = 10.0
    phi_start: float = 0.0
    phi_end: float = 360.0
    theta_start: float = 0.0
    theta_end: float = 60.0
    theta_end_inclusive: bool = True
    ordering: Ordering = Ordering.AZIMUTH_MAJOR
    # explicit polar values override start/end/step when given
    theta_values: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ordering", Ordering(self.ordering))
        if self.theta_values is not None:
            object.__setattr__(self, "theta_values", tuple(float(t) for t in self.theta_values))
        if not self.radius > 0:
            raise DomainError(f"radius must be positive, got {self.radius}")
        if self.phi_step <= 0 or (self.theta_values is None and self.theta_step <= 0):
            raise DomainError("angular steps must be positive")
        if self.phi_end < self.phi_start or self.theta_end < self.theta_start:
            raise DomainError("angular span end precedes start")
        lo, hi = RADIUS_RANGE_M
        if not lo <= self.radius <= hi:
            warnings.warn(
                f"radius {self.radius} m is outside the typical {lo}-{hi} m range",
                RuntimeWarning,
                stacklevel=3,
            )

    def phi_values(self) -> list[float]:
        span = self.phi_end - self.phi_start
        if span == 0:
            return [self.phi_start]
        n = math.ceil(span / self.phi_step - _EPS)
        return [self.phi_start + k * self.phi_step for k in range(n)]

    def polar_values(self) -> list[float]:
        if self.theta_values is not None:
            vals = sorted(self.theta_values)
            if len(set(vals)) != len(vals):
                raise DomainError("duplicate polar values")
            return vals
        span = self.theta_end - self.theta_start
        if span == 0:
            n = 1 if self.theta_end_inclusive else 0
        elif self.theta_end_inclusive:
            n = math.floor(span / self.theta_step + _EPS) + 1
        else:
            n = math.ceil(span / self.theta_step - _EPS)
        return [self.theta_start + k * self.theta_step for k in range(n)]


@dataclass(frozen=True)
class SphericalSample:
    """A grid node. The degree labels are the nominal grid values, kept exact
    so that records and peak directions compare equal to the commanded grid."""

    coord: SphericalCoord
    index: int
    phi_label: float | None = None
    theta_label: float | None = None

    @property
    def phi_deg(self) -> float:
        return self.coord.phi_deg if self.phi_label is None else self.phi_label

    @property
    def theta_deg(self) -> float:
        return self.coord.theta_deg if self.theta_label is None else self.theta_label


def grid_counts(spec: GridSpec) -> tuple[int, int, int]:
    n_phi = len(spec.phi_values())
    n_theta = len(spec.polar_values())
    if n_phi == 0 or n_theta == 0:
        raise DomainError(f"grid has no points (N_phi={n_phi}, N_theta={n_theta})")
    return n_phi, n_theta, n_phi * n_theta


def generate_grid(spec: GridSpec) -> list[SphericalSample]:
    grid_counts(spec)
    phis = spec.phi_values()
    thetas = spec.polar_values()
    out: list[SphericalSample] = []
    for col, phi in enumerate(phis):
        column = thetas
        if spec.ordering is Ordering.SERPENTINE and col % 2 == 1:
            column = thetas[::-1]
        for theta in column:
            coord = SphericalCoord.from_degrees(phi, theta, spec.radius)
            out.append(SphericalSample(coord, len(out), float(phi) % 360.0, float(theta)))
    return out


# Scan configurations of the four representative radii. The point totals are
# authoritative; the polar value sets are derived from them:
#   4 cm / 15 deg: 24 azimuths x {0,15,30,45,60}        = 120
#   5 cm / 10 deg: 36 azimuths x {0,10,...,60} (7 vals) = 252
#   8 cm / 20 deg: 18 azimuths x {0,20,40,60}           = 72
#  15 cm / 15 deg: 24 azimuths x {0,15,30,45,60}        = 120
SCAN_PRESETS = {
    "4cm_15deg": GridSpec(radius=0.04, phi_step=15.0, theta_step=15.0, theta_end=60.0),
    "5cm_10deg": GridSpec(radius=0.05, phi_step=10.0, theta_step=10.0, theta_end=60.0),
    "8cm_20deg": GridSpec(radius=0.08, phi_step=20.0, theta_step=20.0, theta_end=60.0),
    "15cm_15deg": GridSpec(radius=0.15, phi_step=15.0, theta_step=15.0, theta_end=60.0),
}

PRESET_POINTS = {"4cm_15deg": 120, "5cm_10deg": 252, "8cm_20deg": 72, "15cm_15deg": 120}
