"""Rigid-body transforms and the calibrated probe pose chain.

Conventions:
    - Rotations are stored as full 3x3 matrices, translations in meters.
    - A Pose maps points from its child frame into its parent frame:
      p_parent = R @ p_child + t.
    - Angles are radians everywhere inside the library. Degree conversion
      happens at the config/CLI boundary.

The probe pose for a sampling direction is

    T_final = T_base @ T_sphere(phi, theta, r) @ T_offset

where T_base anchors the DUT-centered sampling frame in robot coordinates,
T_sphere places the probe on the hemisphere and T_offset is the bracket
calibration (Z-Y-X Euler rotation plus translation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROT_ATOL = 1e-9
TRANS_ATOL = 1e-12


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w == -math.pi:
        w = math.pi
    return w


def orthonormalize(m: np.ndarray) -> np.ndarray:
    """Closest proper rotation to ``m`` (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1.0
        r = u @ vt
    return r


def is_rotation(m: np.ndarray, atol: float = ROT_ATOL) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    if np.max(np.abs(m.T @ m - np.eye(3))) > atol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= atol


@dataclass(frozen=True)
class EulerZYX:
    """Intrinsic Z-Y-X angles: yaw about z, then pitch about y, then roll about x."""

    yaw: float
    pitch: float = 0.0
    roll: float = 0.0

    def normalized(self) -> "EulerZYX":
        return EulerZYX(wrap_angle(self.yaw), wrap_angle(self.pitch), wrap_angle(self.roll))

    @classmethod
    def from_degrees(cls, yaw: float, pitch: float = 0.0, roll: float = 0.0) -> "EulerZYX":
        return cls(math.radians(yaw), math.radians(pitch), math.radians(roll))


@dataclass(frozen=True)
class SphericalCoord:
    """Sampling coordinate on the upper hemisphere around the DUT.

    ``phi`` is azimuth about the DUT z-axis, ``theta`` the polar angle from
    the DUT boresight (+z) and ``r`` the probe distance in meters.
    """

    phi: float
    theta: float
    r: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.phi) and math.isfinite(self.theta) and math.isfinite(self.r)):
            raise DomainError(f"non-finite spherical coordinate {self!r}")
        if self.r <= 0.0:
            raise DomainError(f"radius must be positive, got {self.r}")
        # small negative slop from degree round trips is tolerated
        if not (-1e-12 <= self.theta <= math.pi / 2 + 1e-12):
            raise DomainError(f"theta {self.theta} outside the upper hemisphere")
        object.__setattr__(self, "phi", self.phi % (2.0 * math.pi))

    @classmethod
    def from_degrees(cls, phi_deg: float, theta_deg: float, r: float) -> "SphericalCoord":
        return cls(math.radians(phi_deg), math.radians(theta_deg), r)

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.phi)

    @property
    def theta_deg(self) -> float:
        return math.degrees(self.theta)

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


@dataclass(frozen=True, eq=False)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, xyz) -> "Pose":
        return cls(np.eye(3), xyz)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def allclose(self, other: "Pose", rot_atol: float = ROT_ATOL, trans_atol: float = TRANS_ATOL) -> bool:
        return bool(
            np.max(np.abs(self.rotation - other.rotation)) <= rot_atol
            and np.max(np.abs(self.translation - other.translation)) <= trans_atol
        )

    def renormalized(self) -> "Pose":
        return Pose(orthonormalize(self.rotation), self.translation)

    def __repr__(self) -> str:
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"Pose(t=[{t}], R={np.round(self.rotation, 6).tolist()})"


def euler_to_rotation(e: EulerZYX) -> np.ndarray:
    """Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    if not all(math.isfinite(a) for a in (e.yaw, e.pitch, e.roll)):
        raise DomainError(f"non-finite Euler angles {e!r}")
    return rot_z(e.yaw) @ rot_y(e.pitch) @ rot_x(e.roll)


def rotation_to_euler(m: np.ndarray) -> EulerZYX:
    """Inverse of :func:`euler_to_rotation` (pitch restricted to [-pi/2, pi/2])."""
    pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
    if abs(math.cos(pitch)) > 1e-9:
        yaw = math.atan2(m[1, 0], m[0, 0])
        roll = math.atan2(m[2, 1], m[2, 2])
    else:
        # gimbal lock, put everything in yaw
        yaw = math.atan2(-m[0, 1], m[1, 1])
        roll = 0.0
    return EulerZYX(yaw, pitch, roll).normalized()


def pose_from_euler(e: EulerZYX, translation) -> Pose:
    return Pose(euler_to_rotation(e), translation)


def sphere_transform(s: SphericalCoord) -> Pose:
    """Probe placement on the hemisphere: R = Rz(phi) Ry(-theta), t = r * unit(phi, theta)."""
    if s.r <= 0.0:
        raise DomainError("radius must be positive")
    return Pose(rot_z(s.phi) @ rot_y(-s.theta), s.r * s.unit_vector())


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation))


def final_pose(t_base: Pose, s: SphericalCoord, t_offset: Pose) -> Pose:
    return compose(compose(t_base, sphere_transform(s)), t_offset)


def rotation_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle between two rotations, radians in [0, pi]."""
    c = (np.trace(a.T @ b) - 1.0) / 2.0
    return math.acos(max(-1.0, min(1.0, c)))


def pointing_error(probe: Pose, dut_position, boresight_axis=(0.0, 0.0, -1.0)) -> float:
    """Angle between the probe boresight (given in the probe frame) and the line of sight to the DUT."""
    dut = np.asarray(dut_position, dtype=float)
    los = dut - probe.translation
    dist = float(np.linalg.norm(los))
    if dist == 0.0:
        raise DomainError("probe origin coincides with the DUT position")
    axis = np.asarray(boresight_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    world_axis = probe.rotation @ axis
    c = float(np.dot(world_axis, los / dist))
    return math.acos(max(-1.0, min(1.0, c)))


def radial_power_change_db(r: float, dr: float) -> float:
    """Path-loss change in dB when the probe distance moves from r to r + dr (1/r field law).

    Received power changes by the negative of this value.
    """
    return 20.0 * math.log10((r + dr) / r)
