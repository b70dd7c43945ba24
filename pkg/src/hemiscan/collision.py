"""Primitive-shape collision checking for the arm against the static measurement scene.

Link geometry is a chain of capsules (sphere-swept segments) whose endpoints
ride on kinematic frames. Obstacles are spheres, capsules or axis-aligned
boxes. Every distance is exact and signed: negative values are penetration
depths. All kernels are vectorised over leading batch axes so a whole edge of
interpolated configurations is checked in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Union

import numpy as np

from .kinematics import DHTable, joint_frames
from .se3 import DomainError, Pose


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True, eq=False)
class Capsule:
    a: np.ndarray
    b: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))
        if not self.radius > 0:
            raise ValueError("capsule radius must be positive")


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if not np.all(lo < hi):
            raise ValueError("box needs min corner < max corner on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_center(cls, center, size, name: str = "") -> "Box":
        c = np.asarray(center, dtype=float)
        h = np.asarray(size, dtype=float) / 2.0
        return cls(c - h, c + h, name)


Shape = Union[Sphere, Capsule, Box]


# ---------------------------------------------------------------- kernels


def segment_segment_distance(p1, q1, p2, q2) -> np.ndarray:
    """Closest distance between segments [p1,q1] and [p2,q2], broadcast over leading axes."""
    p1, q1, p2, q2 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (p1, q1, p2, q2)))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("...i,...i->...", d1, d1)
    e = np.einsum("...i,...i->...", d2, d2)
    f = np.einsum("...i,...i->...", d2, r)
    c = np.einsum("...i,...i->...", d1, r)
    b = np.einsum("...i,...i->...", d1, d2)
    eps = 1e-18
    a_deg = a <= eps
    e_deg = e <= eps
    denom = a * e - b * b
    safe_a = np.where(a_deg, 1.0, a)
    safe_e = np.where(e_deg, 1.0, e)
    s = np.where(denom > eps * np.maximum(a * e, eps), (b * f - c * e) / np.where(denom > 0, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = (b * s + f) / safe_e
    # t outside [0,1]: clamp and recompute s
    t_lo = t < 0.0
    t_hi = t > 1.0
    s = np.where(t_lo, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(t_hi, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    # degenerate segments
    s = np.where(a_deg, 0.0, s)
    t = np.where(a_deg, np.clip(f / safe_e, 0.0, 1.0), t)
    s = np.where(e_deg & ~a_deg, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(e_deg, 0.0, t)
    c1 = p1 + d1 * s[..., None]
    c2 = p2 + d2 * t[..., None]
    return np.linalg.norm(c1 - c2, axis=-1)


def point_box_sdf(x, lo, hi) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    c = (np.asarray(lo) + np.asarray(hi)) / 2.0
    h = (np.asarray(hi) - np.asarray(lo)) / 2.0
    q = np.abs(x - c) - h
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def segment_box_sdf(p, q, lo, hi) -> np.ndarray:
    """Minimum of the box signed-distance field along segment [p, q].

    The box SDF is convex, so its restriction to a segment is a convex
    function of the segment parameter. Outside the box it is the root of a
    piecewise quadratic whose pieces change where a coordinate crosses a
    face plane; inside it is a max of six linear functions. The minimiser is
    therefore among: endpoints, face-plane crossings, the stationary point of
    each quadratic piece and the pairwise crossings of the linear pieces.
    All candidates are evaluated and the smallest value returned.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    p, q, lo, hi = np.broadcast_arrays(p, q, lo, hi)
    d = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        nz = np.abs(d) > 1e-15
        t_lo = np.where(nz, (lo - p) / np.where(nz, d, 1.0), 0.0)
        t_hi = np.where(nz, (hi - p) / np.where(nz, d, 1.0), 0.0)
    shape = p.shape[:-1]
    bps = np.concatenate(
        [np.zeros(shape + (1,)), np.ones(shape + (1,)), np.clip(t_lo, 0, 1), np.clip(t_hi, 0, 1)],
        axis=-1,
    )
    bps = np.sort(bps, axis=-1)  # (..., 8)
    t0 = bps[..., :-1]
    t1 = bps[..., 1:]
    mid = (t0 + t1) / 2.0
    xm = p[..., None, :] + mid[..., None] * d[..., None, :]  # (..., 7, 3)
    below = xm < lo[..., None, :]
    above = xm > hi[..., None, :]
    bound = np.where(below, lo[..., None, :], hi[..., None, :])
    act = below | above
    cst = (p[..., None, :] - bound) * act
    dd = d[..., None, :] * act
    num = -np.sum(cst * dd, axis=-1)
    den = np.sum(dd * dd, axis=-1)
    tstat = np.where(den > 0, num / np.where(den > 0, den, 1.0), mid)
    tstat = np.clip(tstat, t0, t1)
    # inside: g_j(t) = alpha_j + beta_j t with j over (lo - x, x - hi) per axis
    alpha = np.concatenate([lo - p, p - hi], axis=-1)  # (..., 6)
    beta = np.concatenate([-d, d], axis=-1)
    ii, jj = np.array(list(combinations(range(6), 2))).T
    db = beta[..., jj] - beta[..., ii]
    with np.errstate(divide="ignore", invalid="ignore"):
        tk = np.where(np.abs(db) > 1e-15, (alpha[..., ii] - alpha[..., jj]) / np.where(np.abs(db) > 1e-15, db, 1.0), 0.0)
    tk = np.clip(tk, 0.0, 1.0)
    cand = np.concatenate([bps, tstat, tk], axis=-1)
    pts = p[..., None, :] + cand[..., None] * d[..., None, :]
    vals = point_box_sdf(pts, lo[..., None, :], hi[..., None, :])
    return np.min(vals, axis=-1)


def box_box_distance(a: Box, b: Box) -> float:
    gap = np.maximum(a.lo - b.hi, b.lo - a.hi)
    if np.all(gap < 0):
        # overlap: the smallest push that separates them
        return float(np.max(gap))
    return float(np.linalg.norm(np.maximum(gap, 0.0)))


def _as_capsule(s: Shape) -> Capsule | None:
    if isinstance(s, Sphere):
        return Capsule(s.center, s.center, s.radius)
    if isinstance(s, Capsule):
        return s
    return None


def pair_distance(a: Shape, b: Shape) -> float:
    """Signed separation between two primitive shapes (negative = penetration)."""
    ca, cb = _as_capsule(a), _as_capsule(b)
    if ca is not None and cb is not None:
        d = segment_segment_distance(ca.a, ca.b, cb.a, cb.b)
        return float(d) - ca.radius - cb.radius
    if ca is None and cb is None:
        return box_box_distance(a, b)
    cap, box = (ca, b) if ca is not None else (cb, a)
    return float(segment_box_sdf(cap.a, cap.b, box.lo, box.hi)) - cap.radius


# ---------------------------------------------------------------- scene


@dataclass(frozen=True)
class LinkCapsule:
    """Capsule attached to the arm: each endpoint lives in a kinematic frame.

    Frame indices: -1 is the robot base, 0..6 the joint frames, 7 the
    end-effector frame.
    """

    name: str
    frame_a: int
    point_a: tuple[float, float, float]
    frame_b: int
    point_b: tuple[float, float, float]
    radius: float


@dataclass(frozen=True, eq=False)
class Scene:
    obstacles: tuple[Shape, ...]
    links: tuple[LinkCapsule, ...]
    riser_height: float = 0.0
    dut_origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    min_link_gap: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "dut_origin", np.asarray(self.dut_origin, dtype=float).reshape(3))
        pairs = [(i, j) for i, j in combinations(range(len(self.links)), 2) if j - i >= self.min_link_gap]
        object.__setattr__(self, "self_pairs", tuple(pairs))
        caps = [o for o in self.obstacles if not isinstance(o, Box)]
        boxes = [o for o in self.obstacles if isinstance(o, Box)]
        object.__setattr__(self, "_box_lo", np.array([b.lo for b in boxes]).reshape(-1, 3))
        object.__setattr__(self, "_box_hi", np.array([b.hi for b in boxes]).reshape(-1, 3))
        cc = [_as_capsule(c) for c in caps]
        object.__setattr__(self, "_cap_a", np.array([c.a for c in cc]).reshape(-1, 3))
        object.__setattr__(self, "_cap_b", np.array([c.b for c in cc]).reshape(-1, 3))
        object.__setattr__(self, "_cap_r", np.array([c.radius for c in cc]))
        object.__setattr__(self, "_link_r", np.array([l.radius for l in self.links]))

    def with_obstacles(self, extra) -> "Scene":
        return Scene(
            self.obstacles + tuple(extra), self.links, self.riser_height, self.dut_origin, self.min_link_gap
        )

    def without_obstacles(self) -> "Scene":
        return Scene((), self.links, self.riser_height, self.dut_origin, self.min_link_gap)


def link_segments(dh: DHTable, q, scene: Scene) -> np.ndarray:
    """World endpoints of every link capsule, shape (..., L, 2, 3)."""
    frames = joint_frames(dh, q)
    batch = frames.shape[:-3]
    out = np.empty(batch + (len(scene.links), 2, 3))
    for k, link in enumerate(scene.links):
        for end, (fi, pt) in enumerate(((link.frame_a, link.point_a), (link.frame_b, link.point_b))):
            if fi < 0:
                out[..., k, end, :] = pt
            else:
                f = frames[..., fi, :, :]
                out[..., k, end, :] = f[..., :3, :3] @ np.asarray(pt) + f[..., :3, 3]
    return out


def pair_distances(dh: DHTable, q, scene: Scene) -> np.ndarray:
    """Signed distances of every checked pair: link-vs-obstacle pairs first, then self pairs."""
    seg = link_segments(dh, q, scene)
    a = seg[..., :, 0, :]
    b = seg[..., :, 1, :]
    lr = scene._link_r
    parts = []
    if len(scene._box_lo):
        d = segment_box_sdf(a[..., :, None, :], b[..., :, None, :], scene._box_lo, scene._box_hi)
        parts.append((d - lr[:, None]).reshape(d.shape[:-2] + (-1,)))
    if len(scene._cap_a):
        d = segment_segment_distance(a[..., :, None, :], b[..., :, None, :], scene._cap_a, scene._cap_b)
        d = d - lr[:, None] - scene._cap_r
        parts.append(d.reshape(d.shape[:-2] + (-1,)))
    if scene.self_pairs:
        i, j = np.array(scene.self_pairs).T
        d = segment_segment_distance(a[..., i, :], b[..., i, :], a[..., j, :], b[..., j, :])
        parts.append(d - lr[i] - lr[j])
    if not parts:
        return np.full(seg.shape[:-3] + (0,), np.inf)
    return np.concatenate(parts, axis=-1)


def clearance(dh: DHTable, q, scene: Scene) -> np.ndarray | float:
    """Minimum signed distance over all pairs (inf when nothing is checked)."""
    d = pair_distances(dh, q, scene)
    out = np.min(d, axis=-1, initial=np.inf)
    return float(out) if np.ndim(out) == 0 else out


def collides(dh: DHTable, q, scene: Scene) -> bool | np.ndarray:
    c = clearance(dh, q, scene)
    return c <= 0.0


def min_clearance(dh: DHTable, q, scene: Scene) -> float:
    c = clearance(dh, np.asarray(q, dtype=float), scene)
    if c <= 0.0:
        raise DomainError(f"configuration is in collision (clearance {c:.4g} m)")
    return float(c)


# ---------------------------------------------------------------- defaults

TABLE_SIZE = (1.2, 0.8, 0.04)
FIXTURE_SIZE = (0.1, 0.1, 0.05)
RISER_SIZE_XY = (0.12, 0.12)
DUT_STANDOFF = 0.005  # radiating aperture above the fixture top


def panda_links(probe_point=(0.0, 0.0, -0.05)) -> tuple[LinkCapsule, ...]:
    """Capsule model of the default arm plus the probe bracket.

    ``probe_point`` is the probe reference point in the end-effector frame.
    """
    return (
        LinkCapsule("base", -1, (0.0, 0.0, 0.08), -1, (0.0, 0.0, 0.30), 0.065),
        LinkCapsule("upper_arm", 1, (0.0, 0.0, 0.0), 2, (0.0, 0.0, 0.0), 0.06),
        LinkCapsule("elbow", 2, (0.0, 0.0, 0.0), 3, (0.0, 0.0, 0.0), 0.055),
        LinkCapsule("forearm", 3, (0.0, 0.0, 0.0), 4, (0.0, 0.0, 0.0), 0.05),
        LinkCapsule("wrist", 4, (0.0, 0.0, 0.0), 6, (0.0, 0.0, 0.0), 0.045),
        LinkCapsule("flange", 6, (0.0, 0.0, 0.0), 7, (0.0, 0.0, 0.0), 0.04),
        LinkCapsule("bracket", 7, (0.0, 0.0, 0.0), 7, tuple(float(v) for v in probe_point), 0.012),
    )


def default_scene(
    riser_height: float = 0.0,
    dut_xy=(0.5, 0.0),
    probe_point=(0.0, 0.0, -0.05),
    table_origin=(0.3, 0.0),
) -> Scene:
    """Table slab with the robot base on its top surface, DUT fixture, optional riser."""
    tx, ty = table_origin
    tw, td, th = TABLE_SIZE
    table = Box((tx - tw / 2, ty - td / 2, -th), (tx + tw / 2, ty + td / 2, 0.0), "table")
    x, y = dut_xy
    fw, fd, fh = FIXTURE_SIZE
    fixture = Box((x - fw / 2, y - fd / 2, riser_height), (x + fw / 2, y + fd / 2, riser_height + fh), "fixture")
    obstacles: list[Shape] = [table, fixture]
    if riser_height > 0:
        rw, rd = RISER_SIZE_XY
        obstacles.append(Box((x - rw / 2, y - rd / 2, 0.0), (x + rw / 2, y + rd / 2, riser_height), "riser"))
    dut = np.array([x, y, riser_height + fh + DUT_STANDOFF])
    return Scene(tuple(obstacles), panda_links(probe_point), riser_height, dut)


def probe_point_from_offset(t_offset: Pose) -> np.ndarray:
    """Probe reference point in the end-effector frame for a bracket calibration."""
    rt = t_offset.rotation.T
    return -(rt @ t_offset.translation)
