"""Serial 7-revolute-joint arm: forward kinematics, Jacobian and damped least-squares IK.

All kinematic routines accept a single configuration of shape (7,) or a batch
of shape (B, 7); batched evaluation is what keeps IK seeding and collision
sweeps cheap in numpy.

The default table is the manufacturer's modified-DH model of the Franka Emika
Panda. Its end-effector frame sits on the flange, rotated half a turn about
the flange x-axis so that +z points back into the wrist: with the hand
pointing at the floor, the end-effector z-axis points up, which matches the
sampling-frame convention of the probe pose chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .se3 import Pose, rot_x

N_JOINTS = 7


@dataclass(frozen=True, eq=False)
class DHTable:
    a: tuple[float, ...]
    d: tuple[float, ...]
    alpha: tuple[float, ...]
    theta_offset: tuple[float, ...] = (0.0,) * N_JOINTS
    modified: bool = True
    tool: Pose = field(default_factory=Pose.identity)

    def __post_init__(self) -> None:
        for name in ("a", "d", "alpha", "theta_offset"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != N_JOINTS:
                raise ValueError(f"DH column {name!r} needs {N_JOINTS} entries, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"DH column {name!r} has non-finite entries")
            object.__setattr__(self, name, vals)
        # per-joint constant factors, precomputed once
        const = np.empty((N_JOINTS, 4, 4))
        for i in range(N_JOINTS):
            c = np.eye(4)
            c[:3, :3] = rot_x(self.alpha[i])
            if self.modified:
                c[0, 3] = self.a[i]
            else:
                c[:3, 3] = [self.a[i], 0.0, 0.0]
            const[i] = c
        object.__setattr__(self, "_const", const)
        object.__setattr__(self, "_tool", self.tool.as_matrix())


@dataclass(frozen=True, eq=False)
class JointLimits:
    lower: np.ndarray
    upper: np.ndarray
    velocity_scale: float = 0.05

    def __post_init__(self) -> None:
        lo = np.array(self.lower, dtype=float).reshape(N_JOINTS)
        hi = np.array(self.upper, dtype=float).reshape(N_JOINTS)
        if not np.all(lo < hi):
            raise ValueError("joint limits need lower < upper for every joint")
        if not 0.0 < self.velocity_scale <= 1.0:
            raise ValueError("velocity_scale must be in (0, 1]")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, q, tol: float = 0.0) -> np.ndarray | bool:
        q = np.asarray(q, dtype=float)
        ok = np.all((q >= self.lower - tol) & (q <= self.upper + tol), axis=-1)
        return bool(ok) if ok.ndim == 0 else ok

    def clamp(self, q) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)


PANDA_DH = DHTable(
    a=(0.0, 0.0, 0.0, 0.0825, -0.0825, 0.0, 0.088),
    d=(0.333, 0.0, 0.316, 0.0, 0.384, 0.0, 0.0),
    alpha=(0.0, -math.pi / 2, math.pi / 2, math.pi / 2, -math.pi / 2, math.pi / 2, math.pi / 2),
    modified=True,
    tool=Pose(rot_x(math.pi), (0.0, 0.0, 0.107)),
)

PANDA_LIMITS = JointLimits(
    lower=(-2.8973, -1.7628, -2.8973, -3.0718, -2.8973, -0.0175, -2.8973),
    upper=(2.8973, 1.7628, 2.8973, -0.0698, 2.8973, 3.7525, 2.8973),
    velocity_scale=0.05,
)

PANDA_HOME = np.array([0.0, -0.3, 0.0, -2.2, 0.0, 1.9, 0.785398])


def _joint_transforms(dh: DHTable, q: np.ndarray) -> np.ndarray:
    th = q + np.asarray(dh.theta_offset)
    c, s = np.cos(th), np.sin(th)
    m = np.zeros(q.shape + (4, 4))
    m[..., 0, 0] = c
    m[..., 0, 1] = -s
    m[..., 1, 0] = s
    m[..., 1, 1] = c
    m[..., 2, 2] = 1.0
    m[..., 3, 3] = 1.0
    m[..., 2, 3] = np.asarray(dh.d)
    const = dh._const
    if dh.modified:
        return const @ m
    return m @ const


def joint_frames(dh: DHTable, q) -> np.ndarray:
    """Homogeneous frames of joints 1..7 plus the end-effector, shape (..., 8, 4, 4).

    With modified DH, frame i carries joint i's axis on its z-axis. With
    classic DH the joint-i axis is the z-axis of frame i-1 (frame 0 = base).
    """
    q = np.asarray(q, dtype=float)
    a = _joint_transforms(dh, q)
    out = np.empty(q.shape[:-1] + (N_JOINTS + 1, 4, 4))
    cur = a[..., 0, :, :]
    out[..., 0, :, :] = cur
    for i in range(1, N_JOINTS):
        cur = cur @ a[..., i, :, :]
        out[..., i, :, :] = cur
    out[..., N_JOINTS, :, :] = cur @ dh._tool
    return out


def _axes_and_origins(dh: DHTable, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if dh.modified:
        z = frames[..., :N_JOINTS, :3, 2]
        p = frames[..., :N_JOINTS, :3, 3]
    else:
        base = np.broadcast_to(np.eye(4), frames.shape[:-3] + (1, 4, 4))
        prev = np.concatenate([base, frames[..., : N_JOINTS - 1, :, :]], axis=-3)
        z = prev[..., :3, 2]
        p = prev[..., :3, 3]
    return z, p


def fk_matrix(dh: DHTable, q) -> np.ndarray:
    return joint_frames(dh, q)[..., N_JOINTS, :, :]


def forward_kinematics(dh: DHTable, q) -> Pose:
    return Pose.from_matrix(fk_matrix(dh, np.asarray(q, dtype=float).reshape(N_JOINTS)))


def _jacobian_from_frames(dh: DHTable, frames: np.ndarray) -> np.ndarray:
    z, p = _axes_and_origins(dh, frames)
    p_ee = frames[..., N_JOINTS, :3, 3]
    jv = np.cross(z, p_ee[..., None, :] - p)
    j = np.concatenate([jv, z], axis=-1)  # (..., 7, 6)
    return np.swapaxes(j, -1, -2)


def jacobian(dh: DHTable, q) -> np.ndarray:
    """Geometric Jacobian in the base frame, rows (vx, vy, vz, wx, wy, wz)."""
    return _jacobian_from_frames(dh, joint_frames(dh, q))


def sigma_min(j) -> float | np.ndarray:
    s = np.linalg.svd(np.asarray(j, dtype=float), compute_uv=False)
    out = s[..., -1]
    return float(out) if np.ndim(out) == 0 else out


def rotation_log(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector of rotation matrices, shape (..., 3)."""
    tr = np.trace(r, axis1=-2, axis2=-1)
    cos_a = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_a)
    skew = np.stack(
        [r[..., 2, 1] - r[..., 1, 2], r[..., 0, 2] - r[..., 2, 0], r[..., 1, 0] - r[..., 0, 1]],
        axis=-1,
    )
    sin_a = np.sin(angle)
    small = sin_a < 1e-6
    scale = np.where(small, 0.5, angle / (2.0 * np.where(small, 1.0, sin_a)))
    out = skew * scale[..., None]
    near_pi = small & (cos_a < 0.0)
    if np.any(near_pi):
        rr = r[near_pi]
        diag = np.clip((np.diagonal(rr, axis1=-2, axis2=-1) + 1.0) / 2.0, 0.0, None)
        axis = np.sqrt(diag)
        k = np.argmax(axis, axis=-1)
        rows = np.arange(len(rr))
        # fix signs relative to the largest component
        ref = rr[rows, k, :] + rr[rows, :, k]
        sign = np.sign(ref)
        sign[sign == 0] = 1.0
        axis = axis * sign
        axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
        out[near_pi] = axis * angle[near_pi][:, None]
    return out


def pose_error(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Spatial error (dp, dw) that moves ``current`` toward ``target``; homogeneous inputs."""
    dp = target[..., :3, 3] - current[..., :3, 3]
    dr = target[..., :3, :3] @ np.swapaxes(current[..., :3, :3], -1, -2)
    return np.concatenate([dp, rotation_log(dr)], axis=-1)


@dataclass(frozen=True)
class IKParams:
    damping: float = 1e-2
    max_iterations: int = 200
    pos_tol: float = 1e-4
    rot_tol: float = 1e-3
    max_step: float = 0.4
    dedupe_tol: float = 1e-3
    # stalled seeds are re-drawn uniformly inside the limits while no seed has converged
    restarts: int = 32
    restart_seed: int = 0


def default_seeds(q_home, limits: JointLimits, extra=(), spread: float = 0.6) -> np.ndarray:
    """Caller seeds first, then home, then home +/- ``spread`` on each joint (16 total for one extra)."""
    home = np.asarray(q_home, dtype=float)
    seeds = [np.asarray(s, dtype=float) for s in extra]
    seeds.append(home)
    for i in range(N_JOINTS):
        for sgn in (1.0, -1.0):
            s = home.copy()
            s[i] += sgn * spread
            seeds.append(s)
    return limits.clamp(np.array(seeds))


def _ok_mask(err, q, limits: JointLimits, params: IKParams) -> np.ndarray:
    pos = np.linalg.norm(err[:, :3], axis=1)
    rot = np.linalg.norm(err[:, 3:], axis=1)
    return (pos <= params.pos_tol) & (rot <= params.rot_tol) & limits.contains(q)


def _any_ok(err, q, limits, params) -> bool:
    return bool(_ok_mask(err, q, limits, params).any())


def ik_solve(dh: DHTable, target: Pose, seeds, limits: JointLimits, params: IKParams = IKParams()) -> list[np.ndarray]:
    """Damped least-squares IK from every seed; returns the distinct converged solutions.

    Each seed is iterated independently. Steps that grow the residual are
    rolled back and the damping raised; accepted steps relax it. Iterates are
    clamped to the joint limits after every step, so any returned solution
    is within limits by construction. If every seed stops without a
    solution, the worst seeds are re-drawn uniformly inside the limits
    (``params.restarts`` draws in total, reproducible via ``restart_seed``).
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[0] == 0:
        raise ValueError("ik_solve needs at least one seed")
    tgt = target.as_matrix()
    q = limits.clamp(seeds)
    n = len(q)
    lam = np.full(n, params.damping)
    frames = joint_frames(dh, q)
    err = pose_error(tgt, frames[:, -1])
    cost = np.einsum("ij,ij->i", err, err)
    active = np.ones(n, dtype=bool)
    eye6 = np.eye(6)

    def converged(e: np.ndarray) -> np.ndarray:
        pos = np.linalg.norm(e[:, :3], axis=1)
        rot = np.linalg.norm(e[:, 3:], axis=1)
        return (pos <= params.pos_tol * 0.01) & (rot <= params.rot_tol * 0.01)

    active &= ~converged(err)
    rng = np.random.default_rng(params.restart_seed)
    restarts_left = params.restarts
    iters = np.zeros(n, dtype=int)
    while True:
        if not active.any():
            if restarts_left <= 0 or _any_ok(err, q, limits, params):
                break
            # every seed has stopped without a solution: restart a batch
            k = min(n, restarts_left)
            restarts_left -= k
            sel = np.argsort(-cost)[:k]
            q[sel] = rng.uniform(limits.lower, limits.upper, size=(k, q.shape[1]))
            frames[sel] = joint_frames(dh, q[sel])
            err[sel] = pose_error(tgt, frames[sel, -1])
            cost[sel] = np.einsum("ij,ij->i", err[sel], err[sel])
            lam[sel] = params.damping
            iters[sel] = 0
            active[sel] = True
        if not active.any():
            break
        idx = np.flatnonzero(active)
        iters[idx] += 1
        active[idx[iters[idx] >= params.max_iterations]] = False
        j = _jacobian_from_frames(dh, frames[idx])
        # joints pinned at a limit and pushed outward are removed from the solve
        grad = np.einsum("bji,bj->bi", j, err[idx])
        qi = q[idx]
        pinned = ((qi <= limits.lower + 1e-9) & (grad < 0)) | ((qi >= limits.upper - 1e-9) & (grad > 0))
        j = j * (~pinned)[:, None, :]
        jjt = j @ np.swapaxes(j, -1, -2) + (lam[idx] ** 2)[:, None, None] * eye6
        dq = np.einsum("bji,bj->bi", j, np.linalg.solve(jjt, err[idx][..., None])[..., 0])
        big = np.max(np.abs(dq), axis=1)
        dq *= np.minimum(1.0, params.max_step / np.maximum(big, 1e-300))[:, None]
        q_new = limits.clamp(q[idx] + dq)
        f_new = joint_frames(dh, q_new)
        e_new = pose_error(tgt, f_new[:, -1])
        c_new = np.einsum("ij,ij->i", e_new, e_new)
        better = c_new < cost[idx]
        acc = idx[better]
        q[acc] = q_new[better]
        frames[acc] = f_new[better]
        err[acc] = e_new[better]
        cost[acc] = c_new[better]
        lam[acc] = np.maximum(lam[acc] * 0.5, 1e-5)
        rej = idx[~better]
        lam[rej] *= 4.0
        # stalled seeds (damping exploded) stop iterating
        active[rej[lam[rej] > 1e3]] = False
        active[acc[converged(e_new[better])]] = False

    ok = _ok_mask(err, q, limits, params)
    sols: list[np.ndarray] = []
    for qi in q[ok]:
        if all(np.max(np.abs(qi - s)) > params.dedupe_tol for s in sols):
            sols.append(qi.copy())
    return sols


def manipulability(dh: DHTable, q) -> float:
    j = jacobian(dh, q)
    return float(math.sqrt(max(np.linalg.det(j @ j.T), 0.0)))
