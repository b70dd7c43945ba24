"""Collision-aware motion planning from a commanded probe pose to a joint trajectory.

``plan_to_pose`` runs the full decision pipeline: IK candidates, joint-limit
filter, singularity and collision filters, goal selection, path planning and
a single recovery attempt through the home posture.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .collision import Scene, collides, clearance, default_scene, probe_point_from_offset
from .kinematics import (
    PANDA_DH,
    PANDA_HOME,
    PANDA_LIMITS,
    DHTable,
    IKParams,
    JointLimits,
    default_seeds,
    forward_kinematics,
    ik_solve,
    jacobian,
    sigma_min,
)
from .se3 import DomainError, Pose, SphericalCoord, compose, final_pose, invert, rot_z

NOMINAL_JOINT_SPEED = 2.0  # rad/s at 100 % velocity scaling
PLANNER_NAMES = ("rrt_connect", "joint_interpolation")


class Status(str, Enum):
    SUCCESS = "success"
    FAILURE_NO_IK = "failure_no_ik"
    FAILURE_ALL_FILTERED = "failure_all_filtered"
    FAILURE_PLANNING = "failure_planning"


class PlanningFailure(Exception):
    """Raised by a path planner when the node budget is exhausted."""


@dataclass(frozen=True)
class PlannerParams:
    planner: str = "rrt_connect"
    step: float = 0.1
    max_nodes: int = 5000
    shortcut_iterations: int = 100
    resolution: float = 0.02
    sigma_min_eps: float = 1e-3
    goal_selection: str = "min_distance"
    velocity_scale: float = 0.05
    acceleration_scale: float = 0.05
    seed: int = 0
    ik: IKParams = field(default_factory=IKParams)

    def __post_init__(self) -> None:
        if self.planner not in PLANNER_NAMES:
            raise ValueError(f"unknown planner {self.planner!r}; choose from {list(PLANNER_NAMES)}")
        if self.goal_selection not in ("min_distance", "max_clearance"):
            raise ValueError("goal_selection must be 'min_distance' or 'max_clearance'")
        if self.step <= 0 or self.resolution <= 0 or self.max_nodes < 2:
            raise ValueError("planner step, resolution and budget must be positive")
        if not 0 < self.velocity_scale <= 1 or not 0 < self.acceleration_scale <= 1:
            raise ValueError("velocity/acceleration scaling must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class Trajectory:
    waypoints: np.ndarray

    def __post_init__(self) -> None:
        w = np.atleast_2d(np.array(self.waypoints, dtype=float))
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    @property
    def joint_path_length(self) -> float:
        return joint_path_length(self.waypoints)

    @property
    def start(self) -> np.ndarray:
        return self.waypoints[0]

    @property
    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def execution_time(self, velocity_scale: float) -> float:
        return self.joint_path_length / (velocity_scale * NOMINAL_JOINT_SPEED)


@dataclass(frozen=True, eq=False)
class PlanOutcome:
    status: Status
    trajectory: Trajectory | None = None
    used_recovery: bool = False
    planning_time: float = 0.0
    # where the arm is after this outcome (start, home after a failed replan, or goal)
    end_config: np.ndarray | None = None
    n_candidates: int = 0

    def __post_init__(self) -> None:
        if (self.trajectory is not None) != (self.status is Status.SUCCESS):
            raise ValueError("trajectory must be present exactly when planning succeeded")

    @property
    def ok(self) -> bool:
        return self.status is Status.SUCCESS


def joint_path_length(waypoints) -> float:
    w = np.asarray(waypoints, dtype=float)
    if len(w) < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(w, axis=0))))


@dataclass(frozen=True, eq=False)
class Rig:
    """Everything that ties a sampling direction to the arm: kinematics, scene and the pose chain."""

    dh: DHTable = PANDA_DH
    limits: JointLimits = PANDA_LIMITS
    q_home: np.ndarray = field(default_factory=lambda: PANDA_HOME.copy())
    scene: Scene = field(default_factory=lambda: default_scene(riser_height=0.1))
    t_base: Pose | None = None
    t_offset: Pose = field(default_factory=lambda: Pose.from_translation((0.0, 0.0, 0.05)))

    def __post_init__(self) -> None:
        object.__setattr__(self, "q_home", np.asarray(self.q_home, dtype=float))
        if self.t_base is None:
            object.__setattr__(self, "t_base", Pose(rot_z(0.0), self.scene.dut_origin))
        if not self.limits.contains(self.q_home):
            raise DomainError("home posture violates the joint limits")

    def target(self, s: SphericalCoord) -> Pose:
        return final_pose(self.t_base, s, self.t_offset)


def base_from_jog(dh: DHTable, q_jog, t_offset: Pose, standoff: float) -> Pose:
    """Recover the sampling-frame anchor from a jogged posture.

    The probe is jogged onto the DUT boresight at distance ``standoff`` with
    the sampling-frame orientation (theta = 0). Then
    FK(q) = T_base @ Tz(standoff) @ T_offset, solved here for T_base.
    """
    ee = forward_kinematics(dh, q_jog)
    lift = Pose.from_translation((0.0, 0.0, standoff))
    return compose(compose(ee, invert(t_offset)), invert(lift))


def default_rig(riser_height: float = 0.1, dut_xy=(0.5, 0.0), t_offset: Pose | None = None) -> Rig:
    t_offset = t_offset or Pose.from_translation((0.0, 0.0, 0.05))
    scene = default_scene(riser_height=riser_height, dut_xy=dut_xy, probe_point=probe_point_from_offset(t_offset))
    return Rig(scene=scene, t_offset=t_offset)


# ------------------------------------------------------------------ validity


def _valid_points(rig: Rig, scene: Scene, qs: np.ndarray) -> np.ndarray:
    qs = np.atleast_2d(qs)
    ok = rig.limits.contains(qs)
    if ok.any():
        ok[ok] = ~np.asarray(collides(rig.dh, qs[ok], scene))
    return ok


def _edge_samples(a: np.ndarray, b: np.ndarray, resolution: float) -> np.ndarray:
    n = max(1, math.ceil(float(np.max(np.abs(b - a))) / resolution - 1e-12))
    t = np.arange(1, n + 1) / n
    out = a + t[:, None] * (b - a)
    out[-1] = b  # exact end point, free of rounding
    return out


def edge_valid(rig: Rig, scene: Scene, a, b, resolution: float = 0.02) -> bool:
    """Straight joint-space edge, checked at max-norm spacing <= ``resolution`` (end point included)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(_valid_points(rig, scene, _edge_samples(a, b, resolution))))


def densify(path: np.ndarray, resolution: float) -> np.ndarray:
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        out.extend(_edge_samples(a, b, resolution))
    return np.array(out)


# ------------------------------------------------------------------ planners


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int):
        self.nodes = np.empty((capacity, len(root)))
        self.parent = np.empty(capacity, dtype=int)
        self.nodes[0] = root
        self.parent[0] = -1
        self.n = 1

    def nearest(self, q: np.ndarray) -> int:
        d = np.sum((self.nodes[: self.n] - q) ** 2, axis=1)
        return int(np.argmin(d))

    def add(self, q: np.ndarray, parent: int) -> int:
        self.nodes[self.n] = q
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    def branch(self, i: int) -> list[np.ndarray]:
        out = []
        while i >= 0:
            out.append(self.nodes[i])
            i = self.parent[i]
        return out


def _steer_chain(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    """Points from a toward b at Euclidean spacing ``step``, ending exactly at b."""
    d = float(np.linalg.norm(b - a))
    if d == 0.0:
        return np.empty((0, len(a)))
    n = max(1, math.ceil(d / step - 1e-12))
    t = np.arange(1, n + 1) / n
    out = a + t[:, None] * (b - a)
    out[-1] = b
    return out


def _advance(rig, scene, tree: _Tree, target: np.ndarray, p: PlannerParams, greedy: bool, room: int) -> tuple[str, int]:
    """Extend (one step) or connect (repeated steps) ``tree`` toward ``target``.

    Returns ("reached" | "advanced" | "trapped", index of the last node added).
    """
    i = tree.nearest(target)
    chain = _steer_chain(tree.nodes[i], target, p.step)
    if not greedy:
        chain = chain[:1]
    if len(chain) == 0:
        return "reached", i
    chain = chain[: max(0, room)]
    if len(chain) == 0:
        return "trapped", i
    # validate every step's edge in one batch; keep the longest valid prefix
    prev = np.vstack([tree.nodes[i], chain[:-1]])
    samples = [_edge_samples(a, b, p.resolution) for a, b in zip(prev, chain)]
    flat = np.vstack(samples)
    ok = _valid_points(rig, scene, flat)
    counts = np.cumsum([len(s) for s in samples])
    first_bad = int(np.argmin(ok)) if not ok.all() else len(flat)
    good_steps = int(np.searchsorted(counts, first_bad, side="right"))
    if good_steps == 0:
        return "trapped", i
    last = i
    for q in chain[:good_steps]:
        last = tree.add(q, last)
    if good_steps == len(chain) and np.array_equal(chain[-1], target):
        return "reached", last
    return "advanced", last


def rrt_connect(rig: Rig, q_start, q_goal, scene: Scene | None = None, params: PlannerParams = PlannerParams(), seed: int | None = None) -> Trajectory:
    """Bidirectional RRT with greedy connection, shortcut smoothing and dense resampling."""
    scene = rig.scene if scene is None else scene
    rng = np.random.default_rng(params.seed if seed is None else seed)
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    for q, name in ((q_start, "start"), (q_goal, "goal")):
        if not _valid_points(rig, scene, q)[0]:
            raise PlanningFailure(f"{name} configuration is invalid (collision or joint limits)")
    if np.array_equal(q_start, q_goal):
        return Trajectory(q_start[None, :])
    if edge_valid(rig, scene, q_start, q_goal, params.resolution):
        return Trajectory(densify(np.array([q_start, q_goal]), params.resolution))

    half = params.max_nodes
    ta, tb = _Tree(q_start, half), _Tree(q_goal, half)
    a_is_start = True
    lo, hi = rig.limits.lower, rig.limits.upper
    path = None
    while ta.n + tb.n < params.max_nodes:
        q_rand = rng.uniform(lo, hi)
        res, ia = _advance(rig, scene, ta, q_rand, params, False, params.max_nodes - ta.n - tb.n)
        if res != "trapped":
            q_new = ta.nodes[ia]
            res_b, ib = _advance(rig, scene, tb, q_new, params, True, params.max_nodes - ta.n - tb.n)
            if res_b == "reached":
                side_a = ta.branch(ia)[::-1]
                side_b = tb.branch(ib)[1:]
                path = side_a + side_b
                if not a_is_start:
                    path = path[::-1]
                break
        ta, tb = tb, ta
        a_is_start = not a_is_start
    if path is None:
        raise PlanningFailure(f"no path within {params.max_nodes} nodes")
    raw = np.array(path)
    smooth = shortcut(rig, scene, raw, params, rng)
    return Trajectory(densify(smooth, params.resolution))


def shortcut(rig: Rig, scene: Scene, path: np.ndarray, params: PlannerParams, rng) -> np.ndarray:
    """Random shortcutting: replace a sub-path by a straight edge whenever that edge is valid."""
    path = np.array(path)
    for _ in range(params.shortcut_iterations):
        if len(path) <= 2:
            break
        i, j = sorted(rng.choice(len(path), size=2, replace=False))
        if j - i < 2:
            continue
        if edge_valid(rig, scene, path[i], path[j], params.resolution):
            path = np.vstack([path[: i + 1], path[j:]])
    return path


def joint_interpolation(rig: Rig, q_start, q_goal, scene: Scene | None = None, params: PlannerParams = PlannerParams(), seed: int | None = None) -> Trajectory:
    """Baseline: straight line in joint space, no detours."""
    scene = rig.scene if scene is None else scene
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    if not _valid_points(rig, scene, q_start)[0]:
        raise PlanningFailure("start configuration is invalid")
    if np.array_equal(q_start, q_goal):
        return Trajectory(q_start[None, :])
    if not edge_valid(rig, scene, q_start, q_goal, params.resolution):
        raise PlanningFailure("straight joint-space path is blocked")
    return Trajectory(densify(np.array([q_start, q_goal]), params.resolution))


PLANNERS = {"rrt_connect": rrt_connect, "joint_interpolation": joint_interpolation}


# ------------------------------------------------------------------ decision pipeline


def select_goal(candidates, q_start) -> np.ndarray:
    """Candidate nearest to ``q_start`` (Euclidean); ties go to the lexicographically smallest vector."""
    cands = [np.asarray(c, dtype=float) for c in candidates]
    if not cands:
        raise DomainError("no goal candidates")
    q0 = np.asarray(q_start, dtype=float)
    keyed = [(float(np.linalg.norm(c - q0)), tuple(c.tolist()), k) for k, c in enumerate(cands)]
    return cands[min(keyed)[2]]


def select_goal_max_clearance(rig: Rig, candidates, q_start, scene: Scene | None = None) -> np.ndarray:
    """Alternative rule: candidate farthest from any obstacle; distance to start breaks ties."""
    scene = rig.scene if scene is None else scene
    cands = [np.asarray(c, dtype=float) for c in candidates]
    if not cands:
        raise DomainError("no goal candidates")
    q0 = np.asarray(q_start, dtype=float)
    cl = np.atleast_1d(clearance(rig.dh, np.array(cands), scene))
    keyed = [(-float(cl[k]), float(np.linalg.norm(c - q0)), tuple(c.tolist()), k) for k, c in enumerate(cands)]
    return cands[min(keyed)[3]]


def filter_candidates(rig: Rig, candidates, scene: Scene, eps: float) -> list[np.ndarray]:
    out = []
    for q in candidates:
        if not rig.limits.contains(q):
            continue
        if sigma_min(jacobian(rig.dh, q)) <= eps:
            continue
        if collides(rig.dh, q, scene):
            continue
        out.append(q)
    return out


def plan_to_pose(
    rig: Rig,
    t_final: Pose,
    q_start,
    params: PlannerParams = PlannerParams(),
    scene: Scene | None = None,
) -> PlanOutcome:
    scene = rig.scene if scene is None else scene
    t0 = time.perf_counter()
    q_start = np.asarray(q_start, dtype=float)

    def done(status, traj=None, recovery=False, end=q_start, n=0):
        return PlanOutcome(status, traj, recovery, time.perf_counter() - t0, np.asarray(end), n)

    seeds = default_seeds(rig.q_home, rig.limits, extra=[q_start])
    sols = ik_solve(rig.dh, t_final, seeds, rig.limits, params.ik)
    sols = [q for q in sols if rig.limits.contains(q)]
    if not sols:
        return done(Status.FAILURE_NO_IK)
    free = filter_candidates(rig, sols, scene, params.sigma_min_eps)
    if not free:
        return done(Status.FAILURE_ALL_FILTERED, n=len(sols))
    if params.goal_selection == "max_clearance":
        goal = select_goal_max_clearance(rig, free, q_start, scene)
    else:
        goal = select_goal(free, q_start)

    plan = PLANNERS[params.planner]
    try:
        traj = plan(rig, q_start, goal, scene, params, seed=params.seed)
        return done(Status.SUCCESS, traj, end=goal, n=len(sols))
    except PlanningFailure:
        pass
    # single recovery: go home, then replan from there
    try:
        to_home = plan(rig, q_start, rig.q_home, scene, params, seed=params.seed + 1)
    except PlanningFailure:
        return done(Status.FAILURE_PLANNING, recovery=True, n=len(sols))
    try:
        from_home = plan(rig, rig.q_home, goal, scene, params, seed=params.seed + 2)
    except PlanningFailure:
        return done(Status.FAILURE_PLANNING, recovery=True, end=rig.q_home, n=len(sols))
    joined = np.vstack([to_home.waypoints, from_home.waypoints[1:]])
    return done(Status.SUCCESS, Trajectory(joined), recovery=True, end=goal, n=len(sols))


# ------------------------------------------------------------------ benchmark


@dataclass(frozen=True)
class BenchmarkRow:
    planner: str
    pose_index: int
    status: str
    time_s: float
    path_length_rad: float


def benchmark(rig: Rig, samples, planner: str = "rrt_connect", params: PlannerParams | None = None, scene: Scene | None = None):
    """Plan through ``samples`` in order, each from the previous end posture.

    Returns (rows, summary) where summary has success_rate, mean_planning_time
    and mean_path_length (over successful poses).
    """
    params = params or PlannerParams()
    if params.planner != planner:
        params = PlannerParams(**{**params.__dict__, "planner": planner})
    samples = list(samples)
    if not samples:
        raise DomainError("benchmark needs at least one pose")
    q = rig.q_home.copy()
    rows = []
    for smp in samples:
        out = plan_to_pose(rig, rig.target(smp.coord), q, params, scene)
        length = out.trajectory.joint_path_length if out.ok else float("nan")
        rows.append(BenchmarkRow(planner, smp.index, out.status.value, out.planning_time, length))
        q = out.end_config
    ok = [r for r in rows if r.status == Status.SUCCESS.value]
    summary = {
        "planner": planner,
        "n_poses": len(rows),
        "success_rate": len(ok) / len(rows),
        "mean_planning_time_s": float(np.mean([r.time_s for r in rows])),
        "mean_path_length_rad": float(np.mean([r.path_length_rad for r in ok])) if ok else None,
        "calibration_error_mm": "n/a",
    }
    return rows, summary
