"""Campaign configuration: TOML (or JSON) on top of the packaged defaults."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .collision import Box, Capsule, Sphere, default_scene, probe_point_from_offset
from .grid import SCAN_PRESETS, GridSpec, SphericalSample, generate_grid
from .kinematics import PANDA_DH, PANDA_LIMITS
from .planner import PlannerParams, Rig, base_from_jog
from .rf import LinkBackend, LinkConfig, VerificationTarget, load_pattern
from .se3 import EulerZYX, pose_from_euler


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("hemiscan").joinpath("data/default.toml").read_text()
    return tomllib.loads(text)


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key '{where}' must be a table")
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = copy.deepcopy(val)
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = default_config()
    if path is not None:
        cfg = _merge(cfg, read_config_file(path))
        cfg["_base_dir"] = str(Path(path).resolve().parent)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    blob = json.dumps(clean, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ------------------------------------------------------------------ typed views


def _num(cfg: dict, dotted: str) -> float:
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)) or not math.isfinite(node):
        raise ConfigError(f"config key '{dotted}' must be a finite number")
    return float(node)


def _vec(cfg: dict, dotted: str, n: int) -> np.ndarray:
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    try:
        arr = np.asarray(node, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"config key '{dotted}' must be a list of {n} numbers") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"config key '{dotted}' must be a list of {n} numbers")
    return arr


def grid_spec(cfg: dict) -> GridSpec:
    g = cfg["grid"]
    preset = g.get("preset") or ""
    if preset:
        if preset not in SCAN_PRESETS:
            raise ConfigError(f"config key 'grid.preset': unknown preset {preset!r}")
        return SCAN_PRESETS[preset]
    try:
        return GridSpec(
            radius=_num(cfg, "grid.radius_m"),
            phi_step=_num(cfg, "grid.phi_step_deg"),
            theta_step=_num(cfg, "grid.theta_step_deg"),
            phi_start=_num(cfg, "grid.phi_start_deg"),
            phi_end=_num(cfg, "grid.phi_end_deg"),
            theta_start=_num(cfg, "grid.theta_start_deg"),
            theta_end=_num(cfg, "grid.theta_end_deg"),
            theta_end_inclusive=bool(g["theta_end_inclusive"]),
            ordering=g["ordering"],
            theta_values=tuple(g["theta_values_deg"]) or None,
        )
    except ValueError as exc:
        raise ConfigError(f"config section 'grid': {exc}") from exc


def _obstacle(spec: dict, k: int):
    kind = spec.get("type")
    where = f"scene.obstacles[{k}]"
    try:
        if kind == "box":
            return Box(spec["min_m"], spec["max_m"], spec.get("name", ""))
        if kind == "sphere":
            return Sphere(spec["center_m"], float(spec["radius_m"]))
        if kind == "capsule":
            return Capsule(spec["a_m"], spec["b_m"], float(spec["radius_m"]))
    except KeyError as exc:
        raise ConfigError(f"config key '{where}.{exc.args[0]}' is required") from None
    except ValueError as exc:
        raise ConfigError(f"config key '{where}': {exc}") from None
    raise ConfigError(f"config key '{where}.type' must be box, sphere or capsule")


def _euler_deg(cfg: dict, dotted: str) -> EulerZYX:
    yaw, pitch, roll = _vec(cfg, dotted, 3)
    return EulerZYX.from_degrees(yaw, pitch, roll)


def build_rig(cfg: dict) -> Rig:
    t_offset = pose_from_euler(_euler_deg(cfg, "chain.offset.euler_zyx_deg"), _vec(cfg, "chain.offset.translation_m", 3))
    riser = _num(cfg, "scene.riser_height_m")
    if riser < 0:
        raise ConfigError("config key 'scene.riser_height_m' must be >= 0")
    scene = default_scene(
        riser_height=riser,
        dut_xy=tuple(_vec(cfg, "scene.dut_xy_m", 2)),
        probe_point=probe_point_from_offset(t_offset),
        table_origin=tuple(_vec(cfg, "scene.table_origin_xy_m", 2)),
    )
    extra = [_obstacle(o, k) for k, o in enumerate(cfg["scene"]["obstacles"])]
    if extra:
        scene = scene.with_obstacles(extra)
    home = _vec(cfg, "robot.home_q_rad", 7)
    mode = cfg["chain"]["base"]["mode"]
    if mode == "dut":
        t_base = pose_from_euler(_euler_deg(cfg, "chain.base.euler_zyx_deg"), scene.dut_origin)
    elif mode == "explicit":
        t_base = pose_from_euler(_euler_deg(cfg, "chain.base.euler_zyx_deg"), _vec(cfg, "chain.base.translation_m", 3))
    elif mode == "jog":
        t_base = base_from_jog(PANDA_DH, _vec(cfg, "chain.base.jog_q_rad", 7), t_offset, _num(cfg, "chain.base.standoff_m"))
    else:
        raise ConfigError("config key 'chain.base.mode' must be dut, explicit or jog")
    try:
        return Rig(PANDA_DH, PANDA_LIMITS, home, scene, t_base, t_offset)
    except ValueError as exc:
        raise ConfigError(f"config key 'robot.home_q_rad': {exc}") from exc


def planner_params(cfg: dict) -> PlannerParams:
    p = cfg["planner"]
    try:
        return PlannerParams(
            planner=p["planner"],
            step=_num(cfg, "planner.step_rad"),
            max_nodes=int(p["max_nodes"]),
            shortcut_iterations=int(p["shortcut_iterations"]),
            resolution=_num(cfg, "planner.resolution_rad"),
            sigma_min_eps=_num(cfg, "planner.sigma_min_eps"),
            goal_selection=p["goal_selection"],
            velocity_scale=_num(cfg, "planner.velocity_scale"),
            acceleration_scale=_num(cfg, "planner.acceleration_scale"),
            seed=int(cfg["seeds"]["planner"]),
        )
    except ValueError as exc:
        raise ConfigError(f"config section 'planner': {exc}") from exc


def link_config(cfg: dict) -> LinkConfig:
    try:
        return LinkConfig(
            frequency=_num(cfg, "link.frequency_hz"),
            tx_power=_num(cfg, "link.tx_power_dbm"),
            rx_gain=_num(cfg, "link.rx_gain_dbi"),
            noise_floor=_num(cfg, "link.noise_floor_dbm"),
            noise_sigma=_num(cfg, "link.noise_sigma_db"),
            multipath_ripple_sigma=_num(cfg, "link.ripple_sigma_db"),
            ripple_correlation_deg=_num(cfg, "link.ripple_correlation_deg"),
            seed=int(cfg["seeds"]["environment"]),
            sweep_rate=_num(cfg, "link.sweep_rate_hz"),
        )
    except ValueError as exc:
        raise ConfigError(f"config section 'link': {exc}") from exc


def backend(cfg: dict, verification: bool = False) -> LinkBackend:
    pat = dict(cfg["link"]["pattern"])
    if pat.get("kind") == "analytic":
        pat.pop("path", None)
    base = Path(cfg["_base_dir"]) if "_base_dir" in cfg else None
    try:
        pattern = load_pattern(pat, base)
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(f"config section 'link.pattern': {exc}") from exc
    target = None
    if verification:
        try:
            target = VerificationTarget(
                _num(cfg, "verify.phi_deg"),
                _num(cfg, "verify.theta_deg"),
                _num(cfg, "verify.lobe_width_deg"),
                _num(cfg, "verify.peak_return_dbm"),
                _num(cfg, "verify.reference_radius_m"),
            )
        except ValueError as exc:
            raise ConfigError(f"config section 'verify': {exc}") from exc
    return LinkBackend(link_config(cfg), pattern, target)


@dataclass(frozen=True, eq=False)
class Campaign:
    cfg: dict
    grid: GridSpec
    samples: list[SphericalSample]
    rig: Rig
    params: PlannerParams
    link: LinkConfig

    @property
    def dwell(self) -> float:
        return float(self.cfg["dwell_s"])

    @property
    def noise_seed(self) -> int:
        return int(self.cfg["seeds"]["noise"])


def build_campaign(cfg: dict) -> Campaign:
    spec = grid_spec(cfg)
    dwell = _num(cfg, "dwell_s")
    if dwell <= 0:
        raise ConfigError("config key 'dwell_s' must be positive")
    for key in ("planner", "noise", "environment"):
        if not isinstance(cfg["seeds"][key], int) or isinstance(cfg["seeds"][key], bool):
            raise ConfigError(f"config key 'seeds.{key}' must be an integer")
    link = link_config(cfg)
    backend(cfg)  # validates the pattern section early
    return Campaign(cfg, spec, generate_grid(spec), build_rig(cfg), planner_params(cfg), link)


def seed_override(seed: int) -> dict:
    return {"seeds": {"planner": seed, "noise": seed, "environment": seed}}
