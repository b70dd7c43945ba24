"""Simulated 60 GHz link: DUT pattern, free-space loss, ripple, receiver noise, reflector target.

Every stochastic quantity is a pure function of (seed, pose): noise streams
are keyed by the pose itself, so the order in which poses are visited never
changes a measured value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .se3 import DomainError, SphericalCoord

C0 = 299_792_458.0


@dataclass(frozen=True)
class AnalyticPattern:
    """Single boresight lobe, G = peak * cos(theta)^m with m blended between the two principal planes."""

    peak_dbi: float = 10.0
    m_e: float = 8.0
    m_h: float = 10.0
    dynamic_range_db: float = 25.0

    def __post_init__(self) -> None:
        if self.m_e < 0 or self.m_h < 0:
            raise ValueError("pattern exponents must be non-negative")
        if self.dynamic_range_db <= 0:
            raise ValueError("dynamic range must be positive")

    def gain_dbi(self, phi, theta) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        theta = np.asarray(theta, dtype=float)
        m = self.m_e * np.cos(phi) ** 2 + self.m_h * np.sin(phi) ** 2
        c = np.clip(np.cos(theta), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            g = self.peak_dbi + 10.0 * m * np.log10(c)
        g = np.where(m == 0, self.peak_dbi, g)
        return np.maximum(g, self.peak_dbi - self.dynamic_range_db)


@dataclass(frozen=True, eq=False)
class GriddedPattern:
    """Regular (phi, theta) gain table in dBi, bilinear in both angles, periodic in phi."""

    phi_deg: np.ndarray
    theta_deg: np.ndarray
    gain: np.ndarray  # shape (n_phi, n_theta)

    def __post_init__(self) -> None:
        phi = np.asarray(self.phi_deg, dtype=float)
        theta = np.asarray(self.theta_deg, dtype=float)
        g = np.asarray(self.gain, dtype=float)
        if g.shape != (len(phi), len(theta)):
            raise ValueError("gain table shape does not match its axes")
        if not np.all(np.isfinite(g)):
            raise ValueError("gain table has non-finite entries")
        if np.any(np.diff(phi) <= 0) or np.any(np.diff(theta) <= 0):
            raise ValueError("pattern axes must be strictly increasing")
        if len(theta) < 2:
            raise ValueError("pattern needs at least two polar samples")
        object.__setattr__(self, "phi_deg", phi)
        object.__setattr__(self, "theta_deg", theta)
        object.__setattr__(self, "gain", g)

    @classmethod
    def from_csv(cls, path) -> "GriddedPattern":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) < {"phi_deg", "theta_deg", "gain_dbi"}:
                raise ValueError("pattern CSV needs columns phi_deg,theta_deg,gain_dbi")
            for row in reader:
                rows.append((float(row["phi_deg"]), float(row["theta_deg"]), float(row["gain_dbi"])))
        phis = sorted({r[0] for r in rows})
        thetas = sorted({r[1] for r in rows})
        if len(rows) != len(phis) * len(thetas):
            raise ValueError("pattern CSV is not a regular grid")
        table = np.full((len(phis), len(thetas)), np.nan)
        pi = {p: i for i, p in enumerate(phis)}
        ti = {t: i for i, t in enumerate(thetas)}
        for p, t, g in rows:
            table[pi[p], ti[t]] = g
        if np.isnan(table).any():
            raise ValueError("pattern CSV is not a regular grid")
        return cls(np.array(phis), np.array(thetas), table)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phi_deg", "theta_deg", "gain_dbi"])
            for i, p in enumerate(self.phi_deg):
                for j, t in enumerate(self.theta_deg):
                    w.writerow([repr(float(p)), repr(float(t)), repr(float(self.gain[i, j]))])

    def gain_dbi(self, phi, theta) -> np.ndarray:
        pd = np.degrees(np.asarray(phi, dtype=float)) % 360.0
        td = np.degrees(np.asarray(theta, dtype=float))
        t_ax = self.theta_deg
        if np.any(td < t_ax[0] - 1e-9) or np.any(td > t_ax[-1] + 1e-9):
            raise DomainError("polar angle outside the gridded pattern")
        j = np.clip(np.searchsorted(t_ax, td, side="right") - 1, 0, len(t_ax) - 2)
        ft = np.clip((td - t_ax[j]) / (t_ax[j + 1] - t_ax[j]), 0.0, 1.0)
        # periodic azimuth: append the first column one turn later
        p_ax = np.append(self.phi_deg, self.phi_deg[0] + 360.0)
        g = np.vstack([self.gain, self.gain[:1]])
        pd = np.where(pd < p_ax[0], pd + 360.0, pd)
        i = np.clip(np.searchsorted(p_ax, pd, side="right") - 1, 0, len(p_ax) - 2)
        fp = np.clip((pd - p_ax[i]) / (p_ax[i + 1] - p_ax[i]), 0.0, 1.0)
        g00 = g[i, j]
        g01 = g[i, j + 1]
        g10 = g[i + 1, j]
        g11 = g[i + 1, j + 1]
        return (1 - fp) * ((1 - ft) * g00 + ft * g01) + fp * ((1 - ft) * g10 + ft * g11)


PatternModel = AnalyticPattern | GriddedPattern


@dataclass(frozen=True)
class LinkConfig:
    frequency: float = 60e9
    tx_power: float = 0.0
    rx_gain: float = 20.0
    noise_floor: float = -90.0
    noise_sigma: float = 0.3
    multipath_ripple_sigma: float = 0.0
    ripple_correlation_deg: float = 30.0
    seed: int = 0
    sweep_rate: float = 10.0

    def __post_init__(self) -> None:
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if self.noise_sigma < 0 or self.multipath_ripple_sigma < 0:
            raise ValueError("noise and ripple sigma must be non-negative")
        if not self.ripple_correlation_deg > 0:
            raise ValueError("ripple correlation length must be positive")
        if not self.sweep_rate > 0:
            raise ValueError("sweep rate must be positive")

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency


@dataclass(frozen=True)
class VerificationTarget:
    phi_deg: float = 90.0
    theta_deg: float = 20.0
    lobe_width_deg: float = 10.0
    peak_return: float = -30.0
    reference_radius: float = 0.05

    def __post_init__(self) -> None:
        if not self.lobe_width_deg > 0:
            raise ValueError("lobe width must be positive")
        if not self.reference_radius > 0:
            raise ValueError("reference radius must be positive")


def free_space_loss_db(r: float, wavelength: float) -> float:
    if not r > 0:
        raise DomainError("link distance must be positive")
    return 20.0 * math.log10(4.0 * math.pi * r / wavelength)


def ideal_power_dbm(pattern: PatternModel, link: LinkConfig, s: SphericalCoord) -> float:
    g = float(pattern.gain_dbi(s.phi, s.theta))
    return link.tx_power + g + link.rx_gain - free_space_loss_db(s.r, link.wavelength)


# ------------------------------------------------------------------ ripple

RIPPLE_TERMS = 64
# root of sin(x)/x = 1/e; the isotropic field correlation is sin(k d)/(k d) for chord d
_SINC_INV_E = 2.1991230711614547


def _ripple_basis(seed: int, corr_deg: float, k: int = RIPPLE_TERMS):
    rng = np.random.default_rng([0x5249, int(seed)])
    w = rng.normal(size=(k, 3))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    # correlation drops to 1/e at the configured angular separation
    chord = 2.0 * math.sin(math.radians(corr_deg) / 2.0)
    w *= _SINC_INV_E / chord
    phase = rng.uniform(0.0, 2.0 * math.pi, size=k)
    return w, phase


def ripple_db(link: LinkConfig, s: SphericalCoord, seed: int | None = None) -> float:
    """Smooth zero-mean angular ripple: random-direction plane waves on the unit sphere.

    Each of K terms has amplitude sigma*sqrt(2/K), so the field variance is
    sigma^2. The correlation between two directions is sinc(k * chord), so
    the wave number is chosen to make it 1/e at the configured angle.
    """
    sigma = link.multipath_ripple_sigma
    if sigma == 0.0:
        return 0.0
    w, phase = _ripple_basis(link.seed if seed is None else seed, link.ripple_correlation_deg)
    u = s.unit_vector()
    amp = sigma * math.sqrt(2.0 / len(phase))
    return float(amp * np.sum(np.cos(w @ u + phase)))


def perturbed_power_dbm(pattern: PatternModel, link: LinkConfig, s: SphericalCoord, seed: int | None = None) -> float:
    p = ideal_power_dbm(pattern, link, s)
    if link.multipath_ripple_sigma == 0.0:
        return p
    return p + ripple_db(link, s, seed)


# ------------------------------------------------------------------ receiver noise


def pose_key(s: SphericalCoord) -> tuple[int, int, int]:
    """Integer identity of a pose (micro-degree / nano-meter resolution) for seeding noise streams."""
    return (
        int(round(math.degrees(s.phi) * 1e6)) % 360_000_000,
        int(round(math.degrees(s.theta) * 1e6)),
        int(round(s.r * 1e9)),
    )


def noise_draws(sigma: float, s: SphericalCoord, n: int, seed) -> np.ndarray:
    """First ``n`` receiver-noise draws of the stream belonging to (seed, pose)."""
    if sigma == 0.0:
        return np.zeros(n)
    entropy = [0x4E5A, *np.atleast_1d(np.asarray(seed, dtype=np.int64)).tolist(), *pose_key(s)]
    return sigma * np.random.default_rng(entropy).standard_normal(n)


def sweeps_for_dwell(dwell: float, sweep_rate: float) -> int:
    # tolerate float noise in products like 0.1 * 10
    return max(1, math.ceil(dwell * sweep_rate - 1e-9))


def max_hold_sample(
    pattern: PatternModel,
    link: LinkConfig,
    s: SphericalCoord,
    dwell: float,
    sweep_rate: float | None = None,
    seed=0,
) -> float:
    """Detector MAX-HOLD over the dwell: max of n noisy sweeps, floored at the receiver floor."""
    rate = link.sweep_rate if sweep_rate is None else sweep_rate
    n = sweeps_for_dwell(dwell, rate)
    p = perturbed_power_dbm(pattern, link, s)
    draws = p + noise_draws(link.noise_sigma, s, n, seed)
    return float(max(np.max(draws), link.noise_floor))


# ------------------------------------------------------------------ reflector


def angular_separation(phi1, theta1, phi2, theta2) -> float:
    """Great-circle angle between two directions (all radians)."""
    c = math.sin(theta1) * math.sin(theta2) * math.cos(phi1 - phi2) + math.cos(theta1) * math.cos(theta2)
    return math.acos(max(-1.0, min(1.0, c)))


def reflector_power_dbm(target: VerificationTarget, link: LinkConfig, s: SphericalCoord) -> float:
    psi = angular_separation(math.radians(target.phi_deg), math.radians(target.theta_deg), s.phi, s.theta)
    w = math.radians(target.lobe_width_deg)
    # 10*log10(exp(-psi^2 / 2w^2)) without underflow
    lobe = -10.0 * math.log10(math.e) * psi**2 / (2.0 * w**2)
    spread = -20.0 * math.log10(s.r / target.reference_radius)
    return max(target.peak_return + lobe + spread, link.noise_floor)


# ------------------------------------------------------------------ backend


@dataclass(frozen=True)
class LinkBackend:
    """What the emulated analyzer observes at a pose: the DUT link or a reflector return."""

    link: LinkConfig = LinkConfig()
    pattern: PatternModel = AnalyticPattern()
    target: VerificationTarget | None = None

    def ideal(self, s: SphericalCoord) -> float:
        if self.target is not None:
            return reflector_power_dbm(self.target, self.link, s)
        return ideal_power_dbm(self.pattern, self.link, s)

    def environment(self, s: SphericalCoord) -> float:
        if self.target is not None:
            return reflector_power_dbm(self.target, self.link, s)
        return perturbed_power_dbm(self.pattern, self.link, s)

    def sweep(self, s: SphericalCoord, k: int, noise_seed) -> float:
        """Level seen on the k-th sweep (0-based) since the trace was cleared."""
        draw = noise_draws(self.link.noise_sigma, s, k + 1, noise_seed)[k]
        return max(self.environment(s) + draw, self.link.noise_floor)


def load_pattern(spec: dict | None, base_dir: Path | None = None) -> PatternModel:
    if not spec:
        return AnalyticPattern()
    kind = spec.get("kind", "analytic")
    if kind == "analytic":
        kw = {k: float(v) for k, v in spec.items() if k != "kind"}
        return AnalyticPattern(**kw)
    if kind == "gridded":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return GriddedPattern.from_csv(path)
    raise ValueError(f"unknown pattern kind {kind!r}")
