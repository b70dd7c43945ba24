"""Command handler for the emulated spectrum analyzer.

The emulator renders a single tone (the DUT carrier) into a fixed-length
trace. Each ``:INITiate:IMMediate`` is one sweep; under MAX-HOLD successive
sweeps are combined element-wise until the hold is cleared. The hold is
cleared by ``*RST``, by (re)selecting a detector, and by any change of
frequency, span, bandwidth or pose.

Trace values are quantised to a 16-bit grid over the display range and
printed with four decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..rf import LinkBackend
from ..se3 import DomainError, SphericalCoord
from .parser import ScpiCommand, ScpiError, Word, parse_scpi

DISPLAY_MIN_DBM = -150.0
DISPLAY_MAX_DBM = 10.0
ADC_LEVELS = 2**16 - 1
DEFAULT_BINS = 1001
# one-sided level drop at RBW/2 for the Gaussian filter shape
_HALF_POWER_DB = 10.0 * math.log10(2.0)

DETECTORS = {"NORM": "NORM", "NORMAL": "NORM", "MAXH": "MAXH", "MAXHOLD": "MAXH"}

FREQ_RANGE = (9e3, 110e9)
SPAN_RANGE = (0.0, 110e9)
BW_RANGE = (1.0, 50e6)


@dataclass
class AnalyzerState:
    center_freq: float = 60e9
    span: float = 10e6
    rbw: float = 100e3
    vbw: float = 100e3
    detector: str = "NORM"
    trace: np.ndarray | None = None
    armed: bool = False
    sim_pose: SphericalCoord = field(default_factory=lambda: SphericalCoord(0.0, 0.0, 0.05))
    n_bins: int = DEFAULT_BINS
    # sweeps accumulated since the trace was last cleared
    sweeps: int = 0

    def __post_init__(self) -> None:
        if self.n_bins < 1:
            raise ValueError("trace needs at least one bin")
        if self.trace is None:
            self.trace = np.full(self.n_bins, DISPLAY_MIN_DBM)

    def frequencies(self) -> np.ndarray:
        if self.n_bins == 1:
            return np.array([self.center_freq])
        return self.center_freq + self.span * (np.arange(self.n_bins) / (self.n_bins - 1) - 0.5)


def quantize(values) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=float), DISPLAY_MIN_DBM, DISPLAY_MAX_DBM)
    step = (DISPLAY_MAX_DBM - DISPLAY_MIN_DBM) / ADC_LEVELS
    return DISPLAY_MIN_DBM + np.round((v - DISPLAY_MIN_DBM) / step) * step


def quantization_step() -> float:
    return (DISPLAY_MAX_DBM - DISPLAY_MIN_DBM) / ADC_LEVELS


def nearest_bin(center: float, span: float, n_bins: int, freq: float) -> int:
    if n_bins == 1 or span == 0:
        return (n_bins - 1) // 2
    x = (freq - center) / span + 0.5
    return int(min(n_bins - 1, max(0, round(x * (n_bins - 1)))))


def _num(x: float) -> str:
    return f"{x:.9E}"


class Analyzer:
    """Stateful emulator: feed it command lines, get response lines back."""

    def __init__(self, backend: LinkBackend | None = None, noise_seed: int = 0, n_bins: int = DEFAULT_BINS):
        self.backend = backend or LinkBackend()
        self.noise_seed = noise_seed
        self.n_bins = n_bins
        self.state = AnalyzerState(n_bins=n_bins)
        self.identity = f"HEMISCAN,SIM-ANALYZER,0,{__version__}"

    # -- protocol

    def execute(self, line: str | bytes) -> str | None:
        """Run one line. Returns the response text (no newline) or None for a silent setter."""
        try:
            cmd = parse_scpi(line)
            return self.handle(cmd)
        except ScpiError as err:
            return err.response()

    def handle(self, cmd: ScpiCommand) -> str | None:
        fn = _DISPATCH[cmd.header]
        return fn(self, cmd)

    # -- helpers

    def _clear(self) -> None:
        st = self.state
        st.trace = np.full(st.n_bins, DISPLAY_MIN_DBM)
        st.sweeps = 0
        st.armed = False

    def render(self, level_dbm: float) -> np.ndarray:
        st = self.state
        floor = self.backend.link.noise_floor
        # zero span: every bin is a time sample at the center frequency
        freqs = np.full(st.n_bins, st.center_freq) if st.span == 0 else st.frequencies()
        df = freqs - self.backend.link.frequency
        shape = -_HALF_POWER_DB * (2.0 * df / st.rbw) ** 2
        return quantize(np.maximum(level_dbm + shape, floor))

    # -- command bodies

    def _idn(self, cmd):
        _no_args(cmd)
        return self.identity

    def _opc(self, cmd):
        _no_args(cmd)
        return "1"

    def _rst(self, cmd):
        _no_args(cmd)
        self.state = AnalyzerState(n_bins=self.n_bins)
        return None

    def _float_setting(self, cmd, attr: str, lo: float, hi: float):
        st = self.state
        if cmd.is_query:
            _no_args(cmd)
            return _num(getattr(st, attr))
        v = _one_number(cmd)
        if not lo <= v <= hi:
            raise ScpiError(-222, "Data out of range")
        if getattr(st, attr) != v:
            setattr(st, attr, v)
            self._clear()
        return None

    def _center(self, cmd):
        return self._float_setting(cmd, "center_freq", *FREQ_RANGE)

    def _span(self, cmd):
        return self._float_setting(cmd, "span", *SPAN_RANGE)

    def _rbw(self, cmd):
        return self._float_setting(cmd, "rbw", *BW_RANGE)

    def _vbw(self, cmd):
        return self._float_setting(cmd, "vbw", *BW_RANGE)

    def _detector(self, cmd):
        if cmd.is_query:
            _no_args(cmd)
            return self.state.detector
        if len(cmd.args) != 1 or not isinstance(cmd.args[0], Word):
            raise ScpiError(-104, "Data type error")
        det = DETECTORS.get(str(cmd.args[0]))
        if det is None:
            raise ScpiError(-224, "Illegal parameter value")
        self.state.detector = det
        self._clear()
        return None

    def _init(self, cmd):
        _no_args(cmd)
        st = self.state
        level = self.backend.sweep(st.sim_pose, st.sweeps, self.noise_seed)
        new = self.render(level)
        if st.detector == "MAXH" and st.sweeps > 0:
            st.trace = np.maximum(st.trace, new)
        else:
            st.trace = new
        st.sweeps += 1
        st.armed = True
        return None

    def _trace(self, cmd):
        if len(cmd.args) != 1 or not isinstance(cmd.args[0], Word):
            raise ScpiError(-109, "Missing parameter")
        if str(cmd.args[0]) not in ("TRACE1", "TRACE", "TRAC1"):
            raise ScpiError(-224, "Illegal parameter value")
        return ",".join(f"{v:.4f}" for v in self.state.trace)

    def _pose(self, cmd):
        st = self.state
        if cmd.is_query:
            _no_args(cmd)
            p = st.sim_pose
            return ",".join(_num(v) for v in (p.phi_deg, p.theta_deg, p.r))
        if len(cmd.args) < 3:
            raise ScpiError(-109, "Missing parameter")
        if len(cmd.args) > 3:
            raise ScpiError(-108, "Parameter not allowed")
        if not all(isinstance(a, float) for a in cmd.args):
            raise ScpiError(-104, "Data type error")
        phi, theta, r = cmd.args
        try:
            pose = SphericalCoord.from_degrees(phi, theta, r)
        except DomainError:
            raise ScpiError(-222, "Data out of range") from None
        if pose != st.sim_pose:
            st.sim_pose = pose
            self._clear()
        return None


def _no_args(cmd: ScpiCommand) -> None:
    if cmd.args:
        raise ScpiError(-108, "Parameter not allowed")


def _one_number(cmd: ScpiCommand) -> float:
    if not cmd.args:
        raise ScpiError(-109, "Missing parameter")
    if len(cmd.args) > 1:
        raise ScpiError(-108, "Parameter not allowed")
    v = cmd.args[0]
    if isinstance(v, str):
        raise ScpiError(-104, "Data type error")
    if not math.isfinite(v):
        raise ScpiError(-222, "Data out of range")
    return float(v)


_DISPATCH = {
    ("*IDN",): Analyzer._idn,
    ("*OPC",): Analyzer._opc,
    ("*RST",): Analyzer._rst,
    ("FREQUENCY", "CENTER"): Analyzer._center,
    ("FREQUENCY", "SPAN"): Analyzer._span,
    ("BANDWIDTH", "RESOLUTION"): Analyzer._rbw,
    ("BANDWIDTH", "VIDEO"): Analyzer._vbw,
    ("DETECTOR",): Analyzer._detector,
    ("INITIATE", "IMMEDIATE"): Analyzer._init,
    ("TRACE", "DATA"): Analyzer._trace,
    ("SYSTEM", "POSE"): Analyzer._pose,
}


def replay(analyzer: Analyzer, lines) -> list[str]:
    """Run a transcript; returns the response log (one entry per response line)."""
    out = []
    for line in lines:
        resp = analyzer.execute(line)
        if resp is not None:
            out.append(resp)
    return out


__all__ = ["Analyzer", "AnalyzerState", "quantize", "nearest_bin", "replay"]
