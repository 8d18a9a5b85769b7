"""Temporal-waveform engineering through trigger modulation.

The trigger mode passes a modulator with amplitude transmission sin_m(t),
nonzero only on [t_m1, t_m2], before reaching the detectors through a cavity
with impulse response g(t) = sqrt(2 gamma) e^{-gamma t}. A detection after
t_m2 heralds the signal in the waveform

    f1(t) = c' e^{gamma (t - t_m2)} sin_m(t).

All times are in seconds and gamma is an angular rate (rad/s).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import convolve

from heraldlab.errors import (
    DomainError,
    EmptyModulation,
    GridMismatch,
    RangeExceeded,
    UnreachableWaveform,
)

DEFAULT_GAMMA = 2 * math.pi * 2.9e6
DEFAULT_DT = 0.32e-9  # 3.125 GS/s
V0 = 0.5
V_MAX = 0.4
REPETITION_LIMIT = 0.01
BUILTIN_NAMES = ("exp_rising", "square", "square_pulse_modulated", "balanced_time_bin")


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("time step must be positive")
        if self.n < 2:
            raise DomainError("a time grid needs at least two samples")

    @classmethod
    def span(cls, t0: float, t1: float, dt: float = DEFAULT_DT) -> TimeGrid:
        return cls(float(t0), float(dt), int(round((t1 - t0) / dt)))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def duration(self) -> float:
        return self.n * self.dt

    def index(self, t: float) -> int:
        """Nearest sample index to time t (may fall outside the grid)."""
        return int(round((t - self.t0) / self.dt))

    def matches(self, other: TimeGrid) -> bool:
        return (
            self.n == other.n
            and math.isclose(self.dt, other.dt, rel_tol=1e-12)
            and abs(self.t0 - other.t0) <= 1e-9 * self.dt
        )


def _require_same_grid(a: TimeGrid, b: TimeGrid) -> None:
    if not a.matches(b):
        raise GridMismatch(f"grids differ: {a} vs {b}")


@dataclass(frozen=True)
class TemporalWaveform:
    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != (self.grid.n,):
            raise GridMismatch(f"{s.size} samples on a {self.grid.n}-point grid")
        object.__setattr__(self, "samples", s)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.samples**2) * self.grid.dt))

    def normalize(self) -> TemporalWaveform:
        nrm = self.norm
        if nrm == 0:
            raise DomainError("cannot normalize an all-zero waveform")
        return TemporalWaveform(self.grid, self.samples / nrm)

    def integral(self) -> float:
        return float(np.sum(self.samples) * self.grid.dt)


@dataclass(frozen=True)
class ModulationProgram:
    """Modulation amplitude sin_m on a grid, confined to [t_m1, t_m2]."""

    grid: TimeGrid
    sin_m: np.ndarray
    t_m1: float
    t_m2: float
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        s = np.asarray(self.sin_m, dtype=float)
        if s.shape != (self.grid.n,):
            raise GridMismatch(f"{s.size} modulation samples on a {self.grid.n}-point grid")
        if self.gamma <= 0:
            raise DomainError("gamma must be positive")
        if self.t_m2 < self.t_m1:
            raise DomainError("t_m2 precedes t_m1")
        if np.any(np.abs(s) > 1.0 + 1e-12):
            raise DomainError("|sin_m| exceeds 1")
        t = self.grid.times
        half = 0.5 * self.grid.dt
        outside = (t < self.t_m1 - half) | (t > self.t_m2 + half)
        if np.any(s[outside] != 0.0):
            raise DomainError("modulation is nonzero outside [t_m1, t_m2]")
        object.__setattr__(self, "sin_m", np.clip(s, -1.0, 1.0))

    @property
    def width(self) -> float:
        return self.t_m2 - self.t_m1


def unmodulated(grid: TimeGrid, gamma: float = DEFAULT_GAMMA) -> ModulationProgram:
    """Modulator left fully open for the whole grid."""
    t = grid.times
    return ModulationProgram(grid, np.ones(grid.n), float(t[0]), float(t[-1]), gamma)


# ----------------------------------------------------------------- cavity


def cavity_g(gamma: float, grid: TimeGrid) -> TemporalWaveform:
    """g(t) = sqrt(2 gamma) e^{-gamma t} for t >= 0, normalized on the grid."""
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    t = grid.times
    g = np.where(t >= 0, np.sqrt(2 * gamma) * np.exp(-gamma * np.clip(t, 0, None)), 0.0)
    return TemporalWaveform(grid, g).normalize()


def displacement_profile(gamma: float, t_m2: float, grid: TimeGrid) -> TemporalWaveform:
    """Matched displacement profile h(t) = g(t - t_m2)."""
    shifted = TimeGrid(grid.t0 - t_m2, grid.dt, grid.n)
    return TemporalWaveform(grid, cavity_g(gamma, shifted).samples)


# ----------------------------------------------------------------- shaping


def _raw_waveform(m: ModulationProgram) -> np.ndarray:
    t = m.grid.times
    return np.exp(m.gamma * np.clip(t - m.t_m2, None, 0.0)) * m.sin_m


def modulation_to_waveform(m: ModulationProgram) -> tuple[TemporalWaveform, float]:
    """Heralded waveform f1 and its normalization c' (units 1/sqrt(s))."""
    raw = _raw_waveform(m)
    energy = float(np.sum(raw**2) * m.grid.dt)
    if energy == 0.0:
        raise EmptyModulation("modulation program is identically zero")
    cprime = 1.0 / math.sqrt(energy)
    return TemporalWaveform(m.grid, cprime * raw), cprime


def planner_cnorm(m: ModulationProgram) -> float:
    """Dimensionless c' / sqrt(2 gamma); equals 1 for the conventional exponential."""
    return modulation_to_waveform(m)[1] / math.sqrt(2 * m.gamma)


def target_to_modulation(
    f_target: TemporalWaveform,
    gamma: float = DEFAULT_GAMMA,
    t_m2: float | None = None,
    depth: float = 1.0,
) -> ModulationProgram:
    """Invert f1 = c' e^{gamma(t - t_m2)} sin_m with max|sin_m| = depth.

    ``t_m2`` defaults to the last sample where the target is nonzero.
    """
    if not 0 < depth <= 1:
        raise DomainError("modulation depth must lie in (0, 1]")
    f = f_target.samples
    t = f_target.grid.times
    nz = np.nonzero(f != 0.0)[0]
    if nz.size == 0:
        raise EmptyModulation("target waveform is identically zero")
    if t_m2 is None:
        t_m2 = float(t[nz[-1]])
    if t[nz[-1]] > t_m2 + 0.5 * f_target.grid.dt:
        raise UnreachableWaveform(
            f"target has support at t = {t[nz[-1]]:.4g} s, after the modulation end {t_m2:.4g} s"
        )
    sin_m = f * np.exp(-gamma * (t - t_m2))
    sin_m[f == 0.0] = 0.0
    sin_m *= depth / np.max(np.abs(sin_m))
    return ModulationProgram(f_target.grid, sin_m, float(t[nz[0]]), float(t_m2), gamma)


def awg_voltage(m: ModulationProgram, v0: float = V0, v_max: float = V_MAX) -> np.ndarray:
    """V(t) = (2 V0 / pi) arcsin(sin_m(t)); RangeExceeded carries the rescale factor."""
    volts = (2.0 * v0 / math.pi) * np.arcsin(m.sin_m)
    peak = float(np.max(np.abs(volts)))
    if peak > v_max + 1e-12:
        scale = math.sin(0.5 * math.pi * v_max / v0) / float(np.max(np.abs(m.sin_m)))
        raise RangeExceeded(
            f"AWG voltage {peak:.4g} V exceeds {v_max} V; scale sin_m by {scale:.4f}", scale=scale
        )
    return volts


def voltage_to_modulation(volts, v0: float = V0) -> np.ndarray:
    return np.sin(0.5 * math.pi * np.asarray(volts, dtype=float) / v0)


def mode_matching(f_a: TemporalWaveform, f_b: TemporalWaveform) -> float:
    """Squared overlap of two waveforms (normalized internally)."""
    _require_same_grid(f_a.grid, f_b.grid)
    num = np.sum(f_a.samples * f_b.samples) * f_a.grid.dt
    return float(num**2 / (f_a.norm**2 * f_b.norm**2))


# ----------------------------------------------------------------- detection timing


def detection_rate(m: ModulationProgram, grid: TimeGrid | None = None, r0: float = 1.0) -> np.ndarray:
    """Trigger detection rate, r0 * (g^2 * sin_m^2)(T).

    Intensity convolution of the squared modulation with the cavity
    intensity response; a fully open modulator gives r0 in steady state.
    """
    grid = m.grid if grid is None else grid
    _require_same_grid(m.grid, grid)
    t = grid.dt * np.arange(grid.n)
    g2 = 2 * m.gamma * np.exp(-2 * m.gamma * t)
    rate = convolve(m.sin_m**2, g2, method="direct")[: grid.n] * grid.dt
    return r0 * np.clip(rate, 0.0, None)


def success_window(
    rate: np.ndarray,
    grid: TimeGrid,
    t_m2: float,
    dark_rate: float,
    snr_min: float,
) -> tuple[float, float]:
    """Longest window [t_m2, t_m2 + tau) with rate / dark_rate >= snr_min."""
    if dark_rate < 0 or snr_min < 0:
        raise DomainError("dark rate and SNR threshold must be non-negative")
    rate = np.asarray(rate, dtype=float)
    i0 = min(max(grid.index(t_m2), 0), grid.n)
    tail = rate[i0:]
    if dark_rate == 0.0:
        ok = np.isfinite(tail) if math.isfinite(snr_min) else np.zeros(tail.size, bool)
    else:
        ok = tail / dark_rate >= snr_min
    bad = np.nonzero(~ok)[0]
    count = tail.size if bad.size == 0 else int(bad[0])
    return float(t_m2), count * grid.dt


@dataclass(frozen=True)
class RepetitionReport:
    residual: float
    passed: bool


def repetition_check(m: ModulationProgram, tau_rep: float) -> RepetitionReport:
    """Leakage of earlier repetitions into the current success window.

    Each earlier pulse contributes a cavity tail e^{-2 gamma k tau_rep}
    relative to the current pulse's post-modulation intensity; the residual
    sums every earlier repetition, 1 / (e^{2 gamma tau_rep} - 1). A period
    shorter than the pulse itself never passes.
    """
    if not tau_rep > 0:
        raise DomainError("repetition period must be positive")
    if math.isinf(tau_rep):
        return RepetitionReport(0.0, True)
    residual = 1.0 / math.expm1(2 * m.gamma * tau_rep)
    # overlapping pulses fail regardless of the cavity tail
    return RepetitionReport(residual, residual < REPETITION_LIMIT and tau_rep >= m.width)


# ----------------------------------------------------------------- built-ins


def builtin_waveforms(
    name: str,
    grid: TimeGrid,
    gamma: float = DEFAULT_GAMMA,
    t_m2: float | None = None,
    *,
    width: float = 100e-9,
    bin_width: float = 30e-9,
    gap: float = 10e-9,
) -> TemporalWaveform:
    """Normalized target waveforms ending at ``t_m2`` (default: grid midpoint).

    exp_rising uses the whole grid before t_m2; square and
    square_pulse_modulated span ``width``; balanced_time_bin places a
    positive then a negative bin of ``bin_width`` separated by ``gap``.
    """
    t = grid.times
    i2 = grid.index(grid.t0 + 0.5 * grid.duration if t_m2 is None else t_m2)
    if not 0 <= i2 < grid.n:
        raise DomainError("t_m2 lies outside the grid")
    tm2 = float(t[i2])
    f = np.zeros(grid.n)

    def block(n_samples: int, end: int) -> slice:
        start = end - n_samples + 1
        if n_samples < 1 or start < 0:
            raise DomainError(f"{name} does not fit on the grid before t_m2")
        return slice(start, end + 1)

    if name == "exp_rising":
        f[: i2 + 1] = np.exp(gamma * (t[: i2 + 1] - tm2))
    elif name == "square":
        f[block(int(round(width / grid.dt)), i2)] = 1.0
    elif name == "square_pulse_modulated":
        sl = block(int(round(width / grid.dt)), i2)
        f[sl] = np.exp(gamma * (t[sl] - tm2))
    elif name == "balanced_time_bin":
        nb, ng = int(round(bin_width / grid.dt)), int(round(gap / grid.dt))
        f[block(nb, i2)] = -1.0
        f[block(nb, i2 - nb - ng)] = 1.0
    else:
        raise DomainError(f"unknown waveform {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    return TemporalWaveform(grid, f).normalize()


def write_csv(path: str | Path, grid: TimeGrid, columns: dict[str, tuple[np.ndarray, str]]) -> Path:
    """Write (t, column...) with a header naming each unit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t [s]"] + [f"{k} [{columns[k][1]}]" for k in names])
        data = [grid.times] + [np.asarray(columns[k][0], dtype=float) for k in names]
        for row in zip(*data):
            w.writerow([f"{v:.12g}" for v in row])
    return path
