"""Experiment configuration: YAML files validated into typed models.

Physical quantities carry their unit in the key name (``_db``, ``_hz``,
``_s``, ``_v``, ``_deg``). ``gamma_hz`` is the cavity half-width gamma/2pi.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from heraldlab.errors import ConfigError

# squeezing and splitting (r0 dB, r1 dB, T) used for each preset state
PRESET_RESOURCES = {
    "single_photon": (3.0, -3.0, 0.50),
    "cat": (5.0, -1.0, 0.14),
    "two_photon": (4.0, -4.0, 0.50),
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StateConfig(_Strict):
    type: Literal["single_photon", "cat", "two_photon", "custom"] = "single_photon"
    coefficients_real: list[float] | None = None
    coefficients_imag: list[float] | None = None
    r_out: float | None = Field(default=None, ge=-1.5, le=1.5)

    @model_validator(mode="after")
    def _custom_needs_target(self):
        if self.type == "custom":
            if not self.coefficients_real:
                raise ValueError("custom state needs coefficients_real")
            if self.coefficients_imag is not None and len(self.coefficients_imag) != len(self.coefficients_real):
                raise ValueError("coefficients_imag must match coefficients_real in length")
        elif self.coefficients_real is not None or self.coefficients_imag is not None:
            raise ValueError(f"preset state {self.type!r} takes no coefficients")
        return self


class ResourceConfig(_Strict):
    r0_db: float = Field(ge=-17.0, le=17.0)
    r1_db: float = Field(ge=-17.0, le=17.0)
    T: float = Field(ge=0.0, le=1.0)


class PlannerConfig(_Strict):
    strategy: Literal["symmetric", "max_prob", "fixed"] | None = None
    cutoff_sim: int = Field(default=30, ge=8, le=80)


class WaveformConfig(_Strict):
    name: Literal["exp_rising", "square", "square_pulse_modulated", "balanced_time_bin"] = "square_pulse_modulated"
    samples: list[float] | None = None
    width_s: float = Field(default=100e-9, gt=0)
    bin_width_s: float = Field(default=30e-9, gt=0)
    gap_s: float = Field(default=10e-9, ge=0)
    gamma_hz: float = Field(default=2.9e6, gt=0)
    t_m2_s: float = Field(default=1.0e-6, gt=0)
    dt_s: float = Field(default=0.32e-9, gt=0)
    frame_duration_s: float = Field(default=2.0e-6, gt=0)
    v0_v: float = Field(default=0.5, gt=0)
    v_max_v: float = Field(default=0.4, gt=0)

    @model_validator(mode="after")
    def _inside_frame(self):
        if self.t_m2_s >= self.frame_duration_s:
            raise ValueError("t_m2_s must fall inside the frame")
        if self.samples is not None and len(self.samples) != round(self.frame_duration_s / self.dt_s):
            raise ValueError("waveform samples must cover the frame grid")
        return self

    @property
    def gamma(self) -> float:
        return 2 * math.pi * self.gamma_hz


class SequenceConfig(_Strict):
    tau_rep_s: float = Field(default=200e-9, gt=0)
    n_rep: int = Field(default=1200, ge=1)
    dark_rate_hz: float = Field(default=100.0, ge=0)
    snr_min: float = Field(default=10.0, ge=0)
    peak_rate_hz: float = Field(default=1.0e4, gt=0)


class MeasurementConfig(_Strict):
    phases_deg: list[float] = Field(default_factory=lambda: [15.0 * k for k in range(12)])
    frames_per_phase: int = Field(default=5000, ge=1)
    eta: float = Field(default=0.67, ge=0.0, le=1.0)
    seed: int = Field(default=20240601, ge=0)
    cutoff_tomo: int = Field(default=10, ge=1, le=30)
    electronics_noise: float = Field(default=0.0, ge=0.0)
    lowpass_hz: float | None = Field(default=None, gt=0)
    pca_noise_dim: int = Field(default=48, ge=0)
    vacuum_frames: int = Field(default=6000, ge=2)
    mle_max_iter: int = Field(default=5000, ge=1)
    mle_tol: float = Field(default=1e-8, gt=0)

    @field_validator("phases_deg")
    @classmethod
    def _phases(cls, v):
        if not v or any(b <= a for a, b in zip(v, v[1:])) or v[0] < 0 or v[-1] >= 180:
            raise ValueError("phases_deg must increase strictly within [0, 180)")
        return v


class ThresholdConfig(_Strict):
    min_plan_fidelity: float = Field(default=0.999, ge=0, le=1)
    min_pc1_overlap: float = Field(default=0.99, ge=0, le=1)
    max_wigner_min: float | None = None
    min_tomo_fidelity: float | None = Field(default=None, ge=0, le=1)


class ExperimentConfig(_Strict):
    state: StateConfig = Field(default_factory=StateConfig)
    resource: ResourceConfig | None = None
    planner: PlannerConfig = Field(default_factory=PlannerConfig)
    waveform: WaveformConfig = Field(default_factory=WaveformConfig)
    sequence: SequenceConfig = Field(default_factory=SequenceConfig)
    measurement: MeasurementConfig = Field(default_factory=MeasurementConfig)
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)

    def resolved_resource(self) -> ResourceConfig | None:
        if self.resource is not None:
            return self.resource
        row = PRESET_RESOURCES.get(self.state.type)
        return None if row is None else ResourceConfig(r0_db=row[0], r1_db=row[1], T=row[2])

    def with_overrides(self, seed: int | None = None, frames: int | None = None) -> ExperimentConfig:
        meas = {}
        if seed is not None:
            meas["seed"] = seed
        if frames is not None:
            meas["frames_per_phase"] = frames
        if not meas:
            return self
        data = self.model_dump()
        data["measurement"].update(meas)
        return parse_config(data)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def parse_config(data) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
