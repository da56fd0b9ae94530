"""Run configuration: a YAML document with units embedded in key names.

Unknown keys are rejected. After schema validation every section is turned
into its domain object, so physical invariants are checked at load time.
"""

from __future__ import annotations

import hashlib
import json
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .analysis.fitting import MonteCarloConfig
from .analysis.synth import DEFAULT_AMPLITUDES, DEFAULT_ENERGIES, DEFAULT_STORAGE_TIMES, StreamTruth
from .constants import CS_HYPERFINE_GHZ, MEASURED, REFERENCE
from .errors import DomainError
from .lock import ControllerConfig, ErrorSignalModel, PlantState, reference_config
from .physics import AtomicEnsemble, CavityOptics, ControlPulse, MemoryModel, fsr_design
from .physics import suppression_from_losses, suppression_from_visibility, validate_energy_grid
from .spectrum import BirefringentCavity, SusceptibilityModel

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "config_hash", "dump_config"]


class ConfigError(ValueError):
    """Schema or physical validation failure of a run configuration."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AtomsSection(_Section):
    hyperfine_ghz: float = CS_HYPERFINE_GHZ
    optical_depth: float = REFERENCE["optical_depth"]
    linewidth_ghz: float = REFERENCE["linewidth_ghz"]
    doppler_fwhm_ghz: float = REFERENCE["doppler_fwhm_ghz"]
    pressure_fwhm_ghz: float = REFERENCE["pressure_fwhm_ghz"]
    spin_polarization: float = REFERENCE["spin_polarization"]


class PulseSection(_Section):
    energy_nj: float = 1.5
    bandwidth_ghz: float = REFERENCE["bandwidth_ghz"]
    detuning_ghz: float = REFERENCE["signal_detuning_ghz"]
    w_per_nj_ghz: float = REFERENCE["w_per_nj_ghz"]


class CavitySection(_Section):
    r1: float = REFERENCE["reflectivity"]
    r2: float = REFERENCE["reflectivity"]
    loss_signal: float = REFERENCE["loss_signal"]
    loss_antistokes: float = REFERENCE["loss_antistokes"]
    loss_control: float = REFERENCE["loss_control"]
    visibility: float = REFERENCE["visibility"]
    order: int = 2
    roundtrip_length_mm: float | None = None
    finesse_signal: float = REFERENCE["finesse_signal"]
    finesse_control: float = REFERENCE["finesse_control"]
    design_orders: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])


class EnergyGrid(_Section):
    start_nj: float = 1e-4
    stop_nj: float = 3.0
    points: int = 400
    spacing: Literal["log", "linear"] = "log"


class ModelSection(_Section):
    effective_depth: Literal["cavity", "free_space"] = "cavity"
    linewidth_convention: Literal["fwhm", "hwhm"] = "fwhm"
    suppression_route: Literal["losses", "visibility"] = "losses"
    energy_grid: EnergyGrid = EnergyGrid()
    energies_nj: list[float] | None = None


class MetricsSection(_Section):
    lifetime_ns: float = REFERENCE["lifetime_ns"]
    noise_floor: float = MEASURED["noise_floor"][0]
    efficiency: float = MEASURED["efficiency"][0]


class SpectrumSection(_Section):
    grid_start_ghz: float = -5.0
    grid_stop_ghz: float = 32.0
    points: int = 4096
    probe_fwhm_ghz: float = 1.2
    empty_cavity: bool = False
    passive_loss_signal: float = 0.0
    passive_loss_control: float = 0.0
    birefringent_phase_rad: float = 0.0
    length_offset_nm: float = 0.0
    calibrate: bool = True
    target_visibility_signal: float = MEASURED["visibility_signal"][0]
    target_visibility_control: float = MEASURED["visibility_control"][0]


class ResonanceSection(_Section):
    grid_length: int = 256
    grid_phase: int = 256
    refine: bool = True
    dense_check_points: int = 1024


class PlantSection(_Section):
    length_error_nm: float = 0.0
    drift_rate_nm_per_s: float = 0.0
    random_walk_sigma_nm: float = 0.0
    actuator_gain_nm_per_v: float = 100.0
    actuator_range_v: float = 150.0
    steps: list[tuple[float, float]] = Field(default_factory=list)


class ErrorSignalSection(_Section):
    amplitude_v: float = 1.0
    period_nm: float = 632.8
    noise_sigma_v: float = 0.0
    adc_bits: int = 12


class ControllerSection(_Section):
    kp: float = 0.3
    ki_per_s: float = 3000.0
    kd_s: float = 0.0
    fast_rate_hz: float = 10_000.0
    slow_rate_hz: float = 10.0
    handoff_fraction: float = 0.9
    dac_bits: int | None = 12
    fast_output_range_v: float | None = None
    slow_step_v: float | None = None


class LockSection(_Section):
    plant: PlantSection = PlantSection()
    error_signal: ErrorSignalSection = ErrorSignalSection()
    controller: ControllerSection = ControllerSection()
    steps: int = 20_000
    settle_steps: int | None = None
    csv_every: int = 1


class StreamSection(_Section):
    efficiency: float = 0.095
    noise: float = 0.015
    mean_photons: float = 0.7
    transmitted_fraction: float = 0.6
    leakage: float = 0.002
    detection_efficiency: float = 0.012
    n_triggers: int = 2_000_000
    read_in_ps: int = 5000
    separation_ps: int = 12_500
    jitter_ps: float = 300.0


class CoherentSection(_Section):
    mu1: float = MEASURED["mu1"][0]
    efficiency: float = MEASURED["efficiency"][0]
    mean_photons: list[float] = Field(default_factory=lambda: list(DEFAULT_AMPLITUDES))
    n_triggers: int = 700_000
    detection_efficiency: float = 0.012


class NoiseSynthSection(_Section):
    constant: float = 0.004
    linear_per_nj: float = 0.002
    quadratic_per_nj2: float = 0.006 / 1.5**2
    energies_nj: list[float] = Field(default_factory=lambda: list(DEFAULT_ENERGIES))
    n_triggers: int = 2_000_000
    detection_efficiency: float = 0.012


class LifetimeSynthSection(_Section):
    lifetime_ns: float = MEASURED["lifetime_ns"][0]
    amplitude: float = 800.0
    storage_times_ns: list[float] = Field(default_factory=lambda: list(DEFAULT_STORAGE_TIMES))


class SynthSection(_Section):
    stream: StreamSection = StreamSection()
    coherent: CoherentSection = CoherentSection()
    noise: NoiseSynthSection = NoiseSynthSection()
    lifetime: LifetimeSynthSection = LifetimeSynthSection()


class AnalysisSection(_Section):
    data_dir: str | None = None
    bin_width_ps: int = 81
    read_in_window_ps: tuple[int, int] = (3000, 7000)
    read_out_window_ps: tuple[int, int] = (15_500, 19_500)
    energy_eval_nj: float = 1.5
    n_mc: int = 2000
    block_size: int = 1000


class RunConfig(_Section):
    seed: int = 0
    atoms: AtomsSection = AtomsSection()
    pulse: PulseSection = PulseSection()
    cavity: CavitySection = CavitySection()
    model: ModelSection = ModelSection()
    metrics: MetricsSection = MetricsSection()
    spectrum: SpectrumSection = SpectrumSection()
    resonance: ResonanceSection = ResonanceSection()
    lock: LockSection = LockSection()
    synth: SynthSection = SynthSection()
    analysis: AnalysisSection = AnalysisSection()

    # Domain objects. Building them re-checks the physical invariants.

    def atomic_ensemble(self) -> AtomicEnsemble:
        a = self.atoms
        return AtomicEnsemble(a.hyperfine_ghz, a.optical_depth, a.linewidth_ghz, a.doppler_fwhm_ghz,
                              a.pressure_fwhm_ghz, a.spin_polarization)

    def control_pulse(self) -> ControlPulse:
        p = self.pulse
        return ControlPulse(p.energy_nj, p.bandwidth_ghz, p.detuning_ghz, p.w_per_nj_ghz)

    def cavity_length(self) -> float:
        c = self.cavity
        if c.roundtrip_length_mm is not None:
            return c.roundtrip_length_mm
        return fsr_design(self.atoms.hyperfine_ghz, c.order)[1]

    def cavity_optics(self) -> CavityOptics:
        c = self.cavity
        return CavityOptics(c.r1, c.r2, c.loss_signal, c.loss_antistokes, c.loss_control,
                            self.cavity_length(), c.order, c.finesse_signal, c.finesse_control)

    def suppression(self) -> float:
        if self.model.suppression_route == "visibility":
            return suppression_from_visibility(self.cavity.visibility)
        return suppression_from_losses(self.cavity.loss_signal, self.cavity.loss_antistokes)

    def memory_model(self, **overrides) -> MemoryModel:
        params = dict(atoms=self.atomic_ensemble(), optics=self.cavity_optics(), pulse=self.control_pulse(),
                      effective_depth=self.model.effective_depth,
                      linewidth_convention=self.model.linewidth_convention, suppression=self.suppression())
        params.update(overrides)
        return MemoryModel(**params)

    def energies(self) -> np.ndarray:
        if self.model.energies_nj is not None:
            return np.asarray(self.model.energies_nj, dtype=float)
        g = self.model.energy_grid
        if g.points < 1:
            raise DomainError("energy_grid.points must be >= 1")
        if g.spacing == "log":
            if g.start_nj <= 0:
                raise DomainError("log-spaced energy grid needs start_nj > 0")
            return np.geomspace(g.start_nj, g.stop_nj, g.points)
        return np.linspace(g.start_nj, g.stop_nj, g.points)

    def frequencies(self) -> tuple[float, float, float]:
        """Signal, control and anti-Stokes offsets from the F=4 line (GHz)."""
        nu_s = self.pulse.detuning_ghz
        hf = self.atoms.hyperfine_ghz
        return nu_s, nu_s + hf, nu_s + 2 * hf

    def susceptibility_model(self) -> SusceptibilityModel:
        if self.spectrum.empty_cavity:
            return SusceptibilityModel.empty()
        a = self.atoms
        return SusceptibilityModel(lines=((0.0, a.spin_polarization), (a.hyperfine_ghz, 1 - a.spin_polarization)),
                                   doppler_fwhm=a.doppler_fwhm_ghz, homogeneous_fwhm=a.pressure_fwhm_ghz,
                                   peak_optical_depth=a.optical_depth)

    def birefringent_cavity(self) -> BirefringentCavity:
        s = self.spectrum
        return BirefringentCavity(self.cavity.r1, self.cavity.r2,
                                  {"signal": s.passive_loss_signal, "control": s.passive_loss_control},
                                  self.cavity_length(), s.birefringent_phase_rad, s.length_offset_nm)

    def spectrum_grid(self) -> np.ndarray:
        s = self.spectrum
        if s.points < 3 or s.grid_stop_ghz <= s.grid_start_ghz:
            raise DomainError("spectrum grid needs >= 3 points and stop > start")
        return np.linspace(s.grid_start_ghz, s.grid_stop_ghz, s.points)

    def lock_objects(self) -> tuple[PlantState, ErrorSignalModel, ControllerConfig]:
        p, e, c = self.lock.plant, self.lock.error_signal, self.lock.controller
        plant = PlantState(p.length_error_nm, p.drift_rate_nm_per_s, p.random_walk_sigma_nm,
                           p.actuator_gain_nm_per_v, p.actuator_range_v, tuple(tuple(s) for s in p.steps))
        model = ErrorSignalModel(e.amplitude_v, e.period_nm, e.noise_sigma_v, e.adc_bits)
        overrides = dict(kp=c.kp, ki=c.ki_per_s, kd=c.kd_s, fast_rate=c.fast_rate_hz, slow_rate=c.slow_rate_hz,
                         handoff_fraction=c.handoff_fraction, dac_bits=c.dac_bits)
        if c.fast_output_range_v is not None:
            overrides["fast_output_range"] = c.fast_output_range_v
        if c.slow_step_v is not None:
            overrides["slow_step"] = c.slow_step_v
        if self.lock.steps < 1 or self.lock.csv_every < 1:
            raise DomainError("lock.steps and lock.csv_every must be >= 1")
        return plant, model, reference_config(plant, **overrides)

    def stream_truth(self) -> StreamTruth:
        return StreamTruth(**self.synth.stream.model_dump())

    def monte_carlo(self) -> MonteCarloConfig:
        return MonteCarloConfig(n_samples=self.analysis.n_mc, seed=self.seed, block_size=self.analysis.block_size)

    def validate_physics(self) -> None:
        self.memory_model()
        validate_energy_grid(self.energies())
        self.birefringent_cavity()
        self.susceptibility_model()
        self.spectrum_grid()
        self.lock_objects()
        self.stream_truth()
        self.monte_carlo()
        for w in (self.analysis.read_in_window_ps, self.analysis.read_out_window_ps):
            if w[1] <= w[0]:
                raise DomainError(f"analysis window {w} must have positive width")
        if self.analysis.bin_width_ps <= 0:
            raise DomainError("analysis.bin_width_ps must be positive")


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(data: dict | None, seed: int | None = None) -> RunConfig:
    """Validate a config mapping; ``seed`` overrides the document's seed."""
    data = dict(data or {})
    if seed is not None:
        data["seed"] = seed
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
    try:
        cfg.validate_physics()
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path=None, seed: int | None = None) -> RunConfig:
    """Read a YAML config; ``path=None`` gives the reference configuration."""
    if path is None:
        return parse_config({}, seed)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    return parse_config(data, seed)


def _canonical(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the fully-defaulted config."""
    return hashlib.sha256(_canonical(cfg).encode()).hexdigest()


def dump_config(cfg: RunConfig) -> str:
    """YAML text that reloads to an identical config (and hash)."""
    return yaml.safe_dump(json.loads(_canonical(cfg)), sort_keys=True)
