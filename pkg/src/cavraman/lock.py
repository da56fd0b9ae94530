"""Discrete-time simulation of a Hansch-Couillaud cavity-length lock.

The controller mirrors a microcontroller implementation: a 12-bit ADC reads
the polarisation error signal, a fast positional PID drives one DAC whose
range spans one signal wavelength of cavity length, and a slow offset on a
second DAC steps whenever the fast output nears the end of its range. The two
DAC outputs are summed before the piezo.

Sign convention: a positive actuator voltage shortens the cavity, so the
residual length error is ``disturbance - actuator_gain * (fast + slow)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import HENE_WAVELENGTH_NM, SIGNAL_WAVELENGTH_NM
from .errors import DomainError

__all__ = [
    "PlantState",
    "ErrorSignalModel",
    "ControllerConfig",
    "ControllerState",
    "LockMetrics",
    "Trajectory",
    "quantize",
    "error_signal",
    "adc_lsb_length",
    "dac_lsb_length",
    "controller_step",
    "reference_config",
    "simulate",
    "write_trajectory_csv",
]


@dataclass(frozen=True)
class PlantState:
    """Cavity-length plant. ``steps`` lists ``(time_s, size_nm)`` length jumps."""

    length_error: float = 0.0
    drift_rate: float = 0.0
    random_walk_sigma: float = 0.0
    actuator_gain: float = 100.0
    actuator_range: float = 150.0
    steps: tuple = ()

    def __post_init__(self):
        if self.actuator_gain == 0:
            raise DomainError("actuator_gain must be non-zero")
        if self.actuator_range <= 0:
            raise DomainError("actuator_range must be positive")
        if self.random_walk_sigma < 0:
            raise DomainError("random_walk_sigma must be non-negative")


@dataclass(frozen=True)
class ErrorSignalModel:
    amplitude: float = 1.0
    period: float = HENE_WAVELENGTH_NM
    noise_sigma: float = 0.0
    adc_bits: int = 12

    def __post_init__(self):
        if self.period <= 0:
            raise DomainError("period must be positive")
        if self.adc_bits < 1:
            raise DomainError("adc_bits must be >= 1")
        if self.amplitude <= 0:
            raise DomainError("amplitude must be positive")
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be non-negative")

    @property
    def lsb(self):
        return 2.0 * self.amplitude / 2**self.adc_bits


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = 0.3
    ki: float = 3000.0
    kd: float = 0.0
    fast_output_range: float = SIGNAL_WAVELENGTH_NM / 100.0
    slow_step: float = 0.5
    handoff_fraction: float = 0.9
    fast_rate: float = 10_000.0
    slow_rate: float = 10.0
    dac_bits: int | None = 12

    def __post_init__(self):
        if not 0 < self.handoff_fraction < 1:
            raise DomainError("handoff_fraction must lie in (0, 1)")
        if self.fast_rate <= 0 or self.slow_rate <= 0:
            raise DomainError("rates must be positive")
        if self.fast_rate <= self.slow_rate:
            raise DomainError("fast_rate must exceed slow_rate")
        if self.fast_output_range <= 0:
            raise DomainError("fast_output_range must be positive")
        if self.slow_step < 0:
            raise DomainError("slow_step must be non-negative")
        if self.dac_bits is not None and self.dac_bits < 1:
            raise DomainError("dac_bits must be >= 1 or None")

    @property
    def slow_every(self):
        """Fast steps per slow tick."""
        return max(1, int(round(self.fast_rate / self.slow_rate)))


def reference_config(plant: PlantState, **overrides) -> ControllerConfig:
    """Tuned reference controller for ``plant``.

    The fast range maps to one signal wavelength of length through the
    actuator gain; gains were tuned for a 1 V error-signal amplitude at 10 kHz.
    """
    gain = abs(plant.actuator_gain)
    params = dict(kp=0.3, ki=3000.0, kd=0.0,
                  fast_output_range=SIGNAL_WAVELENGTH_NM / gain,
                  slow_step=50.0 / gain)
    params.update(overrides)
    return ControllerConfig(**params)


def quantize(value, full_scale, bits):
    """Mid-tread quantiser over ``[-full_scale, full_scale)`` with ``bits`` bits."""
    if bits is None:
        return value
    step = 2.0 * full_scale / 2**bits
    half = 2 ** (bits - 1)
    code = min(max(round(value / step), -half), half - 1)
    return code * step


def error_signal(model: ErrorSignalModel, length_error, rng=None):
    """Digitised error-signal voltage for a given cavity length error (nm)."""
    v = model.amplitude * math.sin(2 * math.pi * length_error / model.period)
    if model.noise_sigma > 0:
        if rng is None:
            raise DomainError("an rng is required when noise_sigma > 0")
        v += rng.normal(0.0, model.noise_sigma)
    return quantize(v, model.amplitude, model.adc_bits)


def adc_lsb_length(model: ErrorSignalModel):
    """One ADC step expressed as length, using the slope at the lock point."""
    return model.lsb / (model.amplitude * 2 * math.pi / model.period)


def dac_lsb_length(config: ControllerConfig, plant: PlantState):
    """Length change of one fast-DAC step (zero for an ideal DAC)."""
    if config.dac_bits is None:
        return 0.0
    return abs(plant.actuator_gain) * config.fast_output_range / 2**config.dac_bits


@dataclass
class ControllerState:
    integral: float = 0.0
    prev_error: float = 0.0
    fast_out: float = 0.0
    slow_out: float = 0.0
    count: int = 0
    slow_increments: int = 0
    range_exhausted: bool = False


def controller_step(config: ControllerConfig, state: ControllerState, error, dt, slow_limit=math.inf):
    """Advance the dual-rate controller by one fast period.

    Returns ``(fast_out, slow_out)`` before DAC quantisation. ``slow_limit``
    is the half-span of the actuator voltage range.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    half = 0.5 * config.fast_output_range
    state.integral += error * dt
    if config.ki:
        limit = half / abs(config.ki)
        state.integral = min(max(state.integral, -limit), limit)
    deriv = (error - state.prev_error) / dt
    state.prev_error = error
    out = config.kp * error + config.ki * state.integral + config.kd * deriv
    state.fast_out = min(max(out, -half), half)

    state.count += 1
    if state.count % config.slow_every == 0 and abs(state.fast_out) >= config.handoff_fraction * half:
        target = state.slow_out + math.copysign(config.slow_step, state.fast_out)
        if abs(target) > slow_limit:
            state.range_exhausted = True
            target = math.copysign(slow_limit, target)
        if target != state.slow_out:
            state.slow_increments += 1
        state.slow_out = target
    return state.fast_out, state.slow_out


@dataclass(frozen=True)
class LockMetrics:
    rms_error: float
    max_error: float
    slow_increments: int
    lock_retained: bool
    retained_steps: int
    range_exhausted: bool = False


@dataclass
class Trajectory:
    t: np.ndarray
    length_error: np.ndarray
    fast: np.ndarray
    slow: np.ndarray
    error_signal: np.ndarray = field(repr=False, default=None)


def _disturbance(plant, steps, dt, rng):
    t = np.arange(steps) * dt
    d = plant.length_error + plant.drift_rate * t
    if plant.random_walk_sigma > 0:
        d = d + np.cumsum(rng.normal(0.0, plant.random_walk_sigma, steps))
    for when, size in plant.steps:
        d[t >= when] += size
    return t, d


def simulate(plant: PlantState, model: ErrorSignalModel, config: ControllerConfig, steps, seed=0,
             settle_steps=None):
    """Run the closed loop for ``steps`` fast periods.

    Metrics are taken after ``settle_steps`` (default: a tenth of the run, at
    most 1000). Lock is lost once the length error leaves the capture range
    of the error signal (a quarter period) or the slow range runs out.
    """
    steps = int(steps)
    if steps <= 0:
        raise DomainError("steps must be positive")
    dt = 1.0 / config.fast_rate
    rng = np.random.default_rng(seed)
    t, dist = _disturbance(plant, steps, dt, rng)
    noise = rng.normal(0.0, model.noise_sigma, steps) if model.noise_sigma > 0 else np.zeros(steps)

    gain = plant.actuator_gain
    slow_half = 0.5 * plant.actuator_range
    fast_half = 0.5 * config.fast_output_range
    bits = config.dac_bits
    k_phase = 2 * math.pi / model.period
    amp, adc_bits = model.amplitude, model.adc_bits
    capture = 0.25 * model.period

    state = ControllerState()
    length = np.empty(steps)
    fast_log = np.empty(steps)
    slow_log = np.empty(steps)
    err_log = np.empty(steps)
    fq = sq = 0.0
    lost_at = None
    dist_l = dist.tolist()
    noise_l = noise.tolist()
    for k in range(steps):
        x = dist_l[k] - gain * (fq + sq)
        length[k] = x
        fast_log[k] = fq
        slow_log[k] = sq
        v = quantize(amp * math.sin(k_phase * x) + noise_l[k], amp, adc_bits)
        err_log[k] = v
        if lost_at is None and (abs(x) >= capture or state.range_exhausted):
            lost_at = k
        fast, slow = controller_step(config, state, v, dt, slow_half)
        fq = quantize(fast, fast_half, bits)
        sq = quantize(slow, slow_half, bits)

    settle = min(steps // 10, 1000) if settle_steps is None else int(settle_steps)
    window = np.abs(length[settle:]) if settle < steps else np.abs(length[-1:])
    metrics = LockMetrics(
        rms_error=float(np.sqrt(np.mean(window**2))),
        max_error=float(window.max()),
        slow_increments=state.slow_increments,
        lock_retained=lost_at is None,
        retained_steps=steps if lost_at is None else lost_at,
        range_exhausted=state.range_exhausted,
    )
    return Trajectory(t, length, fast_log, slow_log, err_log), metrics


def write_trajectory_csv(traj: Trajectory, stream=None, every=1):
    own = stream is None
    stream = io.StringIO() if own else stream
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["t_s", "length_error_nm", "fast_v", "slow_v", "error_signal_v"])
    for k in range(0, len(traj.t), every):
        writer.writerow([f"{traj.t[k]:.9g}", f"{traj.length_error[k]:.9g}", f"{traj.fast[k]:.9g}",
                         f"{traj.slow[k]:.9g}", f"{traj.error_signal[k]:.9g}"])
    return stream.getvalue() if own else None
