"""Closed-form forward model of a cavity-enhanced Raman memory.

Frequencies are in GHz, times in ns, pulse energies in nJ and lengths in mm.
The control-pulse "area" ``W = k_W * energy`` carries GHz units, so that
``W / detuning`` is a dimensionless AC-Stark phase.

The round-trip amplitude losses ``mu_s, mu_a, mu_c`` enter the model only
through the combinations ``1 - mu`` (resonant build-up) and ``1 + mu``
(anti-resonant build-up); the anti-Stokes to Stokes amplitude ratio is the
suppression factor ``x``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .constants import CS_HYPERFINE_GHZ, REFERENCE, SPEED_OF_LIGHT_MM_GHZ
from .errors import DomainError, NumericError

__all__ = [
    "AtomicEnsemble",
    "ControlPulse",
    "CavityOptics",
    "Couplings",
    "MemoryResponse",
    "MemoryMetrics",
    "MemoryModel",
    "SweepPoint",
    "SERIES_THRESHOLD",
    "stokes_coupling",
    "anti_stokes_coupling",
    "suppression_from_losses",
    "suppression_from_visibility",
    "fsr_design",
    "cooperativity",
    "energy_reduction",
    "signal_transmission",
    "build_couplings",
    "memory_response",
    "efficiency_energy_sweep",
    "validate_energy_grid",
    "interior_maxima",
    "metrics",
    "effective_linewidth",
]

SERIES_THRESHOLD = 1e-4
LINEWIDTH_CONVENTIONS = ("fwhm", "hwhm")
EFFECTIVE_DEPTHS = ("cavity", "free_space")


def _check_finite(**values):
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise DomainError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class AtomicEnsemble:
    hyperfine_splitting: float = CS_HYPERFINE_GHZ
    optical_depth: float = REFERENCE["optical_depth"]
    linewidth: float = REFERENCE["linewidth_ghz"]
    doppler_fwhm: float = REFERENCE["doppler_fwhm_ghz"]
    pressure_fwhm: float = REFERENCE["pressure_fwhm_ghz"]
    spin_polarization: float = REFERENCE["spin_polarization"]

    def __post_init__(self):
        _check_finite(**self.__dict__)
        for name in ("hyperfine_splitting", "linewidth", "doppler_fwhm", "pressure_fwhm"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.optical_depth < 0:
            raise DomainError("optical_depth must be non-negative")
        if not 0 <= self.spin_polarization <= 1:
            raise DomainError("spin_polarization must lie in [0, 1]")


@dataclass(frozen=True)
class ControlPulse:
    """Control pulse; ``w_per_nj`` converts energy to the pulse area W."""

    energy: float = 1.5
    bandwidth: float = REFERENCE["bandwidth_ghz"]
    detuning: float = REFERENCE["signal_detuning_ghz"]
    w_per_nj: float = REFERENCE["w_per_nj_ghz"]

    def __post_init__(self):
        _check_finite(**self.__dict__)
        if self.energy < 0:
            raise DomainError("pulse energy must be non-negative")
        if self.detuning <= 0:
            raise DomainError("detuning must be positive (on-resonance operation is not modeled)")
        if self.w_per_nj <= 0:
            raise DomainError("w_per_nj must be positive")
        if self.bandwidth < 0:
            raise DomainError("bandwidth must be non-negative")

    @property
    def area(self) -> float:
        """Pulse area W in GHz."""
        return self.w_per_nj * self.energy


def fsr_design(hyperfine_splitting, order):
    """Free spectral range and round-trip length of an order-``m`` cavity.

    Places the Stokes field on a resonance and the anti-Stokes field,
    ``2 * hyperfine_splitting`` away, exactly half-way between resonances.

    Returns
    -------
    (fsr_ghz, length_mm)
    """
    if isinstance(order, bool) or int(order) != order:
        raise DomainError("cavity order must be an integer")
    if order < 0:
        raise DomainError("cavity order must be non-negative")
    if not hyperfine_splitting > 0:
        raise DomainError("hyperfine splitting must be positive")
    fsr = 4.0 * hyperfine_splitting / (2 * int(order) + 1)
    return fsr, SPEED_OF_LIGHT_MM_GHZ / fsr


@dataclass(frozen=True)
class CavityOptics:
    r1: float = REFERENCE["reflectivity"]
    r2: float = REFERENCE["reflectivity"]
    loss_signal: float = REFERENCE["loss_signal"]
    loss_antistokes: float = REFERENCE["loss_antistokes"]
    loss_control: float = REFERENCE["loss_control"]
    roundtrip_length: float = field(default_factory=lambda: fsr_design(CS_HYPERFINE_GHZ, 2)[1])
    order: int = 2
    finesse_signal: float = REFERENCE["finesse_signal"]
    finesse_control: float = REFERENCE["finesse_control"]

    def __post_init__(self):
        _check_finite(**self.__dict__)
        for name in ("r1", "r2"):
            if not 0 <= getattr(self, name) <= 1:
                raise DomainError(f"{name} must lie in [0, 1]")
        for name in ("loss_signal", "loss_antistokes", "loss_control"):
            if not 0 <= getattr(self, name) < 1:
                raise DomainError(f"{name} must lie in [0, 1)")
        if self.roundtrip_length <= 0:
            raise DomainError("roundtrip_length must be positive")
        if self.order < 0:
            raise DomainError("order must be non-negative")
        if self.finesse_signal <= 0 or self.finesse_control <= 0:
            raise DomainError("finesse must be positive")

    @property
    def fsr(self) -> float:
        return SPEED_OF_LIGHT_MM_GHZ / self.roundtrip_length

    @property
    def reflectivity(self) -> float:
        """Common mirror reflectivity; the model requires r1 == r2."""
        if abs(self.r1 - self.r2) > 1e-6:
            raise DomainError(f"model assumes r1 == r2, got r1={self.r1}, r2={self.r2}")
        return 0.5 * (self.r1 + self.r2)

    @classmethod
    def designed(cls, hyperfine_splitting=CS_HYPERFINE_GHZ, order=2, **kwargs):
        _, length = fsr_design(hyperfine_splitting, order)
        return cls(roundtrip_length=length, order=order, **kwargs)


@dataclass(frozen=True)
class Couplings:
    stokes: float
    antistokes: float
    antistokes_detuning: float
    suppression: float
    cooperativity: float

    def __post_init__(self):
        _check_finite(**self.__dict__)
        if self.stokes < 0 or self.antistokes < 0 or self.cooperativity < 0:
            raise DomainError("couplings and cooperativity must be non-negative")
        if not 0 <= self.suppression <= 1:
            raise DomainError("suppression factor must lie in [0, 1]")


@dataclass(frozen=True)
class MemoryResponse:
    f: complex
    zeta: float
    gain_integral: float
    kappa: complex
    chi: float
    eta_tot: float
    n_noise: float


@dataclass(frozen=True)
class MemoryMetrics:
    lifetime: float
    time_bandwidth: float
    mu1: float


def effective_linewidth(linewidth, convention="fwhm"):
    if convention == "fwhm":
        return linewidth
    if convention == "hwhm":
        return 0.5 * linewidth
    raise DomainError(f"unknown linewidth convention {convention!r}; expected one of {LINEWIDTH_CONVENTIONS}")


def stokes_coupling(pulse: ControlPulse, atoms: AtomicEnsemble, effective_depth: float,
                    linewidth_convention: str = "fwhm") -> float:
    """Stokes coupling ``sqrt(W * d_eff * gamma) / detuning``.

    ``effective_depth`` is the free-space optical depth or the cavity
    cooperativity; the choice is deliberately left to the caller.
    """
    _check_finite(effective_depth=effective_depth)
    if effective_depth < 0:
        raise DomainError("effective depth must be non-negative")
    gamma = effective_linewidth(atoms.linewidth, linewidth_convention)
    return math.sqrt(pulse.area * effective_depth * gamma) / pulse.detuning


def anti_stokes_coupling(stokes, detuning, hyperfine_splitting):
    """Return ``(antistokes_detuning, antistokes_coupling)``."""
    _check_finite(stokes=stokes, detuning=detuning, hyperfine_splitting=hyperfine_splitting)
    if detuning <= 0:
        raise DomainError("Stokes detuning must be positive")
    if hyperfine_splitting < 0:
        raise DomainError("hyperfine splitting must be non-negative")
    if stokes < 0:
        raise DomainError("Stokes coupling must be non-negative")
    detuning_as = detuning + hyperfine_splitting
    return detuning_as, stokes * detuning / detuning_as


def suppression_from_losses(loss_signal, loss_antistokes):
    """Anti-Stokes/Stokes intra-cavity amplitude ratio ``(1-mu_s)/(1+mu_a)``."""
    _check_finite(loss_signal=loss_signal, loss_antistokes=loss_antistokes)
    if not (0 <= loss_signal <= 1 and 0 <= loss_antistokes <= 1):
        raise DomainError("round-trip losses must lie in [0, 1]")
    return (1.0 - loss_signal) / (1.0 + loss_antistokes)


def suppression_from_visibility(visibility):
    """Suppression factor inferred from fringe visibility: x^2 = (1-V)/(1+V)."""
    _check_finite(visibility=visibility)
    if not 0 <= visibility <= 1:
        raise DomainError(f"visibility must lie in [0, 1], got {visibility}")
    return math.sqrt((1.0 - visibility) / (1.0 + visibility))


def cooperativity(reflectivity, optical_depth, loss_signal):
    """Cavity cooperativity ``r d / (1 - mu_s)``, which replaces d inside the cavity."""
    _check_finite(reflectivity=reflectivity, optical_depth=optical_depth, loss_signal=loss_signal)
    if not 0 <= reflectivity <= 1:
        raise DomainError("reflectivity must lie in [0, 1]")
    if not 0 <= loss_signal < 1:
        raise DomainError("loss_signal must lie in [0, 1)")
    if optical_depth < 0:
        raise DomainError("optical depth must be non-negative")
    return reflectivity * optical_depth / (1.0 - loss_signal)


def energy_reduction(finesse_signal, finesse_control):
    """Control-energy reduction relative to free space, ``F_s^2 F_c^2 / pi^4``."""
    _check_finite(finesse_signal=finesse_signal, finesse_control=finesse_control)
    if finesse_signal <= 0 or finesse_control <= 0:
        raise DomainError("finesse must be positive")
    return (finesse_signal * finesse_control) ** 2 / math.pi**4


def signal_transmission(reflectivity, loss_signal):
    """Resonant amplitude transmission ``(1 - r^2) / (1 - mu_s)``."""
    if not 0 <= loss_signal < 1:
        raise DomainError("loss_signal must lie in [0, 1)")
    return (1.0 - reflectivity**2) / (1.0 - loss_signal)


def build_couplings(pulse: ControlPulse, atoms: AtomicEnsemble, optics: CavityOptics, *,
                    effective_depth: str = "cavity", suppression: float | None = None,
                    linewidth_convention: str = "fwhm") -> Couplings:
    """Assemble :class:`Couplings` for one operating point.

    ``effective_depth`` selects ``"cavity"`` (cooperativity) or
    ``"free_space"`` (bare optical depth). ``suppression`` defaults to the
    loss-based value.
    """
    coop = cooperativity(optics.reflectivity, atoms.optical_depth, optics.loss_signal)
    if effective_depth == "cavity":
        depth = coop
    elif effective_depth == "free_space":
        depth = atoms.optical_depth
    else:
        raise DomainError(f"effective_depth must be one of {EFFECTIVE_DEPTHS}, got {effective_depth!r}")
    if suppression is None:
        suppression = suppression_from_losses(optics.loss_signal, optics.loss_antistokes)
    c_s = stokes_coupling(pulse, atoms, depth, linewidth_convention)
    delta_a, c_a = anti_stokes_coupling(c_s, pulse.detuning, atoms.hyperfine_splitting)
    return Couplings(stokes=c_s, antistokes=c_a, antistokes_detuning=delta_a,
                     suppression=suppression, cooperativity=coop)


# Removable singularities. Each helper switches to a third-order series
# below SERIES_THRESHOLD; `direct=True` forces the closed form (for tests).

def one_minus_exp_ratio(z, direct=False):
    """``(1 - exp(-z)) / z`` for complex or real z."""
    if z == 0 or (not direct and abs(z) < SERIES_THRESHOLD):
        return 1 - z / 2 + z * z / 6 - z**3 / 24
    if isinstance(z, complex):
        return -_expm1c(-z) / z
    return -math.expm1(-z) / z


def _expm1c(z):
    # cmath has no expm1; numpy's complex expm1 keeps small-|z| accuracy
    return complex(np.expm1(complex(z)))


def noise_kernel(zeta, direct=False):
    """``(1 - exp(-zeta) * E(zeta)) / zeta`` with ``E = (1 - exp(-zeta)) / zeta``."""
    if zeta == 0 or (not direct and abs(zeta) < SERIES_THRESHOLD):
        return 1.5 - 7.0 / 6.0 * zeta + 0.625 * zeta**2 - 31.0 / 120.0 * zeta**3
    e = one_minus_exp_ratio(zeta, direct=True)
    return (1.0 - math.exp(-zeta) * e) / zeta


def overlap(f, direct=False):
    """Input overlap ``kappa = (exp(zeta) E)^(-1/2) (1 - exp(-f)) / f``.

    Evaluated as ``E^(-1/2) (exp(-zeta/2) - exp(-i Im f)) / f`` away from
    f = 0, which never forms exp(zeta) and so cannot overflow.
    """
    zeta = -2.0 * f.real
    e = one_minus_exp_ratio(zeta, direct=direct)
    if f == 0 or (not direct and abs(f) < SERIES_THRESHOLD):
        return one_minus_exp_ratio(f) / math.sqrt(math.exp(zeta) * e)
    return (math.exp(-0.5 * zeta) - cmath.exp(-1j * f.imag)) / (f * math.sqrt(e))


def memory_response(couplings: Couplings, pulse: ControlPulse, optics: CavityOptics) -> MemoryResponse:
    """Efficiency and noise floor of the memory at one operating point."""
    c_s, c_a, x = couplings.stokes, couplings.antistokes, couplings.suppression
    w = pulse.area
    f = complex(-c_s**2 - c_a**2 * x, w / pulse.detuning + w / couplings.antistokes_detuning)
    zeta = -2.0 * f.real
    gain = one_minus_exp_ratio(zeta)
    kappa = overlap(f)
    chi = signal_transmission(optics.reflectivity, optics.loss_signal)
    for symbol, value in (("f", f), ("zeta", zeta), ("gain_integral", gain), ("kappa", kappa), ("chi", chi)):
        if not cmath.isfinite(value):
            raise NumericError(symbol, value)
    eta = abs(chi * c_s * gain * kappa) ** 2
    n_noise = abs(chi * c_s * c_a * x) ** 2 * noise_kernel(zeta)
    for symbol, value in (("eta_tot", eta), ("n_noise", n_noise)):
        if not math.isfinite(value):
            raise NumericError(symbol, value)
    return MemoryResponse(f=f, zeta=zeta, gain_integral=gain, kappa=kappa, chi=chi,
                          eta_tot=eta, n_noise=n_noise)


@dataclass(frozen=True)
class MemoryModel:
    """Everything needed to evaluate the memory at a given pulse energy."""

    atoms: AtomicEnsemble = field(default_factory=AtomicEnsemble)
    optics: CavityOptics = field(default_factory=CavityOptics)
    pulse: ControlPulse = field(default_factory=ControlPulse)
    effective_depth: str = "cavity"
    linewidth_convention: str = "fwhm"
    suppression: float | None = None

    def couplings(self, energy: float) -> Couplings:
        return build_couplings(replace(self.pulse, energy=energy), self.atoms, self.optics,
                               effective_depth=self.effective_depth, suppression=self.suppression,
                               linewidth_convention=self.linewidth_convention)

    def response(self, energy: float) -> MemoryResponse:
        pulse = replace(self.pulse, energy=energy)
        return memory_response(self.couplings(energy), pulse, self.optics)


class SweepPoint(NamedTuple):
    energy: float
    eta_tot: float
    n_noise: float


def validate_energy_grid(energies: Sequence[float]) -> np.ndarray:
    grid = np.asarray(energies, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("energy grid must be a non-empty 1-D sequence")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise DomainError("energies must be finite and non-negative")
    if np.any(np.diff(grid) <= 0):
        raise DomainError("energy grid must be strictly increasing")
    return grid


def efficiency_energy_sweep(model: MemoryModel, energies: Sequence[float]) -> list[SweepPoint]:
    grid = validate_energy_grid(energies)
    out = []
    for energy in grid.tolist():
        r = model.response(energy)
        out.append(SweepPoint(energy, r.eta_tot, r.n_noise))
    return out


def interior_maxima(values) -> list[int]:
    """Indices of strict interior local maxima (plateaus count once)."""
    v = np.asarray(values, dtype=float)
    peaks = []
    i = 1
    while i < len(v) - 1:
        if v[i] > v[i - 1]:
            j = i
            while j < len(v) - 1 and v[j + 1] == v[i]:
                j += 1
            if j < len(v) - 1 and v[j + 1] < v[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def metrics(lifetime, bandwidth, noise, eta_tot) -> MemoryMetrics:
    """Time-bandwidth product and the noise-to-efficiency figure ``mu1``."""
    _check_finite(lifetime=lifetime, bandwidth=bandwidth, noise=noise, eta_tot=eta_tot)
    if min(lifetime, bandwidth, noise, eta_tot) < 0:
        raise DomainError("metric inputs must be non-negative")
    if eta_tot == 0:
        raise DomainError("mu1 is undefined for zero efficiency")
    return MemoryMetrics(lifetime=lifetime, time_bandwidth=lifetime * bandwidth, mu1=noise / eta_tot)
