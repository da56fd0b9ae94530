"""Ring-cavity transmission with an intracavity atomic vapour.

Frequencies are offsets in GHz from the F=4 -> 6P3/2 line of the Cs D2
transition; the F=3 line sits at +Δ_HF. The signal (Stokes) and anti-Stokes
fields share one polarisation channel, the control the orthogonal one,
which picks up an extra birefringent phase per round trip.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage, optimize

from .constants import CS_D2_FREQUENCY_GHZ, CS_HYPERFINE_GHZ, REFERENCE, SPEED_OF_LIGHT_MM_GHZ
from .errors import DomainError
from .physics import fsr_design
from .voigt import complex_voigt

__all__ = [
    "SusceptibilityModel",
    "BirefringentCavity",
    "SpectrumResult",
    "TripleResonance",
    "CHANNELS",
    "susceptibility",
    "transmission",
    "roundtrip_factor",
    "spectrum",
    "visibility",
    "airy_visibility",
    "finesse",
    "field_visibility",
    "calibrate_channel_loss",
    "find_triple_resonance",
    "triple_resonance_objective",
    "write_spectrum_csv",
    "default_grid",
]

CHANNELS = ("signal", "control")
SPECTRUM_COLUMNS = ("frequency_ghz", "transmission_signal", "transmission_control",
                    "transmission_antistokes")


@dataclass(frozen=True)
class SusceptibilityModel:
    lines: tuple = ((0.0, REFERENCE["spin_polarization"]),
                    (CS_HYPERFINE_GHZ, 1.0 - REFERENCE["spin_polarization"]))
    doppler_fwhm: float = REFERENCE["doppler_fwhm_ghz"]
    homogeneous_fwhm: float = REFERENCE["pressure_fwhm_ghz"]
    peak_optical_depth: float = REFERENCE["optical_depth"]

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple((float(c), float(w)) for c, w in self.lines))
        weights = [w for _, w in self.lines]
        if any(w < 0 for w in weights) or sum(weights) > 1 + 1e-12:
            raise DomainError("line weights must be non-negative and sum to at most 1")
        if self.doppler_fwhm <= 0 or self.homogeneous_fwhm <= 0:
            raise DomainError("line widths must be positive")
        if self.peak_optical_depth < 0:
            raise DomainError("optical depth must be non-negative")

    @classmethod
    def empty(cls):
        return cls(lines=(), peak_optical_depth=0.0)


def susceptibility(model: SusceptibilityModel, nu):
    """Complex single-pass response; Im is the power optical depth, Re/2 the phase.

    Each line is a Voigt profile scaled so that a full-weight line has an
    absorptive peak equal to ``peak_optical_depth``.
    """
    nu = np.asarray(nu, dtype=float)
    out = np.zeros(nu.shape, dtype=complex)
    if model.peak_optical_depth == 0 or not model.lines:
        return out
    peak = complex_voigt(0.0, model.homogeneous_fwhm, model.doppler_fwhm).imag
    for center, weight in model.lines:
        out = out + weight * complex_voigt(nu - center, model.homogeneous_fwhm, model.doppler_fwhm)
    return model.peak_optical_depth / peak * out


@dataclass(frozen=True)
class BirefringentCavity:
    """Two-coupler ring cavity with a birefringent element.

    ``passive_loss`` maps a channel to its round-trip amplitude loss (mirrors
    other than the couplers, crystal, cell windows). ``length_offset_nm``
    is the piezo correction on top of ``roundtrip_length``.
    """

    r1: float = REFERENCE["reflectivity"]
    r2: float = REFERENCE["reflectivity"]
    passive_loss: dict = field(default_factory=lambda: {"signal": 0.0, "control": 0.0})
    roundtrip_length: float = field(default_factory=lambda: fsr_design(CS_HYPERFINE_GHZ, 2)[1])
    birefringent_phase: float = 0.0
    length_offset_nm: float = 0.0
    reference_frequency: float = CS_D2_FREQUENCY_GHZ

    def __post_init__(self):
        for name in ("r1", "r2"):
            if not 0 <= getattr(self, name) <= 1:
                raise DomainError(f"{name} must lie in [0, 1]")
        loss = dict(self.passive_loss)
        for ch in CHANNELS:
            loss.setdefault(ch, 0.0)
        unknown = set(loss) - set(CHANNELS)
        if unknown:
            raise DomainError(f"unknown channel(s) {sorted(unknown)}")
        if any(not 0 <= v < 1 for v in loss.values()):
            raise DomainError("passive losses must lie in [0, 1)")
        object.__setattr__(self, "passive_loss", loss)
        if self.roundtrip_length <= 0:
            raise DomainError("roundtrip_length must be positive")

    @property
    def fsr(self):
        return SPEED_OF_LIGHT_MM_GHZ / self.roundtrip_length

    def signal_wavelength_nm(self, nu_signal):
        return SPEED_OF_LIGHT_MM_GHZ / (self.reference_frequency + nu_signal) * 1e6

    def with_loss(self, channel, loss):
        return replace(self, passive_loss={**self.passive_loss, channel: loss})


def _check_channel(channel):
    if channel not in CHANNELS:
        raise DomainError(f"channel must be one of {CHANNELS}, got {channel!r}")


def roundtrip_phase(cavity, nu, channel, chi=None):
    nu = np.asarray(nu, dtype=float)
    offset_mm = cavity.length_offset_nm * 1e-6
    theta = 2 * np.pi * (nu * cavity.roundtrip_length + (cavity.reference_frequency + nu) * offset_mm) \
        / SPEED_OF_LIGHT_MM_GHZ
    if chi is not None:
        theta = theta + 0.5 * chi.real
    if channel == "control":
        theta = theta + cavity.birefringent_phase
    return theta


def roundtrip_factor(cavity, model, nu, channel):
    """Round-trip amplitude ``r1 r2 (1 - loss) exp(-alpha/2)``."""
    _check_channel(channel)
    chi = susceptibility(model, nu)
    rho = cavity.r1 * cavity.r2 * (1.0 - cavity.passive_loss[channel]) * np.exp(-0.5 * chi.imag)
    return rho, chi


def transmission(cavity: BirefringentCavity, model: SusceptibilityModel, nu, channel="signal"):
    """Power transmission of the ring cavity at frequency offset(s) ``nu``."""
    rho, chi = roundtrip_factor(cavity, model, nu, channel)
    if np.any(rho >= 1):
        raise DomainError("round-trip amplitude >= 1: gain regime is not modeled")
    theta = roundtrip_phase(cavity, nu, channel, chi)
    t1sq = 1.0 - cavity.r1**2
    t2sq = 1.0 - cavity.r2**2
    # single pass from input to output coupler carries half the round-trip attenuation
    single = rho / (cavity.r1 * cavity.r2) if cavity.r1 * cavity.r2 > 0 else \
        (1.0 - cavity.passive_loss[channel]) * np.exp(-0.5 * chi.imag)
    return t1sq * t2sq * single / np.abs(1.0 - rho * np.exp(1j * theta)) ** 2


def airy_visibility(rho):
    """Fringe visibility of an Airy response with round-trip amplitude ``rho``."""
    return 2.0 * rho / (1.0 + rho**2)


def finesse(cavity, model, nu, channel="signal"):
    """Local finesse ``pi sqrt(rho) / (1 - rho)``."""
    rho, _ = roundtrip_factor(cavity, model, nu, channel)
    return np.pi * np.sqrt(rho) / (1.0 - rho)


def default_grid(n=4096, lo=-5.0, hi=32.0):
    return np.linspace(lo, hi, n)


@dataclass
class SpectrumResult:
    frequency: np.ndarray
    transmission: dict
    resonances: dict
    visibility: dict = field(default_factory=dict)
    finesse: dict = field(default_factory=dict)

    def rows(self):
        t = self.transmission
        return zip(self.frequency, t["signal"], t["control"], t["antistokes"])


def _local_maxima(freq, values):
    i = np.flatnonzero((values[1:-1] > values[:-2]) & (values[1:-1] >= values[2:])) + 1
    return freq[i]


def spectrum(cavity, model, grid=None, bands=None, probe_fwhm=0.0):
    """Transmission of both polarisation channels over a frequency grid.

    ``bands`` optionally maps a label (``"signal"``, ``"control"``,
    ``"antistokes"``) to ``(lo, hi)``; visibilities and local finesse at the
    band centre are filled in for those.
    """
    freq = default_grid() if grid is None else np.asarray(grid, dtype=float)
    t_sig = transmission(cavity, model, freq, "signal")
    t_ctl = transmission(cavity, model, freq, "control")
    trans = {"signal": t_sig, "control": t_ctl, "antistokes": t_sig}
    result = SpectrumResult(
        frequency=freq,
        transmission=trans,
        resonances={"signal": _local_maxima(freq, t_sig), "control": _local_maxima(freq, t_ctl)},
    )
    for label, band in (bands or {}).items():
        result.visibility[label] = visibility(result, band, probe_fwhm, label)
        channel = "control" if label == "control" else "signal"
        result.finesse[label] = float(finesse(cavity, model, 0.5 * (band[0] + band[1]), channel))
    return result


def visibility(result: SpectrumResult, band, probe_fwhm=0.0, label="signal"):
    """Fringe visibility ``(max - min) / (max + min)`` inside ``band``.

    The transmission is first convolved with a Gaussian probe spectrum of
    FWHM ``probe_fwhm`` GHz (requires a uniform grid).
    """
    lo, hi = band
    freq = result.frequency
    mask = (freq >= lo) & (freq <= hi)
    if hi <= lo or not mask.any():
        raise DomainError(f"band {band} contains no grid points")
    if probe_fwhm < 0:
        raise DomainError("probe_fwhm must be non-negative")
    t = np.asarray(result.transmission[label], dtype=float)
    if probe_fwhm > 0:
        step = np.diff(freq)
        if not np.allclose(step, step[0], rtol=1e-6):
            raise DomainError("probe convolution requires a uniform frequency grid")
        sigma_pts = probe_fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0))) / step[0]
        t = ndimage.gaussian_filter1d(t, sigma_pts, mode="nearest", truncate=6.0)
    t = t[mask]
    tmax, tmin = t.max(), t.min()
    if tmax + tmin == 0:
        return 0.0
    return float((tmax - tmin) / (tmax + tmin))


def field_visibility(cavity, model, nu, channel, probe_fwhm, points_per_fsr=2048):
    """Visibility seen by a probe centred at ``nu`` while the cavity is scanned.

    Builds a local spectrum spanning one free spectral range around ``nu``
    (with margin for the probe convolution) and applies :func:`visibility`.
    """
    fsr = cavity.fsr
    margin = 4.0 * probe_fwhm
    n = int(points_per_fsr * (1.0 + 2.0 * margin / fsr)) + 1
    grid = np.linspace(nu - 0.5 * fsr - margin, nu + 0.5 * fsr + margin, n)
    t = transmission(cavity, model, grid, channel)
    result = SpectrumResult(grid, {channel: t}, {})
    return visibility(result, (nu - 0.5 * fsr, nu + 0.5 * fsr), probe_fwhm, channel)


def calibrate_channel_loss(cavity, model, channel, nu, target, probe_fwhm=0.0, max_loss=0.95):
    """Passive loss of ``channel`` that gives visibility ``target`` at ``nu``.

    Returns ``(loss, calibrated_cavity)``. Raises :class:`DomainError` when
    the target is outside the range reachable by loss alone.
    """
    def resid(loss):
        return field_visibility(cavity.with_loss(channel, loss), model, nu, channel, probe_fwhm) - target

    hi_v, lo_v = resid(0.0), resid(max_loss)
    if hi_v < 0 or lo_v > 0:
        raise DomainError(
            f"visibility target {target} unreachable for channel {channel!r}: "
            f"range [{lo_v + target:.4f}, {hi_v + target:.4f}]")
    loss = optimize.brentq(resid, 0.0, max_loss, xtol=1e-10)
    return loss, cavity.with_loss(channel, loss)


@dataclass(frozen=True)
class TripleResonance:
    length_offset_nm: float
    birefringent_phase: float
    score: float
    t_signal: float
    t_control: float
    t_antistokes: float
    success: bool
    message: str = ""


def triple_resonance_objective(cavity, model, nu_s, nu_c, nu_a, offsets_nm, phases):
    """Objective ``T_s + T_c - T_a`` on the outer product of offsets and phases."""
    offsets_nm = np.atleast_1d(np.asarray(offsets_nm, dtype=float))
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    base = replace(cavity, length_offset_nm=0.0, birefringent_phase=0.0)
    rho_s, chi_s = roundtrip_factor(base, model, nu_s, "signal")
    rho_c, chi_c = roundtrip_factor(base, model, nu_c, "control")
    rho_a, chi_a = roundtrip_factor(base, model, nu_a, "signal")

    def airy(rho, theta):
        single = rho / (base.r1 * base.r2)
        return (1 - base.r1**2) * (1 - base.r2**2) * single / np.abs(1 - rho * np.exp(1j * theta)) ** 2

    def phase(nu, chi):
        th0 = roundtrip_phase(base, nu, "signal", chi)
        per_nm = 2 * np.pi * (base.reference_frequency + nu) * 1e-6 / SPEED_OF_LIGHT_MM_GHZ
        return th0 + per_nm * offsets_nm

    if max(rho_s, rho_c, rho_a) >= 1:
        raise DomainError("round-trip amplitude >= 1: gain regime is not modeled")
    t_s = airy(rho_s, phase(nu_s, chi_s))
    t_a = airy(rho_a, phase(nu_a, chi_a))
    t_c = airy(rho_c, phase(nu_c, chi_c)[:, None] + phases[None, :])
    return t_s[:, None] + t_c - t_a[:, None], t_s, t_c, t_a


def find_triple_resonance(cavity, model, nu_s, nu_c, nu_a, grid=(256, 256), refine=True):
    """Search piezo offset and birefringent phase for the triple-resonance point.

    Maximises ``T(nu_s) + T(nu_c) - T(nu_a)`` over one signal wavelength of
    length offset and one period of birefringent phase: exhaustive grid, then
    Nelder-Mead polish from the best grid cell. A point whose signal
    transmission is below half the empty-cavity peak is reported as a search
    failure rather than raised.
    """
    n_l, n_p = grid
    if n_l < 2 or n_p < 2:
        raise DomainError("grid must have at least 2 points per axis")
    wavelength = cavity.signal_wavelength_nm(nu_s)
    offsets = np.arange(n_l) * wavelength / n_l
    phases = np.arange(n_p) * 2 * np.pi / n_p
    obj, t_s, _, _ = triple_resonance_objective(cavity, model, nu_s, nu_c, nu_a, offsets, phases)

    loss = cavity.passive_loss["signal"]
    rho0 = cavity.r1 * cavity.r2 * (1 - loss)
    t_max = (1 - cavity.r1**2) * (1 - cavity.r2**2) * (1 - loss) / (1 - rho0) ** 2
    feasible = t_s > 0.5 * t_max
    if not feasible.any():
        return TripleResonance(np.nan, np.nan, -np.inf, float(t_s.max()), np.nan, np.nan, False,
                               f"signal transmission never exceeds 0.5 x {t_max:.4f}")
    masked = np.where(feasible[:, None], obj, -np.inf)
    i, j = np.unravel_index(np.argmax(masked), masked.shape)
    best = np.array([offsets[i], phases[j]])

    def neg(p):
        val, ts, _, _ = triple_resonance_objective(cavity, model, nu_s, nu_c, nu_a, p[0], p[1])
        return -val[0, 0] if ts[0] > 0.5 * t_max else np.inf

    if refine:
        step = np.array([wavelength / n_l, 2 * np.pi / n_p])
        simplex = np.array([best, best + [step[0], 0], best + [0, step[1]]])
        res = optimize.minimize(neg, best, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "xatol": 1e-9, "fatol": 1e-12,
                                         "maxiter": 2000})
        if res.fun <= neg(best):
            best = res.x
    offset = float(np.mod(best[0], wavelength))
    phi = float(np.mod(best[1], 2 * np.pi))
    val, ts, tc, ta = triple_resonance_objective(cavity, model, nu_s, nu_c, nu_a, offset, phi)
    return TripleResonance(offset, phi, float(val[0, 0]), float(ts[0]), float(tc[0, 0]), float(ta[0]),
                           True)


def write_spectrum_csv(result: SpectrumResult, stream=None):
    """Write the spectrum CSV; returns the text when ``stream`` is None."""
    own = stream is None
    stream = io.StringIO() if own else stream
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SPECTRUM_COLUMNS)
    for row in result.rows():
        writer.writerow([f"{v:.9g}" for v in row])
    return stream.getvalue() if own else None
