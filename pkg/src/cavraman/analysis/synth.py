"""Seeded synthetic data in the same formats the analysis ingests.

Used as the ground-truth oracle for the estimators and fits. Default count
levels are set so that at least 95% of fitted values fall within the error
bars quoted for the real experiment: ±0.02 on mu1, ±0.003 on the
four-wave-mixing component and ±7 ns on the lifetime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fitting import CoherentStateSeries, LifetimeSeries, NoiseScalingSeries
from .timetags import CountSet, TimeTagRecord

__all__ = [
    "StreamTruth",
    "expected_counts",
    "synth_stream",
    "synth_coherent_series",
    "synth_noise_series",
    "synth_lifetime_series",
    "DEFAULT_AMPLITUDES",
    "DEFAULT_ENERGIES",
    "DEFAULT_STORAGE_TIMES",
]

DEFAULT_AMPLITUDES = (0.2, 0.4, 0.7, 1.0, 1.5, 2.0)
DEFAULT_ENERGIES = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5)
DEFAULT_STORAGE_TIMES = tuple(12.5 * k for k in range(1, 13))


@dataclass(frozen=True)
class StreamTruth:
    """Per-trigger rates behind a synthetic time-tag stream.

    Photon numbers are referred to the memory output; ``detection_efficiency``
    covers filtering and detector losses.
    """

    efficiency: float = 0.095
    noise: float = 0.015
    mean_photons: float = 0.7
    transmitted_fraction: float = 0.6
    leakage: float = 0.002
    signal_leak_out: float = 0.0
    detection_efficiency: float = 0.012
    n_triggers: int = 2_000_000
    read_in_ps: int = 5000
    separation_ps: int = 12_500
    jitter_ps: float = 300.0

    @property
    def read_in_window(self):
        return (self.read_in_ps - 2000, self.read_in_ps + 2000)

    @property
    def read_out_window(self):
        t = self.read_in_ps + self.separation_ps
        return (t - 2000, t + 2000)


def expected_counts(truth: StreamTruth) -> CountSet:
    """Mean window counts implied by ``truth``."""
    k = truth.n_triggers * truth.detection_efficiency
    a = truth.mean_photons
    bg = truth.noise + truth.leakage
    return CountSet(
        c_sc_in=k * (truth.transmitted_fraction * a + bg),
        c_sc_out=k * (truth.efficiency * a + bg + truth.signal_leak_out),
        c_s_in=k * a,
        c_s_out=k * truth.signal_leak_out,
        c_c_in=k * bg,
        c_c_out=k * bg,
        n_triggers=truth.n_triggers,
    )


def synth_stream(truth: StreamTruth, seed: int) -> list[TimeTagRecord]:
    """Poisson-sampled detection events, sorted by trigger, channel order, time."""
    rng = np.random.default_rng(seed)
    mean = expected_counts(truth)
    centres = {"in": truth.read_in_ps, "out": truth.read_in_ps + truth.separation_ps}
    trig, chan, time = [], [], []
    for ci, ch in enumerate(("sc", "s", "c")):
        for window in ("in", "out"):
            lam = getattr(mean, f"c_{ch}_{window}")
            n = rng.poisson(lam) if lam > 0 else 0
            ids = rng.integers(0, truth.n_triggers, n)
            t = np.rint(rng.normal(centres[window], truth.jitter_ps, n)).astype(np.int64)
            trig.append(ids)
            chan.append(np.full(n, ci))
            time.append(np.clip(t, 0, None))
    trig, chan, time = (np.concatenate(v) for v in (trig, chan, time))
    order = np.lexsort((time, chan, trig))
    names = ("sc", "s", "c")
    return [TimeTagRecord(int(i), names[c], int(t)) for i, c, t in zip(trig[order], chan[order], time[order])]


def synth_coherent_series(seed, mu1=0.17, efficiency=0.095, amplitudes=DEFAULT_AMPLITUDES,
                          n_triggers=700_000, detection_efficiency=0.012, leakage=0.0):
    """SNR-versus-amplitude dataset whose true slope is ``1 / mu1``."""
    rng = np.random.default_rng(seed)
    noise = mu1 * efficiency
    k = n_triggers * detection_efficiency
    sets = []
    for a in amplitudes:
        lam = np.array([
            k * (0.6 * a + noise + leakage),
            k * (efficiency * a + noise + leakage),
            k * a,
            0.0,
            k * (noise + leakage),
            k * (noise + leakage),
        ])
        draws = rng.poisson(lam)
        sets.append(CountSet(*draws.tolist(), n_triggers=n_triggers))
    return CoherentStateSeries(np.asarray(amplitudes, dtype=float), sets)


def synth_noise_series(seed, a=0.004, b=0.002, c=0.0027, energies=DEFAULT_ENERGIES,
                       n_triggers=2_000_000, detection_efficiency=0.012):
    """Noise floor versus control energy with constant, linear and quadratic parts."""
    rng = np.random.default_rng(seed)
    e = np.asarray(energies, dtype=float)
    scale = n_triggers * detection_efficiency
    counts = rng.poisson(scale * (a + b * e + c * e**2))
    return NoiseScalingSeries(e, counts.astype(float), n_triggers, detection_efficiency)


def synth_lifetime_series(seed, tau=95.0, amplitude=800.0, times=DEFAULT_STORAGE_TIMES):
    """Retrieved counts versus storage time for an exponential memory decay."""
    rng = np.random.default_rng(seed)
    t = np.asarray(times, dtype=float)
    counts = rng.poisson(amplitude * np.exp(-t / tau))
    return LifetimeSeries(t, counts.astype(float))
