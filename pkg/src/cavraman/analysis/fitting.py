"""Estimators and fits with Monte-Carlo uncertainties.

All fits are weighted least squares solved by a projected Gauss-Newton
iteration with analytic Jacobians and simple lower bounds. The solver is
batched: leading axes of ``y`` are independent problems, which is how the
Monte-Carlo resamples are fitted in one go.

Monte-Carlo resampling draws every raw count from a Poisson distribution
with the observed count as mean. Draws are made in fixed-size blocks, each
from its own child of the master seed, so results do not depend on how the
blocks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, FitError
from .timetags import CountSet

__all__ = [
    "MonteCarloConfig",
    "FitResult",
    "CoherentStateSeries",
    "NoiseScalingSeries",
    "LifetimeSeries",
    "NoiseScalingFit",
    "wls",
    "poisson_resample",
    "efficiency",
    "snr",
    "snr_sigma",
    "fit_mu1",
    "fit_noise_scaling",
    "fit_lifetime",
]


@dataclass(frozen=True)
class MonteCarloConfig:
    n_samples: int = 10_000
    seed: int = 0
    block_size: int = 1000

    def __post_init__(self):
        if self.n_samples < 0:
            raise DomainError("n_samples must be non-negative")
        if self.block_size <= 0:
            raise DomainError("block_size must be positive")


@dataclass
class FitResult:
    estimate: float | np.ndarray
    std_error: float | np.ndarray
    covariance: np.ndarray
    n_mc_samples: int
    seed: int | None
    interval: tuple = (np.nan, np.nan)
    samples: np.ndarray | None = field(default=None, repr=False)


def poisson_resample(counts, mc: MonteCarloConfig):
    """``(n_samples, *counts.shape)`` Poisson draws around ``counts``."""
    lam = np.asarray(counts, dtype=float)
    n_blocks = -(-mc.n_samples // mc.block_size)
    children = np.random.SeedSequence(mc.seed).spawn(n_blocks)
    blocks = []
    remaining = mc.n_samples
    for child in children:
        size = min(mc.block_size, remaining)
        remaining -= size
        blocks.append(np.random.default_rng(child).poisson(lam, size=(size, *lam.shape)))
    if not blocks:
        return np.empty((0, *lam.shape))
    return np.concatenate(blocks).astype(float)


def _summarize(point, samples, mc, analytic_cov=None):
    """Build a :class:`FitResult` from a point estimate and MC samples."""
    point = np.asarray(point, dtype=float)
    scalar = point.ndim == 0
    if samples is not None and len(samples):
        s = np.asarray(samples, dtype=float).reshape(len(samples), -1)
        s = s[np.all(np.isfinite(s), axis=1)]
        if len(s) < 2:
            raise FitError("too few finite Monte-Carlo samples")
        cov = np.atleast_2d(np.cov(s, rowvar=False))
        lo, hi = np.percentile(s, [16, 84], axis=0)
        n = len(s)
    else:
        s = None
        cov = np.atleast_2d(analytic_cov) if analytic_cov is not None else np.full((point.size, point.size), np.nan)
        lo = hi = np.full(point.size, np.nan)
        n = 0
    std = np.sqrt(np.diag(cov))
    if scalar:
        return FitResult(float(point), float(std[0]), cov, n, mc.seed if mc else None,
                         (float(lo[0]), float(hi[0])), None if s is None else s[:, 0])
    return FitResult(point, std, cov, n, mc.seed if mc else None, (lo, hi), s)


def wls(model, jacobian, p0, y, sigma, lower=None, max_iter=200, tol=1e-10):
    """Bound-constrained weighted least squares by projected Gauss-Newton.

    Parameters
    ----------
    model, jacobian : callables
        ``model(p) -> (..., n)`` and ``jacobian(p) -> (..., n, k)`` for
        parameters ``p`` of shape ``(..., k)``.
    p0 : (..., k) starting point.
    y, sigma : (..., n) data and standard deviations.
    lower : (k,) lower bounds, ``-inf`` where unbounded.

    Returns
    -------
    p, cov, converged
        ``cov`` is ``(J^T W J)^{-1}`` over the free parameters at the solution
        (zero rows/columns for parameters pinned at a bound).
    """
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = np.array(p0, dtype=float, copy=True)
    k = p.shape[-1]
    lower = np.full(k, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    p = np.maximum(p, lower)
    finite = np.isfinite(lower)
    edge = np.full(k, -np.inf)
    edge[finite] = lower[finite] + 1e-15 * np.maximum(1.0, np.abs(lower[finite]))
    eye = np.eye(k)

    def cost(q):
        return np.sum(((y - model(q)) / sigma) ** 2, axis=-1)

    c = cost(p)
    converged = np.zeros(p.shape[:-1], dtype=bool)
    for _ in range(max_iter):
        r = (y - model(p)) / sigma
        jw = jacobian(p) / sigma[..., None]
        grad = np.einsum("...nk,...n->...k", jw, r)
        at_bound = (p <= edge) & (grad <= 0)
        free = ~at_bound
        a = np.einsum("...nk,...nl->...kl", jw, jw)
        mask = free[..., :, None] & free[..., None, :]
        a = np.where(mask, a, eye)
        rhs = np.where(free, grad, 0.0)
        try:
            step = np.linalg.solve(a, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            raise FitError("singular normal equations (degenerate design)") from None
        alpha = np.ones(p.shape[:-1])
        trial = np.maximum(p + step, lower)
        c_new = cost(trial)
        for _ in range(40):
            worse = ~(c_new <= c) & ~converged
            if not worse.any():
                break
            alpha = np.where(worse, 0.5 * alpha, alpha)
            trial = np.where(worse[..., None], np.maximum(p + alpha[..., None] * step, lower), trial)
            c_new = np.where(worse, cost(trial), c_new)
        accept = (c_new <= c) & ~converged
        moved = np.abs(trial - p) / (np.abs(p) + 1e-300)
        rel = np.where(np.isfinite(moved), moved, 0.0).max(axis=-1)
        p = np.where(accept[..., None], trial, p)
        c = np.where(accept, c_new, c)
        converged |= ~accept | (rel < tol)
        if converged.all():
            break

    r = (y - model(p)) / sigma
    jw = jacobian(p) / sigma[..., None]
    grad = np.einsum("...nk,...n->...k", jw, r)
    free = ~((p <= edge) & (grad <= 0))
    a = np.einsum("...nk,...nl->...kl", jw, jw)
    mask = free[..., :, None] & free[..., None, :]
    try:
        cov = np.where(mask, np.linalg.inv(np.where(mask, a, eye)), 0.0)
    except np.linalg.LinAlgError:
        raise FitError("singular normal equations (degenerate design)") from None
    return p, cov, converged


# --- estimators -------------------------------------------------------------

def _efficiency_values(sc_out, c_out, s_out, s_in):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s_in > 0, (sc_out - c_out - s_out) / s_in, np.nan)


def efficiency(counts: CountSet, mc: MonteCarloConfig | None = None) -> FitResult:
    """Storage-and-retrieval efficiency ``(c_sc_out - c_c_out - c_s_out) / c_s_in``."""
    if counts.c_s_in <= 0:
        raise DomainError("efficiency undefined: no read-in counts for the signal-only configuration")
    raw = np.array([counts.c_sc_out, counts.c_c_out, counts.c_s_out, counts.c_s_in], dtype=float)
    point = (raw[0] - raw[1] - raw[2]) / raw[3]
    analytic = (raw[0] + raw[1] + raw[2]) / raw[3] ** 2 + point**2 / raw[3]
    samples = None
    if mc is not None and mc.n_samples:
        draws = poisson_resample(raw, mc)
        samples = _efficiency_values(*draws.T)
    return _summarize(point, samples, mc, analytic_cov=[[analytic]])


def _snr_values(sc_out, c_out, s_out):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(c_out > 0, (sc_out - c_out - s_out) / c_out, np.nan)


def snr(counts: CountSet) -> float:
    """Retrieved-signal counts over noise counts in the read-out window."""
    if counts.c_c_out <= 0:
        raise DomainError("SNR undefined: no noise counts")
    return float((counts.c_sc_out - counts.c_c_out - counts.c_s_out) / counts.c_c_out)


def snr_sigma(sc_out, c_out, s_out):
    """Poisson-propagated standard deviation of the SNR estimator."""
    sc_out, c_out, s_out = (np.asarray(v, dtype=float) for v in (sc_out, c_out, s_out))
    with np.errstate(divide="ignore", invalid="ignore"):
        var = (np.maximum(sc_out, 1.0) + s_out) / c_out**2 + (sc_out - s_out) ** 2 / c_out**3
    return np.sqrt(var)


@dataclass
class CoherentStateSeries:
    mean_photons: np.ndarray
    counts: list

    def __post_init__(self):
        self.mean_photons = np.asarray(self.mean_photons, dtype=float)
        if len(self.mean_photons) != len(self.counts):
            raise DomainError("one CountSet per input amplitude is required")
        if np.any(self.mean_photons < 0):
            raise DomainError("mean photon numbers must be non-negative")

    def raw(self):
        """``(n, 3)`` array of (c_sc_out, c_c_out, c_s_out)."""
        return np.array([[c.c_sc_out, c.c_c_out, c.c_s_out] for c in self.counts], dtype=float)


def _mu1_closed_form(x, y, w):
    # y = x / mu1 through the origin; mu1 = sum(w x^2) / sum(w x y)
    return np.sum(w * x * x, axis=-1) / np.sum(w * x * y, axis=-1)


def fit_mu1(series: CoherentStateSeries, mc: MonteCarloConfig | None = None) -> FitResult:
    """Fit ``SNR = |alpha|^2 / mu1`` through the origin.

    Point estimate by Gauss-Newton on ``mu1`` with Poisson-propagated SNR
    weights; uncertainty by refitting Poisson resamples of all counts.
    """
    x = series.mean_photons
    if len(x) < 2 or len(np.unique(x)) < 2:
        raise DomainError("need at least two distinct input amplitudes")
    raw = series.raw()
    if np.any(raw[:, 1] <= 0):
        raise DomainError("SNR undefined where the noise count is zero")
    y = _snr_values(*raw.T)
    sig = snr_sigma(*raw.T)
    if np.all(y <= 0):
        raise FitError("all SNR values are non-positive; cannot fit mu1")
    w = 1.0 / sig**2
    guess = _mu1_closed_form(x, y, w)
    if not guess > 0:
        raise FitError("non-positive slope; cannot fit mu1")

    def model(p):
        return x / p[..., :1]

    def jac(p):
        return (-x / p[..., :1] ** 2)[..., None]

    p, cov, ok = wls(model, jac, [guess], y, sig, lower=[1e-12])
    if not ok:
        raise FitError("mu1 fit did not converge")
    samples = None
    if mc is not None and mc.n_samples:
        draws = poisson_resample(raw, mc)
        ys = _snr_values(draws[..., 0], draws[..., 1], draws[..., 2])
        ws = 1.0 / snr_sigma(draws[..., 0], draws[..., 1], draws[..., 2]) ** 2
        samples = _mu1_closed_form(x, ys, ws)
        samples = np.where(samples > 0, samples, np.nan)
    return _summarize(p[0], samples, mc, analytic_cov=cov)


@dataclass
class NoiseScalingSeries:
    """Noise counts in the read-out window versus control energy.

    ``noise = counts / (n_triggers * detection_efficiency)`` photons per pulse.
    """

    energies: np.ndarray
    counts: np.ndarray
    n_triggers: float = 1.0
    detection_efficiency: float = 1.0

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.energies.shape != self.counts.shape:
            raise DomainError("energies and counts must have equal length")
        if np.any(self.energies < 0) or np.any(self.counts < 0):
            raise DomainError("energies and counts must be non-negative")

    @property
    def scale(self):
        return self.n_triggers * self.detection_efficiency

    @property
    def noise(self):
        return self.counts / self.scale

    @classmethod
    def from_noise(cls, energies, noise, n_triggers=1.0, detection_efficiency=1.0):
        return cls(energies, np.asarray(noise, dtype=float) * n_triggers * detection_efficiency,
                   n_triggers, detection_efficiency)


@dataclass
class NoiseScalingFit:
    coefficients: FitResult
    fwm: FitResult
    energy_eval: float

    @property
    def a(self):
        return float(self.coefficients.estimate[0])

    @property
    def b(self):
        return float(self.coefficients.estimate[1])

    @property
    def c(self):
        return float(self.coefficients.estimate[2])


def _quadratic_fit(energies, noise, sigma):
    design = np.stack([np.ones_like(energies), energies, energies**2], axis=-1)

    def model(p):
        return np.einsum("nk,...k->...n", design, p)

    def jac(p):
        return np.broadcast_to(design, (*p.shape[:-1], *design.shape))

    p0 = np.broadcast_to(np.full(3, 1e-3) * np.max(noise, axis=-1, keepdims=True).clip(1e-12),
                         (*noise.shape[:-1], 3))
    return wls(model, jac, p0, noise, sigma, lower=np.zeros(3))


def fit_noise_scaling(series: NoiseScalingSeries, energy_eval, mc: MonteCarloConfig | None = None,
                      sigma=None) -> NoiseScalingFit:
    """Fit ``N(E) = a + b E + c E^2`` with ``a, b, c >= 0``.

    ``c * energy_eval**2`` is the four-wave-mixing component at the
    operating energy. Weights come from Poisson counts unless ``sigma``
    (photons per pulse) is given.
    """
    e = series.energies
    if len(e) < 4 or len(np.unique(e)) < 4:
        raise DomainError("need at least four distinct energies")
    design = np.stack([np.ones_like(e), e, e**2], axis=-1)
    if np.linalg.matrix_rank(design) < 3:
        raise FitError("degenerate design matrix")
    if sigma is None:
        sigma = np.sqrt(np.maximum(series.counts, 1.0)) / series.scale
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), e.shape)
    p, cov, ok = _quadratic_fit(e, series.noise, sigma)
    if not ok:
        raise FitError("noise-scaling fit did not converge")
    grad = np.array([0.0, 0.0, energy_eval**2])
    fwm_point = p[2] * energy_eval**2
    coef_samples = fwm_samples = None
    if mc is not None and mc.n_samples:
        draws = poisson_resample(series.counts, mc)
        sig_s = np.sqrt(np.maximum(draws, 1.0)) / series.scale
        coef_samples, _, _ = _quadratic_fit(e, draws / series.scale, sig_s)
        fwm_samples = coef_samples[:, 2] * energy_eval**2
    coefficients = _summarize(p, coef_samples, mc, analytic_cov=cov)
    fwm = _summarize(fwm_point, fwm_samples, mc, analytic_cov=[[grad @ cov @ grad]])
    return NoiseScalingFit(coefficients, fwm, float(energy_eval))


@dataclass
class LifetimeSeries:
    times: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.times.shape != self.counts.shape:
            raise DomainError("times and counts must have equal length")
        if np.any(self.counts < 0):
            raise DomainError("counts must be non-negative")


def _exp_model(t):
    def model(p):
        return p[..., :1] * np.exp(-t / p[..., 1:2])

    def jac(p):
        amp, tau = p[..., :1], p[..., 1:2]
        e = np.exp(-t / tau)
        return np.stack([e, amp * e * t / tau**2], axis=-1)

    return model, jac


def _loglinear_guess(t, counts):
    pos = counts > 0
    if pos.sum() < 2:
        return None
    slope, icpt = np.polyfit(t[pos], np.log(counts[pos]), 1, w=np.sqrt(counts[pos]))
    if slope >= 0:
        return None
    return np.array([np.exp(icpt), -1.0 / slope])


def fit_lifetime(series: LifetimeSeries, mc: MonteCarloConfig | None = None) -> FitResult:
    """Fit ``counts = A exp(-t / tau)`` and return tau (ns)."""
    t, counts = series.times, series.counts
    if len(t) < 3:
        raise DomainError("need at least three storage times")
    if np.any(np.diff(t) <= 0):
        raise DomainError("storage times must be strictly increasing")
    if not np.any(counts > 0):
        raise FitError("no retrieved counts: amplitude is zero")
    guess = _loglinear_guess(t, counts)
    if guess is None:
        raise FitError("data do not decay; lifetime undefined")
    model, jac = _exp_model(t)
    sigma = np.sqrt(np.maximum(counts, 1.0))
    p, cov, ok = wls(model, jac, guess, counts, sigma, lower=[0.0, 1e-9])
    span = t[-1] - t[0]
    if not ok or not np.all(np.isfinite(p)) or p[1] <= 0 or p[1] > 1e3 * span or p[0] <= 0:
        raise FitError(f"lifetime fit failed (tau={p[1]!r})")
    samples = None
    if mc is not None and mc.n_samples:
        draws = poisson_resample(counts, mc)
        p0 = np.broadcast_to(p, (len(draws), 2))
        ps, _, _ = wls(model, jac, p0, draws, np.sqrt(np.maximum(draws, 1.0)), lower=[0.0, 1e-9])
        samples = np.where((ps[:, 1] > 0) & (ps[:, 1] < 1e3 * span), ps[:, 1], np.nan)
    return _summarize(p[1], samples, mc, analytic_cov=[[cov[1, 1]]])
