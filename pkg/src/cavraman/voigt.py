"""Complex Voigt lineshape via the Humlicek (1982) W4 rational approximation.

Relative accuracy of the Faddeeva function is about 1e-4 over the upper
half plane, which is ample for fringe-visibility work.
"""

import numpy as np

__all__ = ["faddeeva", "complex_voigt", "FWHM_TO_SIGMA"]

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
_SQRT_PI = np.sqrt(np.pi)


def faddeeva(z):
    """Faddeeva function ``w(z) = exp(-z^2) erfc(-iz)`` for Im z >= 0."""
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    x, y = z.real, z.imag
    t = y - 1j * x
    s = np.abs(x) + y
    w = np.empty_like(t)

    r1 = s >= 15.0
    r2 = ~r1 & (s >= 5.5)
    r3 = (s < 5.5) & (y >= 0.195 * np.abs(x) - 0.176)
    r4 = ~(r1 | r2 | r3)

    tt = t[r1]
    w[r1] = tt * 0.5641896 / (0.5 + tt * tt)

    tt = t[r2]
    u = tt * tt
    w[r2] = tt * (1.410474 + u * 0.5641896) / (0.75 + u * (3.0 + u))

    tt = t[r3]
    w[r3] = (16.4955 + tt * (20.20933 + tt * (11.96482 + tt * (3.778987 + tt * 0.5642236)))) / (
        16.4955 + tt * (38.82363 + tt * (39.27121 + tt * (21.69274 + tt * (6.699398 + tt)))))

    tt = t[r4]
    u = tt * tt
    num = tt * (36183.31 - u * (3321.9905 - u * (1540.787 - u * (219.0313 - u * (
        35.76683 - u * (1.320522 - u * 0.56419))))))
    den = 32066.6 - u * (24322.84 - u * (9022.228 - u * (2186.181 - u * (
        364.2191 - u * (61.57037 - u * (1.841439 - u))))))
    w[r4] = np.exp(u) - num / den

    return w[0] if scalar else w


def complex_voigt(detuning, homogeneous_fwhm, doppler_fwhm):
    """Doppler-averaged complex Lorentzian response.

    In the Lorentzian limit this is ``-(G/2) / (detuning + i G/2)``: the
    imaginary part is the absorptive lineshape (unit peak for a pure
    Lorentzian) and the real part the dispersive one. The Doppler average
    preserves the integrated absorption.
    """
    detuning = np.asarray(detuning, dtype=float)
    half = 0.5 * homogeneous_fwhm
    sigma = doppler_fwhm * FWHM_TO_SIGMA
    scale = sigma * np.sqrt(2.0)
    z = (detuning + 1j * half) / scale
    return 1j * _SQRT_PI * (half / scale) * faddeeva(z)
