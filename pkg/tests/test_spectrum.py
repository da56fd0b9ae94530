import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import wofz
from scipy.stats import norm

from cavraman.constants import SPEED_OF_LIGHT_MM_GHZ
from cavraman.errors import DomainError
from cavraman.spectrum import (
    BirefringentCavity,
    SusceptibilityModel,
    airy_visibility,
    calibrate_channel_loss,
    field_visibility,
    find_triple_resonance,
    roundtrip_factor,
    spectrum,
    susceptibility,
    transmission,
    triple_resonance_objective,
    visibility,
    write_spectrum_csv,
)
from cavraman.voigt import complex_voigt, faddeeva

EMPTY = SusceptibilityModel.empty()
NU_S, NU_C, NU_A = 15.2, 24.4, 33.6


class TestFaddeeva:
    def test_against_wofz(self):
        x, y = np.meshgrid(np.linspace(-40, 40, 401), np.geomspace(1e-4, 40, 120))
        z = x + 1j * y
        ref = wofz(z)
        assert np.max(np.abs(faddeeva(z) - ref) / np.abs(ref)) < 2e-4

    def test_scalar(self):
        assert faddeeva(0.0) == pytest.approx(1.0, rel=1e-4)
        assert np.ndim(faddeeva(1 + 1j)) == 0

    def test_voigt_is_gaussian_convolution(self):
        # Absorptive part against a direct numerical convolution of Lorentzian and Gaussian.
        hom, dop = 0.08, 0.375
        u = np.linspace(-8, 8, 160001)
        du = u[1] - u[0]
        gauss = norm.pdf(u, scale=dop / (2 * math.sqrt(2 * math.log(2))))
        for d in (0.0, 0.3, 1.5):
            lor = (hom / 2) / ((d - u) ** 2 + (hom / 2) ** 2)
            conv = np.sum(lor * gauss) * du
            # compare shapes relative to line centre
            ratio = complex_voigt(d, hom, dop).imag / complex_voigt(0.0, hom, dop).imag
            lor0 = (hom / 2) / (u**2 + (hom / 2) ** 2)
            conv0 = np.sum(lor0 * gauss) * du
            assert ratio == pytest.approx(conv / conv0, rel=5e-4)

    def test_dispersive_part_is_odd(self):
        d = np.linspace(0.1, 30, 50)
        v = complex_voigt(d, 0.08, 0.375)
        w = complex_voigt(-d, 0.08, 0.375)
        np.testing.assert_allclose(v.real, -w.real, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(v.imag, w.imag, rtol=1e-12)


class TestSusceptibility:
    def test_peak_normalisation(self):
        m = SusceptibilityModel(lines=((0.0, 1.0),), peak_optical_depth=10.0)
        assert susceptibility(m, 0.0).imag == pytest.approx(10.0, rel=1e-12)

    def test_empty(self):
        assert np.all(susceptibility(EMPTY, np.linspace(-5, 5, 11)) == 0)

    def test_far_detuned_dispersion(self):
        # Far from resonance the Voigt reduces to a Lorentzian: Re/Im -> -2 delta / hom
        m = SusceptibilityModel(lines=((0.0, 1.0),))
        chi = susceptibility(m, 40.0)
        assert chi.real / chi.imag == pytest.approx(-2 * 40.0 / m.homogeneous_fwhm, rel=2e-3)

    @pytest.mark.parametrize("kw", [dict(lines=((0, 0.8), (9.2, 0.5))), dict(doppler_fwhm=0),
                                    dict(peak_optical_depth=-1)])
    def test_domain(self, kw):
        with pytest.raises(DomainError):
            SusceptibilityModel(**kw)


class TestEmptyCavity:
    def test_matched_lossless_peak_is_unity(self):
        cav = BirefringentCavity()
        nu = 3 * cav.fsr
        assert transmission(cav, EMPTY, nu) == pytest.approx(1.0, abs=1e-9)

    @given(st.floats(0.3, 0.999), st.integers(-3, 6))
    @settings(deadline=None)
    def test_peak_unity_property(self, r, k):
        cav = BirefringentCavity(r1=r, r2=r)
        assert transmission(cav, EMPTY, k * cav.fsr) == pytest.approx(1.0, abs=1e-9)

    def test_fringe_period(self):
        cav = BirefringentCavity()
        res = spectrum(cav, EMPTY, np.linspace(-5, 32, 20001))
        peaks = res.resonances["signal"]
        period = np.mean(np.diff(peaks))
        assert period == pytest.approx(SPEED_OF_LIGHT_MM_GHZ / cav.roundtrip_length, rel=1e-3)

    @pytest.mark.parametrize("r, loss", [(0.86, 0.0), (0.86, 0.3), (0.95, 0.1), (0.5, 0.0)])
    def test_visibility_vs_airy(self, r, loss):
        cav = BirefringentCavity(r1=r, r2=r, passive_loss={"signal": loss})
        fsr = cav.fsr
        # grid containing exact resonance and anti-resonance
        grid = np.linspace(0, fsr, 4001)
        res = spectrum(cav, EMPTY, grid)
        rho = r * r * (1 - loss)
        closed = ((1 + rho) ** 2 - (1 - rho) ** 2) / ((1 + rho) ** 2 + (1 - rho) ** 2)
        assert visibility(res, (0, fsr)) == pytest.approx(closed, abs=1e-4)
        assert airy_visibility(rho) == pytest.approx(closed, abs=1e-12)

    def test_field_visibility_unconvolved(self):
        cav = BirefringentCavity()
        assert field_visibility(cav, EMPTY, NU_S, "signal", 0.0) == pytest.approx(
            airy_visibility(0.86**2), abs=1e-4)

    def test_probe_convolution_reduces_visibility(self):
        cav = BirefringentCavity()
        v0 = field_visibility(cav, EMPTY, NU_S, "signal", 0.0)
        v1 = field_visibility(cav, EMPTY, NU_S, "signal", 1.2)
        assert v1 < v0

    def test_birefringent_phase_shifts_control_only(self):
        cav = BirefringentCavity(birefringent_phase=math.pi)
        nu = 2 * cav.fsr
        assert transmission(cav, EMPTY, nu, "signal") == pytest.approx(1.0, abs=1e-9)
        rho = 0.86**2
        assert transmission(cav, EMPTY, nu, "control") == pytest.approx(
            (1 - 0.86**2) ** 2 / 0.86**2 * rho / (1 + rho) ** 2, rel=1e-9)

    def test_bad_channel(self):
        with pytest.raises(DomainError):
            transmission(BirefringentCavity(), EMPTY, 0.0, "antistokes")

    def test_bad_loss(self):
        with pytest.raises(DomainError):
            BirefringentCavity(passive_loss={"signal": 1.0})
        with pytest.raises(DomainError):
            BirefringentCavity(passive_loss={"idler": 0.1})

    def test_non_uniform_grid_with_probe(self):
        res = spectrum(BirefringentCavity(), EMPTY, np.geomspace(1, 30, 100))
        with pytest.raises(DomainError):
            visibility(res, (1, 30), probe_fwhm=1.0)

    def test_csv(self):
        res = spectrum(BirefringentCavity(), EMPTY, np.linspace(0, 1, 5))
        text = write_spectrum_csv(res)
        lines = text.strip().splitlines()
        assert lines[0] == "frequency_ghz,transmission_signal,transmission_control,transmission_antistokes"
        assert len(lines) == 6


class TestAtomicCavity:
    def test_atoms_absorb_near_resonance(self):
        cav, m = BirefringentCavity(), SusceptibilityModel()
        rho_line, _ = roundtrip_factor(cav, m, 0.0, "signal")
        rho_far, _ = roundtrip_factor(cav, m, NU_S, "signal")
        assert rho_line < 1e-10 < rho_far < 0.86**2

    def test_calibration_reproduces_visibilities(self):
        cav, m = BirefringentCavity(), SusceptibilityModel()
        loss_s, cav = calibrate_channel_loss(cav, m, "signal", NU_S, 0.86, 1.2)
        loss_c, cav = calibrate_channel_loss(cav, m, "control", NU_C, 0.71, 1.2)
        assert 0 < loss_s < loss_c < 1
        assert field_visibility(cav, m, NU_S, "signal", 1.2) == pytest.approx(0.86, abs=1e-6)
        assert field_visibility(cav, m, NU_C, "control", 1.2) == pytest.approx(0.71, abs=1e-6)
        # anti-Stokes shares the signal channel: a prediction, not a fit
        assert field_visibility(cav, m, NU_A, "signal", 1.2) == pytest.approx(0.86, abs=0.05)

    def test_unreachable_target(self):
        with pytest.raises(DomainError):
            calibrate_channel_loss(BirefringentCavity(), SusceptibilityModel(), "signal", NU_S, 0.999, 1.2)


class TestTripleResonance:
    def test_empty_cavity_antiresonance(self):
        cav = BirefringentCavity()
        res = find_triple_resonance(cav, EMPTY, NU_S, NU_C, NU_A)
        assert res.success
        rho = 0.86**2
        t_min = (1 - 0.86**2) ** 2 / 0.86**2 * rho / (1 + rho) ** 2
        assert res.t_signal == pytest.approx(1.0, abs=1e-6)
        assert res.t_control == pytest.approx(1.0, abs=1e-6)
        assert res.t_antistokes == pytest.approx(t_min, rel=1e-5)
        # theoretical optimum: 2 - T_min
        assert res.score == pytest.approx(2 - t_min, abs=1e-6)

    @pytest.mark.parametrize("model", [EMPTY, SusceptibilityModel()])
    def test_refined_not_worse_than_dense_grid(self, model):
        cav = BirefringentCavity(passive_loss={"signal": 0.1, "control": 0.2})
        res = find_triple_resonance(cav, model, NU_S, NU_C, NU_A)
        wl = cav.signal_wavelength_nm(NU_S)
        offsets = np.arange(1024) * wl / 1024
        phases = np.arange(1024) * 2 * np.pi / 1024
        obj, t_s, _, _ = triple_resonance_objective(cav, model, NU_S, NU_C, NU_A, offsets, phases)
        assert res.score >= obj.max() - 1e-3

    def test_objective_matches_transmission(self):
        cav, m = BirefringentCavity(passive_loss={"signal": 0.1}), SusceptibilityModel()
        obj, t_s, t_c, t_a = triple_resonance_objective(cav, m, NU_S, NU_C, NU_A, [10.0], [0.5])
        moved = replace(cav, length_offset_nm=10.0, birefringent_phase=0.5)
        assert t_s[0] == pytest.approx(transmission(moved, m, NU_S, "signal"), rel=1e-10)
        assert t_c[0, 0] == pytest.approx(transmission(moved, m, NU_C, "control"), rel=1e-10)
        assert t_a[0] == pytest.approx(transmission(moved, m, NU_A, "signal"), rel=1e-10)

    def test_failure_reported(self):
        # a strongly absorbing signal channel can never reach half the empty-cavity peak
        m = SusceptibilityModel(lines=((NU_S, 1.0),), peak_optical_depth=50.0)
        res = find_triple_resonance(BirefringentCavity(), m, NU_S, NU_C, NU_A, grid=(32, 32))
        assert not res.success
        assert "signal transmission" in res.message
