"""Physical constants and reference experimental values.

Units throughout the package: GHz, ns, nJ, mm unless a name says otherwise.
"""

SPEED_OF_LIGHT = 299_792_458.0  # m/s
SPEED_OF_LIGHT_MM_GHZ = SPEED_OF_LIGHT * 1e3 / 1e9  # mm * GHz

# Cs D2 line, F=4 ground state -> 6P3/2 manifold
CS_D2_FREQUENCY_GHZ = 351_725.718
CS_HYPERFINE_GHZ = 9.2
SIGNAL_WAVELENGTH_NM = 852.0
HENE_WAVELENGTH_NM = 632.8

# Reference operating point of the cavity memory experiment.
REFERENCE = {
    "optical_depth": 300.0,
    "linewidth_ghz": 0.25,
    "pressure_fwhm_ghz": 0.08,
    "doppler_fwhm_ghz": 0.375,
    "spin_polarization": 0.8,
    "signal_detuning_ghz": 15.2,
    "hyperfine_ghz": CS_HYPERFINE_GHZ,
    "reflectivity": 0.86,
    "loss_signal": 0.6,
    "loss_antistokes": 0.6,
    "loss_control": 0.4,
    "visibility": 0.90,
    "w_per_nj_ghz": 110.0,
    "bandwidth_ghz": 1.2,
    "finesse_signal": 7.0,
    "finesse_control": 4.0,
    "lifetime_ns": 95.0,
}

# Measured values used for comparison rows in reports.
MEASURED = {
    "efficiency": (0.095, 0.005),
    "noise_floor": (0.015, 0.002),
    "mu1": (0.17, 0.02),
    "mu1_free_space": 0.5,
    "mu1_ideal": 0.005,
    "fwm_component": (0.006, 0.003),
    "noise_prediction": 0.005,
    "lifetime_ns": (95.0, 7.0),
    "visibility_signal": (0.86, 0.02),
    "visibility_control": (0.71, 0.05),
    "visibility_antistokes": (0.86, 0.05),
    "fsr0_ghz": 36.8,
    "length0_mm": 8.1,
    "fsr2_ghz": 7.36,
    "length2_mm": 40.8,
    "suppression_quoted": 0.24,
    "energy_reduction_realized": 10.0,
}
