import math

import numpy as np
import pytest

from utils.errors import InsufficientSignalError, InvalidParameterError
from utils.inference import (
    FitResult,
    ReleaseRecaptureCurve,
    fit_decay_length,
    fit_temperature,
    log_intensity_model,
    recapture_chi2,
    release_recapture_simulate,
    weighted_line_fit,
)
from utils.quantities import PhysicalConstants

from .conftest import DECAY_LENGTH, POWER, TEMPERATURE

RADII = np.linspace(150e-9, 3e-6, 40)
RELEASE_TIMES = np.linspace(0.0, 100e-6, 21)


def evanescent(r, decay_length=DECAY_LENGTH, power=POWER):
    return power / (math.pi * decay_length * r) * np.exp(-2 * r / decay_length)


def test_line_fit_recovers_exact_line():
    x = np.linspace(-3, 5, 9)
    line = weighted_line_fit(x, 2.0 + 3.0 * x)
    assert line.params["intercept"] == pytest.approx(2.0, abs=1e-12)
    assert line.params["slope"] == pytest.approx(3.0, abs=1e-12)
    assert line.std_errors["slope"] < 1e-12


def test_line_fit_weights_ignore_zero_weight_outlier():
    x = np.arange(6, dtype=float)
    y = 1.0 - 0.5 * x
    y[3] += 10.0
    weights = np.ones_like(x)
    weights[3] = 0.0
    assert weighted_line_fit(x, y, weights).params["slope"] == pytest.approx(-0.5, abs=1e-12)


def test_line_fit_degenerate_inputs():
    assert math.isnan(weighted_line_fit([0.0, 1.0], [1.0, 2.0]).std_errors["slope"])
    with pytest.raises(InsufficientSignalError):
        weighted_line_fit([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        weighted_line_fit([0.0, 1.0], [1.0, 2.0, 3.0])


def test_fit_result_rejects_negative_errors():
    with pytest.raises(InvalidParameterError):
        FitResult({"a": 1.0}, {"a": -1.0}, 0.0, 1, True)


def test_decay_length_noise_free():
    r = np.linspace(0.2e-6, 5e-6, 50)
    result = fit_decay_length(r, evanescent(r, 743.2e-9), POWER)
    assert result.params["decay_length"] == pytest.approx(743.2e-9, rel=1e-3)
    assert result.converged
    assert result.residual_norm < 1e-9


def test_decay_length_with_noise():
    rng = np.random.default_rng(4)
    noisy = evanescent(RADII) * np.exp(0.05 * rng.standard_normal(RADII.size))
    result = fit_decay_length(RADII, noisy, POWER)
    rho, se = result.params["decay_length"], result.std_errors["decay_length"]
    assert se > 0
    assert abs(rho - DECAY_LENGTH) <= 3 * se
    assert rho == pytest.approx(DECAY_LENGTH, rel=0.05)


def test_decay_length_is_a_stationary_point():
    rng = np.random.default_rng(8)
    noisy = evanescent(RADII) * np.exp(0.05 * rng.standard_normal(RADII.size))
    rho = fit_decay_length(RADII, noisy, POWER).params["decay_length"]

    def loss(log_rho):
        return float(np.sum((np.log(noisy) - log_intensity_model(RADII, math.exp(log_rho), POWER)) ** 2))

    h = 1e-6
    gradient = (loss(math.log(rho) + h) - loss(math.log(rho) - h)) / (2 * h)
    assert abs(gradient) < 1e-6


def test_free_prefactor_ignores_intensity_scale():
    base = fit_decay_length(RADII, evanescent(RADII, 1000e-9), free_prefactor=True)
    scaled = fit_decay_length(RADII, 7.0 * evanescent(RADII, 1000e-9), free_prefactor=True)
    assert base.params["decay_length"] == pytest.approx(1000e-9, rel=1e-6)
    assert scaled.params["decay_length"] == pytest.approx(base.params["decay_length"], rel=1e-9)
    assert scaled.params["log_prefactor"] - base.params["log_prefactor"] == pytest.approx(math.log(7.0), abs=1e-8)


def test_decay_length_unit_equivariance():
    si = fit_decay_length(RADII, evanescent(RADII), POWER)
    micrometres = fit_decay_length(RADII * 1e6, evanescent(RADII) * 1e-12, POWER)
    assert micrometres.params["decay_length"] == pytest.approx(si.params["decay_length"] * 1e6, rel=1e-6)


def test_decay_length_rejects_bad_samples():
    with pytest.raises(InvalidParameterError):
        fit_decay_length(RADII[:2], evanescent(RADII[:2]), POWER)
    intensity = evanescent(RADII)
    intensity[5] = -1.0
    with pytest.raises(InvalidParameterError):
        fit_decay_length(RADII, intensity, POWER)
    with pytest.raises(InvalidParameterError):
        fit_decay_length(RADII, evanescent(RADII))


def test_recapture_is_complete_without_release(trap, constants):
    curve = release_recapture_simulate(TEMPERATURE, trap, constants, [0.0, 10e-6], 2000, seed=3)
    assert curve.survival[0] == 1.0


def test_cold_atoms_are_recaptured(trap, constants):
    curve = release_recapture_simulate(0.0, trap, constants, RELEASE_TIMES, 500)
    assert np.all(curve.survival == 1.0)
    weightless = PhysicalConstants(gravity=0.0)
    long_times = np.linspace(0.0, 10e-3, 11)
    assert np.all(release_recapture_simulate(0.0, trap, weightless, long_times, 500).survival == 1.0)


def test_recapture_falls_with_release_time(trap, constants):
    curve = release_recapture_simulate(TEMPERATURE, trap, constants, RELEASE_TIMES, 5000, seed=5)
    assert np.all(np.diff(curve.survival) <= 0.002)
    assert curve.survival[-1] < 0.5


def test_recapture_falls_with_temperature(trap, constants):
    values = [
        release_recapture_simulate(t, trap, constants, [30e-6], 5000, seed=6).survival[0]
        for t in (10e-6, 40e-6, 100e-6)
    ]
    assert np.all(np.diff(values) <= 0.02)
    assert values[0] > values[-1]


def test_recapture_simulation_is_seeded(trap, constants):
    a = release_recapture_simulate(TEMPERATURE, trap, constants, RELEASE_TIMES, 1000, seed=9)
    b = release_recapture_simulate(TEMPERATURE, trap, constants, RELEASE_TIMES, 1000, seed=9)
    assert np.array_equal(a.survival, b.survival)


def test_recapture_rejects_bad_arguments(trap, constants):
    with pytest.raises(InvalidParameterError):
        release_recapture_simulate(-1e-6, trap, constants, RELEASE_TIMES, 100)
    with pytest.raises(InvalidParameterError):
        release_recapture_simulate(TEMPERATURE, trap, constants, RELEASE_TIMES, 0)
    with pytest.raises(InvalidParameterError):
        release_recapture_simulate(TEMPERATURE, trap, constants, [20e-6, 10e-6], 100)


def test_temperature_fit_needs_signal(trap, constants):
    flat = ReleaseRecaptureCurve(np.linspace(0, 40e-6, 5), np.full(5, 0.9), 1000)
    with pytest.raises(InsufficientSignalError):
        fit_temperature(flat, trap, constants)
    short = ReleaseRecaptureCurve([0.0, 50e-6], [1.0, 0.2], 1000)
    with pytest.raises(InsufficientSignalError):
        fit_temperature(short, trap, constants)


@pytest.mark.slow
def test_temperature_round_trip(trap, constants):
    observed = release_recapture_simulate(TEMPERATURE, trap, constants, RELEASE_TIMES, 10000, seed=1)
    result = fit_temperature(observed, trap, constants, bootstrap=5)
    t_hat = result.params["temperature"]
    assert t_hat == pytest.approx(TEMPERATURE, rel=0.15)
    assert result.std_errors["temperature"] > 0
    assert result.flags == []

    chi2 = recapture_chi2(observed, t_hat, trap, constants)[0]
    assert chi2 <= recapture_chi2(observed, 0.5 * t_hat, trap, constants)[0]
    assert chi2 <= recapture_chi2(observed, 2.0 * t_hat, trap, constants)[0]


@pytest.mark.slow
def test_temperature_fit_is_seed_robust(trap, constants):
    fits = [
        fit_temperature(
            release_recapture_simulate(TEMPERATURE, trap, constants, RELEASE_TIMES, 10000, seed=seed),
            trap, constants, bootstrap=10, workers=4,
        )
        for seed in (11, 12)
    ]
    estimates = [f.params["temperature"] for f in fits]
    errors = [f.std_errors["temperature"] for f in fits]
    assert min(errors) > 0
    assert abs(estimates[0] - estimates[1]) < 2 * max(errors)


@pytest.mark.slow
def test_cold_curve_hits_the_lower_bound(trap, constants):
    times = np.linspace(0.0, 1.5e-3, 16)
    observed = release_recapture_simulate(0.0, trap, constants, times, 2000)
    result = fit_temperature(observed, trap, constants, bootstrap=0)
    assert "at_lower_bound" in result.flags
    assert result.params["temperature"] == pytest.approx(1e-7, rel=0.06)
