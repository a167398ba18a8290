import logging
import math

import numpy as np
import pytest

from utils.errors import InsufficientSignalError, InvalidParameterError
from utils.fieldmodel import AnalyticEvanescentModel
from utils.heating import HeatingModel
from utils.scanmicroscope import (
    DeviceGeometry,
    LoadingModel,
    Rectangle,
    SurvivalMap,
    TweezerArray,
    aod_to_position,
    expected_pulse_survival,
    expected_survival,
    geometric_survival,
    half_loss_width,
    position_to_aod,
    row_survival,
    simulate_pulse_scan,
    simulate_scan,
    tilt_estimate,
    transport_profile,
)

from .conftest import DECAY_LENGTH, PULSE, TEMPERATURE, guide

SCAN = np.linspace(-4e-6, 4e-6, 81)


def single_site(**kwargs):
    return TweezerArray(rows=1, cols=1, pitch=5e-6, **kwargs)


def test_aod_calibration():
    array = single_site(aod_calibration=0.5e-12)
    assert aod_to_position(0.0, array) == 0.0
    assert aod_to_position(2e6, array) == pytest.approx(1.0e-6, rel=1e-15)
    f = np.array([-3.3e6, 0.7e6, 12.5e6])
    assert np.allclose(position_to_aod(aod_to_position(f, array), array), f, rtol=1e-15, atol=0)


def test_far_from_structure_survives():
    assert geometric_survival([10e-6, 0.0, 0.0], guide(), 1.2e-6) == pytest.approx(1.0, abs=1e-9)


def test_centred_on_large_element_is_lost():
    plate = DeviceGeometry((Rectangle("plate", 0.0, 0.0, 100e-6, 100e-6, 1e-6),))
    assert geometric_survival([0.0, 0.0, 0.0], plate, 1.2e-6) == pytest.approx(0.0, abs=1e-9)
    assert geometric_survival([0.0, 0.0, 0.0], plate, 1.2e-6, occlusion_tolerance=1.0) == pytest.approx(0.0, abs=1e-9)


def test_bare_occlusion_law_on_a_narrow_guide():
    # A 180 nm strip intercepts at most ~12 % of a 1.2 um tweezer
    bare = geometric_survival([0.0, 0.0, 0.0], guide(), 1.2e-6, occlusion_tolerance=1.0)
    assert bare == pytest.approx(1 - 0.18 / 1.2 * math.sqrt(2 / math.pi), abs=2e-3)


def test_translation_covariance():
    geometry = DeviceGeometry((Rectangle("a", 0.3e-6, -1e-6, 0.4e-6, 2e-6, 1e-7), Rectangle("b", 2e-6, 1e-6, 1e-6, 0.5e-6, 1e-7)))
    shift = np.array([3.7e-6, -2.2e-6])
    moved = DeviceGeometry(
        tuple(Rectangle(e.name, e.cx + shift[0], e.cy + shift[1], e.width, e.length, e.thickness) for e in geometry.elements),
        guide_center=tuple(np.asarray(geometry.guide_center) + shift),
    )
    site = np.array([1.1e-6, 0.4e-6, 0.0])
    moved_site = site + np.append(shift, 0.0)
    assert geometric_survival(moved_site, moved, 1.2e-6) == pytest.approx(geometric_survival(site, geometry, 1.2e-6), abs=1e-12)


def test_half_loss_width_of_a_narrow_guide():
    x = np.linspace(-4e-6, 4e-6, 801)
    sites = np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=-1)
    survival = geometric_survival(sites, guide(), 1.2e-6)
    width = half_loss_width(x, survival)
    assert 2.4e-6 <= width <= 3.0e-6
    # Close to twice the waist plus the guide width
    assert width == pytest.approx(2 * 1.2e-6 + 180e-9, rel=0.05)


def test_loss_width_grows_with_waist():
    x = np.linspace(-8e-6, 8e-6, 1601)
    sites = np.stack([x, np.zeros_like(x), np.zeros_like(x)], axis=-1)
    widths = [half_loss_width(x, geometric_survival(sites, guide(), w)) for w in np.linspace(0.6e-6, 2.4e-6, 7)]
    assert np.all(np.diff(widths) > 0)


def test_side_offset_defocuses_one_side():
    plain = guide()
    offset = DeviceGeometry(plain.elements, guide_center=(0.0, 0.0), side_offsets=(0.0, 6e-6))
    left = geometric_survival([-1.5e-6, 0.0, 0.0], offset, 1.2e-6)
    right = geometric_survival([1.5e-6, 0.0, 0.0], offset, 1.2e-6)
    assert left == pytest.approx(geometric_survival([-1.5e-6, 0.0, 0.0], plain, 1.2e-6))
    assert right != pytest.approx(left)


def test_geometry_validation():
    with pytest.raises(InvalidParameterError):
        DeviceGeometry(tilt=0.2)
    with pytest.raises(InvalidParameterError):
        Rectangle("bad", 0.0, 0.0, -1e-6, 1e-6, 1e-7)
    with pytest.raises(InvalidParameterError):
        LoadingModel(fill_probability=1.5)
    with pytest.raises(InvalidParameterError):
        LoadingModel(shots=0)


def test_perfect_loading_far_from_structure():
    array = TweezerArray(rows=2, cols=2, pitch=5e-6, origin=(20e-6, 0.0, 0.0))
    scan = simulate_scan(guide(), array, SCAN, loading=LoadingModel(1.0, 1.0, 50, seed=3))
    assert np.all(scan.per_site_survival == 1.0)
    assert np.all(scan.shot_counts == 50)
    assert scan.mean_yield == 1.0


def test_simulation_converges_to_geometric_survival():
    array = single_site()
    coords = np.linspace(-2e-6, 2e-6, 9)
    scan = simulate_scan(guide(), array, coords, loading=LoadingModel(1.0, 1.0, 10000, seed=11))
    expected = expected_survival(guide(), array, coords)[0]
    sigma = np.sqrt(np.maximum(expected * (1 - expected), 1e-4) / 10000)
    assert np.all(np.abs(scan.per_site_survival[0] - expected) <= 4 * sigma)


def test_simulated_loss_width():
    array = single_site()
    scan = simulate_scan(guide(), array, SCAN, loading=LoadingModel(1.0, 1.0, 400, seed=5))
    width = half_loss_width(scan.displacements, scan.per_site_survival[0])
    assert 2.4e-6 <= width <= 3.0e-6


def test_scan_is_identical_across_worker_counts():
    array = TweezerArray(rows=3, cols=2, pitch=5e-6)
    loading = LoadingModel(0.5, 0.92, 40, seed=7)
    maps = [simulate_scan(guide(0.5), array, SCAN, loading=loading, workers=w) for w in (1, 4, 8)]
    for other in maps[1:]:
        assert np.array_equal(maps[0].per_site_survival, other.per_site_survival, equal_nan=True)
        assert np.array_equal(maps[0].shot_counts, other.shot_counts)


def test_scan_in_aod_units():
    array = single_site(aod_calibration=0.5e-12)
    freqs = np.linspace(-8e6, 8e6, 17)
    scan = simulate_scan(guide(), array, freqs, loading=LoadingModel(1.0, 1.0, 10), scan_unit="Hz")
    assert np.allclose(scan.displacements, freqs * 0.5e-12)
    with pytest.raises(InvalidParameterError):
        simulate_scan(guide(), array, freqs, scan_unit="furlong")


def test_light_widens_the_loss_region(operating_model):
    array = single_site()
    x = np.linspace(-8e-6, 8e-6, 161)
    dark = expected_survival(guide(), array, x)[0]
    lit = expected_survival(guide(), array, x, heating=operating_model)[0]
    assert np.all(lit <= dark + 1e-12)
    assert half_loss_width(x, lit) > half_loss_width(x, dark) + 1e-6


def test_losses_factorize_without_structure(operating_model):
    array = TweezerArray(rows=1, cols=4, pitch=1e-6, origin=(1.5e-6, 0.0, 0.0))
    loading = LoadingModel(0.5, 1.0, 4000, seed=21)
    scan = simulate_scan(DeviceGeometry(), array, [0.0], heating=operating_model, loading=loading)
    predicted = np.array([operating_model.survival_at(x).survival for x in array.sites()[:, 0]])
    loaded = scan.shot_counts[:, 0]
    sigma = np.sqrt(np.maximum(predicted * (1 - predicted), 1e-3) / loaded)
    assert np.all(np.abs(scan.per_site_survival[:, 0] - predicted) <= 4 * sigma)


PULSES = np.array([0.0, 2e-3, 4e-3, 8e-3, 12e-3, 16e-3, 20e-3])


def guide_along_rows():
    """The guide runs along x between the two central rows of a 4 x 8 array."""
    element = Rectangle("guide", 0.0, 0.0, 200e-6, 180e-9, 200e-9)
    return DeviceGeometry((element,), waveguide_axis=(1.0, 0.0), guide_center=(0.0, 0.0))


def pulse_array():
    return TweezerArray(rows=4, cols=8, pitch=5e-6, origin=(-17.5e-6, -7.5e-6, 0.0))


@pytest.fixture(scope="module")
def nanowatt_model(sat, trap, constants):
    return HeatingModel(AnalyticEvanescentModel(1e-9, DECAY_LENGTH), sat, trap, TEMPERATURE, PULSE, constants)


def test_pulse_survival_is_symmetric_about_the_guide(nanowatt_model):
    rows = expected_pulse_survival(guide_along_rows(), pulse_array(), PULSES, nanowatt_model).reshape(4, 8, -1)
    assert np.allclose(rows[1], rows[2], rtol=1e-9, atol=1e-12)
    assert np.allclose(rows[0], rows[3], rtol=1e-9, atol=1e-12)
    assert np.ptp(rows[0], axis=-1).max() < 1e-4
    assert np.all(np.diff(rows[1], axis=-1) <= 1e-12)
    assert np.all(rows[1][:, -1] < 0.5 * rows[1][:, 0])


def test_rows_next_to_the_guide_lose_atoms_together(nanowatt_model):
    loading = LoadingModel(0.5, 0.92, 200, seed=5)
    scan = simulate_pulse_scan(guide_along_rows(), pulse_array(), PULSES, nanowatt_model, loading=loading)
    assert scan.coordinate_unit == "s"
    rows, pooled, counts = row_survival(scan)
    assert rows.tolist() == [0, 1, 2, 3]

    expected = expected_pulse_survival(guide_along_rows(), pulse_array(), PULSES, nanowatt_model)
    predicted = 0.92 * expected.reshape(4, 8, -1).mean(axis=1)
    sigma = np.sqrt(np.maximum(predicted * (1 - predicted), 1e-3) / counts)
    assert np.all(np.abs(pooled - predicted) <= 4 * sigma)
    assert np.all(pooled[[1, 2], -1] < 0.2)
    assert np.all(pooled[[0, 3]] > 0.85)


def test_pulse_scan_is_identical_across_worker_counts(nanowatt_model):
    loading = LoadingModel(0.5, 0.92, 30, seed=2)
    maps = [
        simulate_pulse_scan(guide_along_rows(), pulse_array(), PULSES[:3], nanowatt_model, loading, workers=w)
        for w in (1, 4)
    ]
    assert np.array_equal(maps[0].per_site_survival, maps[1].per_site_survival, equal_nan=True)
    assert np.array_equal(maps[0].shot_counts, maps[1].shot_counts)


def test_pulse_scan_rejects_bad_input(nanowatt_model):
    with pytest.raises(InvalidParameterError):
        expected_pulse_survival(guide_along_rows(), pulse_array(), [-1e-3], nanowatt_model)
    with pytest.raises(InvalidParameterError):
        expected_pulse_survival(guide_along_rows(), pulse_array(), PULSES, None)


def _noise_free_map(geometry, array, coords):
    survival = expected_survival(geometry, array, coords)
    return SurvivalMap(
        scan_coordinates=coords,
        per_site_survival=survival,
        shot_counts=np.ones_like(survival, dtype=int),
        site_index=array.site_index(),
        site_positions=array.sites(),
        displacements=coords,
    )


def test_tilt_of_an_aligned_guide_is_zero():
    array = TweezerArray(rows=8, cols=1, pitch=5e-6)
    result = tilt_estimate(_noise_free_map(guide(0.0, length=1e-3), array, SCAN), array)
    assert abs(result.params["tilt"]) < 1e-9


def test_tilt_recovery():
    array = TweezerArray(rows=8, cols=1, pitch=5e-6)
    scan = simulate_scan(guide(0.5), array, SCAN, loading=LoadingModel(0.5, 0.92, 500, seed=2024))
    result = tilt_estimate(scan, array)
    assert math.degrees(result.params["tilt"]) == pytest.approx(0.5, rel=0.1)
    assert result.std_errors["tilt"] > 0


def test_tilt_invariant_under_site_relabelling():
    array = TweezerArray(rows=6, cols=1, pitch=5e-6)
    scan = simulate_scan(guide(0.4), array, SCAN, loading=LoadingModel(0.5, 0.92, 100, seed=9))
    order = np.arange(array.n_sites)[::-1]
    shuffled = SurvivalMap(
        scan_coordinates=scan.scan_coordinates,
        per_site_survival=scan.per_site_survival[order],
        shot_counts=scan.shot_counts[order],
        site_index=[scan.site_index[i] for i in order],
        site_positions=scan.site_positions[order],
        displacements=scan.displacements,
    )
    assert tilt_estimate(shuffled, array).params["tilt"] == pytest.approx(
        tilt_estimate(scan, array).params["tilt"], abs=1e-12
    )


def test_tilt_needs_the_feature_in_every_row():
    array = TweezerArray(rows=3, cols=1, pitch=5e-6)
    blank = _noise_free_map(DeviceGeometry(), array, SCAN)
    with pytest.raises(InsufficientSignalError, match="row 0"):
        tilt_estimate(blank, array)
    one_row = TweezerArray(rows=1, cols=1, pitch=5e-6)
    with pytest.raises(InsufficientSignalError):
        tilt_estimate(_noise_free_map(guide(), one_row, SCAN), one_row)


def test_transport_at_rest_for_zero_distance():
    profile = transport_profile(0.0, 0.2, 5.0, 10e-3, 1e-3)
    assert len(profile.samples) == 1
    assert profile.samples.iloc[0].tolist() == [0.0, 0.0, 0.0, 0.0]


def test_transport_to_the_loading_region():
    distance = 3.6e-3
    profile = transport_profile(distance, 0.2, 5.0, 10e-3, 1e-4)
    samples = profile.samples
    assert samples["position_m"].iloc[-1] == pytest.approx(distance, abs=1e-12)
    assert samples["velocity_m_s"].iloc[-1] == 0.0
    assert np.all(np.abs(samples["velocity_m_s"]) <= 0.2 + 1e-12)
    assert np.all(np.abs(samples["acceleration_m_s2"]) <= 5.0 + 1e-12)
    t = samples["time_s"].to_numpy()
    forward, _, _ = profile.at(t)
    backward, _, _ = profile.at(profile.duration - t)
    assert np.allclose(forward + backward, distance, rtol=0, atol=1e-12)


def test_long_move_cruises_at_v_max():
    profile = transport_profile(0.05, 0.2, 5.0, 10e-3, 1e-3)
    assert profile.v_peak == 0.2
    assert profile.samples["velocity_m_s"].max() == pytest.approx(0.2, rel=1e-9)
    assert profile.samples["position_m"].iloc[-1] == pytest.approx(0.05, abs=1e-12)


def test_short_move_reduces_acceleration(caplog):
    with caplog.at_level(logging.WARNING, logger="utils.scanmicroscope"):
        profile = transport_profile(1e-6, 0.2, 5.0, 10e-3, 1e-3)
    assert profile.a_peak < 5.0
    assert "Peak acceleration reduced" in caplog.text
    assert profile.samples["position_m"].iloc[-1] == pytest.approx(1e-6, abs=1e-12)


def test_short_move_lowers_the_cruise_velocity(caplog):
    with caplog.at_level(logging.WARNING, logger="utils.scanmicroscope"):
        profile = transport_profile(3.6e-3, 0.2, 5.0, 10e-3, 1e-3)
    assert profile.v_peak == pytest.approx(0.1115, abs=1e-3)
    assert profile.a_peak == 5.0
    assert "Peak velocity reduced" in caplog.text
    assert "Peak acceleration reduced" not in caplog.text


def test_transport_rejects_bad_parameters():
    with pytest.raises(InvalidParameterError):
        transport_profile(-1.0, 0.2, 5.0, 10e-3, 1e-3)
    with pytest.raises(InvalidParameterError):
        transport_profile(1e-3, 0.0, 5.0, 10e-3, 1e-3)
