import math

import numpy as np
import pytest

from utils.cleaning import (
    DATA_DIR,
    load_decay_samples,
    load_geometry_file,
    load_mode_file,
    load_recapture_curve,
    load_survival_map,
)
from utils.errors import ParseError
from utils.merging import write_survival_map
from utils.scanmicroscope import LoadingModel, TweezerArray, simulate_scan

from .conftest import guide


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_mode_file_grid(tmp_path):
    rows = ["y_nm,z_nm,intensity_per_W"]
    for y in (100, 200, 300):
        for z in (-50, 0, 50):
            rows.append(f"{y},{z},{1e12 * math.exp(-y / 400)}")
    mode = load_mode_file(write(tmp_path / "mode.csv", "\n".join(rows) + "\n"))
    assert mode.y_grid.tolist() == pytest.approx([100e-9, 200e-9, 300e-9])
    assert mode.intensity.shape == (3, 3)


def test_mode_file_missing_node(tmp_path):
    text = "y_nm,z_nm,intensity_per_W\n100,0,1\n100,50,1\n200,0,1\n"
    with pytest.raises(ParseError, match="incomplete"):
        load_mode_file(write(tmp_path / "mode.csv", text))


def test_mode_file_non_numeric_row(tmp_path):
    text = "y_nm,z_nm,intensity_per_W\n100,0,1\n100,50,oops\n"
    with pytest.raises(ParseError) as info:
        load_mode_file(write(tmp_path / "mode.csv", text))
    assert info.value.row == 2


def test_geometry_file(tmp_path):
    text = (
        "# tilt_deg=0.5\n"
        "# guide_center_um=0,0\n"
        "# offset_right_um=2\n"
        "name,cx_um,cy_um,width_um,length_um,thickness_um\n"
        "guide,0,17.5,0.18,200,0.2\n"
        "pad,10,40,8,8,0.2\n"
    )
    geometry = load_geometry_file(write(tmp_path / "device.csv", text))
    assert [e.name for e in geometry.elements] == ["guide", "pad"]
    assert geometry.tilt == pytest.approx(math.radians(0.5))
    assert geometry.elements[0].width == pytest.approx(180e-9)
    assert geometry.side_offsets == pytest.approx((0.0, 2e-6))


def test_geometry_without_elements(tmp_path):
    text = "# tilt_deg=0\nname,cx_um,cy_um,width_um,length_um,thickness_um\n"
    assert load_geometry_file(write(tmp_path / "empty.csv", text)).elements == ()


def test_geometry_needs_tilt(tmp_path):
    text = "name,cx_um,cy_um,width_um,length_um,thickness_um\nguide,0,0,0.18,10,0.2\n"
    with pytest.raises(ParseError, match="tilt_deg"):
        load_geometry_file(write(tmp_path / "device.csv", text))


def test_geometry_bad_element_reports_row(tmp_path):
    text = (
        "# tilt_deg=0\n"
        "name,cx_um,cy_um,width_um,length_um,thickness_um\n"
        "guide,0,0,0.18,10,0.2\n"
        "broken,0,0,-1,10,0.2\n"
    )
    with pytest.raises(ParseError) as info:
        load_geometry_file(write(tmp_path / "device.csv", text))
    assert info.value.row == 2


def test_decay_samples(tmp_path):
    text = "r_nm,intensity_W_m2,weight\n200,5e6,1\n400,2e6,0.5\n800,4e5,1\n"
    r, intensity, weights = load_decay_samples(write(tmp_path / "decay.csv", text))
    assert r.tolist() == pytest.approx([200e-9, 400e-9, 800e-9])
    assert intensity.tolist() == [5e6, 2e6, 4e5]
    assert weights.tolist() == [1.0, 0.5, 1.0]


def test_decay_samples_reject_zero_intensity(tmp_path):
    text = "r_nm,intensity_W_m2\n200,5e6\n400,0\n"
    with pytest.raises(ParseError) as info:
        load_decay_samples(write(tmp_path / "decay.csv", text))
    assert info.value.row == 2


def test_empty_and_missing_files(tmp_path):
    with pytest.raises(ParseError, match="empty"):
        load_decay_samples(write(tmp_path / "empty.csv", ""))
    with pytest.raises(ParseError, match="no data rows"):
        load_decay_samples(write(tmp_path / "header.csv", "r_nm,intensity_W_m2\n"))
    with pytest.raises(ParseError, match="missing column"):
        load_decay_samples(write(tmp_path / "wrong.csv", "r,I\n1,2\n"))
    with pytest.raises(ParseError, match="not found"):
        load_decay_samples(tmp_path / "absent.csv")


def test_recapture_curve_uses_shot_column(tmp_path):
    text = "release_time_us,survival,shots\n0,1.0,200\n20,0.7,200\n40,0.3,150\n"
    curve = load_recapture_curve(write(tmp_path / "rr.csv", text))
    assert curve.n_samples == 150
    assert curve.release_times.tolist() == pytest.approx([0.0, 20e-6, 40e-6])


def test_recapture_curve_checks_rows(tmp_path):
    with pytest.raises(ParseError):
        load_recapture_curve(write(tmp_path / "rr.csv", "release_time_us,survival\n0,1\n10,0.5\n"))
    out_of_range = "release_time_us,survival\n0,1\n10,1.2\n"
    with pytest.raises(ParseError) as info:
        load_recapture_curve(write(tmp_path / "bad.csv", out_of_range), n_samples=100)
    assert info.value.row == 2


def test_survival_map_reads_back(tmp_path):
    array = TweezerArray(rows=2, cols=2, pitch=5e-6)
    coords = np.linspace(-2e-6, 2e-6, 9)
    scan = simulate_scan(guide(), array, coords, loading=LoadingModel(0.5, 0.9, 30, seed=4))
    path = write_survival_map(scan, tmp_path / "survival_map.csv")

    loaded = load_survival_map(path, array)
    assert loaded.coordinate_unit == "um"
    assert np.allclose(loaded.displacements, coords, rtol=0, atol=1e-15)
    assert np.array_equal(loaded.shot_counts, scan.shot_counts)
    assert np.allclose(loaded.per_site_survival, scan.per_site_survival, rtol=1e-9, equal_nan=True)


def test_survival_map_site_outside_array(tmp_path):
    text = "site_row,site_col,coordinate,survival,shots\n0,0,0.0,1.0,10\n3,0,0.0,1.0,10\n"
    with pytest.raises(ParseError) as info:
        load_survival_map(write(tmp_path / "map.csv", text), TweezerArray(rows=2, cols=1, pitch=5e-6))
    assert info.value.row == 2


def test_shipped_examples_load():
    geometry = load_geometry_file(DATA_DIR / "device_guide.csv")
    assert geometry.elements
    r, intensity, _ = load_decay_samples(DATA_DIR / "decay_samples.csv")
    assert r.size == intensity.size >= 3
