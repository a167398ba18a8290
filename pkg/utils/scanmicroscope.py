"""
Scanning Atom Microscope
========================
Device geometry, tweezer-array kinematics and Monte Carlo simulation of
position and pulse-duration scans: atoms are loaded, transported to the
chip, displaced across the structure or held next to the lit guide, and
counted again. Loss comes from the tweezer light being
intercepted by the structure (geometric loss) and, with light in the guide,
from recoil heating.

Frames: array coordinates (x, y, z) are those of the tweezer array, with the
scan displacing every site along x. The device frame is rotated by `tilt`
about z with respect to the array frame; the guide runs along
`waveguide_axis` (device frame, default +y).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import erf

from utils.errors import InsufficientSignalError, InvalidParameterError, OutOfDomainError
from utils.inference import FitResult, weighted_line_fit
from utils.quantities import TRAP_WAIST, TWEEZER_WAVELENGTH

logger = logging.getLogger(__name__)

# Intercepted power fraction at which an atom is certainly lost
OCCLUSION_TOLERANCE = 0.025
MAX_TILT = 0.1
# Cells whose geometric survival is below this are inside the loss region
LOSS_REGION_LEVEL = 0.5

# Random stream stages
STAGE_LOAD, STAGE_TRANSPORT, STAGE_SURVIVE = 0, 1, 2


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned element in the device frame: width along x, length along y."""

    name: str
    cx: float
    cy: float
    width: float
    length: float
    thickness: float

    def __post_init__(self):
        for attr in ("width", "length", "thickness"):
            if not getattr(self, attr) > 0:
                raise InvalidParameterError(f"element '{self.name}': {attr} must be > 0")


@dataclass(frozen=True)
class DeviceGeometry:
    """
    Suspended structure seen from above.

    side_offsets: out-of-plane offsets (m) of the tweezer focus for sites on
        the negative / positive side of the guide, used to reproduce a
        left/right loss asymmetry.
    guide_center: a point on the guide centre line; defaults to the centre
        of the first element.
    """

    elements: tuple = ()
    tilt: float = 0.0
    waveguide_axis: tuple = (0.0, 1.0)
    guide_center: tuple = None
    side_offsets: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not abs(self.tilt) < MAX_TILT:
            raise InvalidParameterError(f"|tilt| must be < {MAX_TILT} rad, got {self.tilt!r}")
        axis = np.asarray(self.waveguide_axis, dtype=float)
        norm = np.hypot(*axis)
        if norm == 0:
            raise InvalidParameterError("waveguide_axis must be non-zero")
        object.__setattr__(self, "waveguide_axis", tuple(axis / norm))
        if self.guide_center is None:
            centre = (self.elements[0].cx, self.elements[0].cy) if self.elements else (0.0, 0.0)
            object.__setattr__(self, "guide_center", centre)
        object.__setattr__(self, "side_offsets", tuple(float(v) for v in self.side_offsets))

    def to_device(self, points):
        """Rotate array-frame xy points into the device frame."""
        points = np.asarray(points, dtype=float)
        c, s = math.cos(self.tilt), math.sin(self.tilt)
        x, y = points[..., 0], points[..., 1]
        return np.stack([c * x + s * y, -s * x + c * y], axis=-1)

    def guide_offset(self, points):
        """Signed in-plane distance of array-frame points from the guide centre line."""
        device = self.to_device(points) - np.asarray(self.guide_center)
        ax, ay = self.waveguide_axis
        return device[..., 0] * ay - device[..., 1] * ax


@dataclass(frozen=True, eq=False)
class TweezerArray:
    """
    Rectangular tweezer array. Row r, column c sits at
    origin + (c·pitch, r·pitch, 0) + site_offsets[r·cols + c].
    aod_calibration converts AOD frequency offsets (Hz) into displacement (m).
    """

    rows: int
    cols: int
    pitch: float
    origin: tuple = (0.0, 0.0, 0.0)
    waist: float = TRAP_WAIST
    aod_calibration: float = 0.5e-12
    site_offsets: np.ndarray = None
    occlusion_tolerance: float = OCCLUSION_TOLERANCE
    wavelength: float = TWEEZER_WAVELENGTH

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidParameterError("array needs at least one row and one column")
        for attr in ("pitch", "waist", "aod_calibration", "wavelength"):
            if not getattr(self, attr) > 0:
                raise InvalidParameterError(f"{attr} must be > 0, got {getattr(self, attr)!r}")
        if not 0 < self.occlusion_tolerance <= 1:
            raise InvalidParameterError("occlusion_tolerance must be in (0, 1]")
        n_sites = self.rows * self.cols
        offsets = np.zeros((n_sites, 3)) if self.site_offsets is None else np.asarray(self.site_offsets, dtype=float)
        if offsets.shape != (n_sites, 3):
            raise InvalidParameterError(f"site_offsets must have shape {(n_sites, 3)}")
        object.__setattr__(self, "site_offsets", offsets)

    @property
    def n_sites(self):
        return self.rows * self.cols

    def site_index(self):
        """(row, col) of every site in row-major order."""
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def sites(self):
        index = np.array(self.site_index(), dtype=float).reshape(-1, 2)
        base = np.asarray(self.origin, dtype=float)
        grid = np.stack([index[:, 1] * self.pitch, index[:, 0] * self.pitch, np.zeros(len(index))], axis=-1)
        return base + grid + self.site_offsets


@dataclass(frozen=True)
class LoadingModel:
    fill_probability: float = 0.5
    transport_survival: float = 0.92
    shots: int = 100
    seed: int = 0

    def __post_init__(self):
        for attr in ("fill_probability", "transport_survival"):
            value = getattr(self, attr)
            if not 0 <= value <= 1:
                raise InvalidParameterError(f"{attr} must be in [0, 1], got {value!r}")
        if int(self.shots) != self.shots or self.shots < 1:
            raise InvalidParameterError(f"shots must be an integer >= 1, got {self.shots!r}")
        if self.seed < 0:
            raise InvalidParameterError("seed must be >= 0")


@dataclass(frozen=True, eq=False)
class SurvivalMap:
    """
    Survival of every site versus scan coordinate.

    per_site_survival is conditioned on the site having been loaded;
    shot_counts holds the number of loaded shots per cell (cells with none
    are NaN). displacements are the scan coordinates in metres; a pulse
    scan (coordinate_unit "s") keeps its sites in place and stores zeros.
    """

    scan_coordinates: np.ndarray
    per_site_survival: np.ndarray
    shot_counts: np.ndarray
    site_index: list
    site_positions: np.ndarray
    displacements: np.ndarray
    coordinate_unit: str = "m"
    mean_yield: float = float("nan")

    def __post_init__(self):
        survival = np.asarray(self.per_site_survival, dtype=float)
        counts = np.asarray(self.shot_counts)
        if survival.shape != counts.shape:
            raise InvalidParameterError("survival and shot count grids differ in shape")
        finite = survival[np.isfinite(survival)]
        if np.any((finite < 0) | (finite > 1)):
            raise InvalidParameterError("survival entries must lie in [0, 1]")
        if np.any(counts < 0):
            raise InvalidParameterError("shot counts must be >= 0")


@dataclass(frozen=True, eq=False)
class MotionProfile:
    """Sampled jerk-limited transport move plus its analytic segment table."""

    samples: pd.DataFrame
    v_max: float
    a_max: float
    jerk_time: float
    a_peak: float
    v_peak: float
    duration: float
    segment_starts: np.ndarray = field(repr=False, default=None)
    segment_states: np.ndarray = field(repr=False, default=None)
    segment_jerks: np.ndarray = field(repr=False, default=None)

    def at(self, t):
        """Position, velocity and acceleration at arbitrary times."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, self.duration)
        if self.segment_starts is None:
            zeros = np.zeros_like(t)
            return zeros, zeros, zeros
        idx = np.clip(np.searchsorted(self.segment_starts, t, side="right") - 1, 0, len(self.segment_jerks) - 1)
        tau = t - self.segment_starts[idx]
        p0, v0, a0 = self.segment_states[idx].T
        jerk = self.segment_jerks[idx]
        position = p0 + v0 * tau + a0 * tau ** 2 / 2 + jerk * tau ** 3 / 6
        velocity = v0 + a0 * tau + jerk * tau ** 2 / 2
        acceleration = a0 + jerk * tau
        return position, velocity, acceleration


def aod_to_position(freq_offset, array):
    """Displacement (m) produced by an AOD frequency offset (Hz)."""
    return array.aod_calibration * np.asarray(freq_offset, dtype=float)


def position_to_aod(displacement, array):
    return np.asarray(displacement, dtype=float) / array.aod_calibration


def _effective_waist(waist, dz, wavelength):
    rayleigh = math.pi * waist ** 2 / wavelength
    return waist * np.sqrt(1.0 + (np.asarray(dz, dtype=float) / rayleigh) ** 2)


def occluded_fraction(site, geometry, waist, wavelength=TWEEZER_WAVELENGTH):
    """
    Fraction of the tweezer power falling on the structure: the Gaussian
    profile (1/e² radius `waist`) integrated over every element with erf,
    summed and capped at 1.
    """
    if not waist > 0:
        raise InvalidParameterError(f"waist must be > 0, got {waist!r}")
    site = np.asarray(site, dtype=float)
    xy = geometry.to_device(site)
    dz = site[..., 2] if site.shape[-1] > 2 else np.zeros(site.shape[:-1])
    if any(geometry.side_offsets):
        side = np.where(geometry.guide_offset(site) < 0, geometry.side_offsets[0], geometry.side_offsets[1])
        dz = dz + side
    w = _effective_waist(waist, dz, wavelength)
    scale = math.sqrt(2.0) / w
    x, y = xy[..., 0], xy[..., 1]
    overlap = np.zeros(np.shape(x))
    for element in geometry.elements:
        x0, x1 = element.cx - element.width / 2, element.cx + element.width / 2
        y0, y1 = element.cy - element.length / 2, element.cy + element.length / 2
        fx = erf((x1 - x) * scale) - erf((x0 - x) * scale)
        fy = erf((y1 - y) * scale) - erf((y0 - y) * scale)
        overlap = overlap + 0.25 * fx * fy
    return np.minimum(overlap, 1.0)


def geometric_survival(site, geometry, waist, occlusion_tolerance=OCCLUSION_TOLERANCE,
                       wavelength=TWEEZER_WAVELENGTH):
    """
    Survival of an atom whose tweezer is partly intercepted by the structure,
    max(0, 1 - O / occlusion_tolerance). A tolerance of 1 gives the bare
    1 - O law; the default reproduces a loss region set by the waist.
    """
    overlap = occluded_fraction(site, geometry, waist, wavelength)
    survival = np.clip(1.0 - overlap / occlusion_tolerance, 0.0, 1.0)
    return survival if survival.ndim else float(survival)


def _scan_positions(site, displacements):
    positions = np.repeat(site[None, :], len(displacements), axis=0)
    positions[:, 0] += displacements
    return positions


def _site_expectation(site_number, site, geometry, array, displacements, heating):
    positions = _scan_positions(site, displacements)
    geo = np.atleast_1d(geometric_survival(
        positions, geometry, array.waist, array.occlusion_tolerance, array.wavelength
    ))
    if heating is None:
        return geo
    offsets = geometry.guide_offset(positions)
    heat = np.ones_like(geo)
    for j, (y, z) in enumerate(zip(offsets, positions[:, 2])):
        if not heating.in_domain(y, z):
            if geo[j] < LOSS_REGION_LEVEL:
                continue
            raise OutOfDomainError(
                f"site {site_number} at displacement {displacements[j] * 1e6:.4f} um is outside the "
                f"field domain and outside the geometric loss region",
                site=site_number,
            )
        heat[j] = heating.survival_at(y, z).survival
    return geo * heat


def expected_survival(geometry, array, displacements, heating=None, workers=1):
    """
    Survival probability of a delivered atom for every (site, displacement),
    the product of geometric and heating survival.
    """
    displacements = np.asarray(displacements, dtype=float)
    sites = array.sites()

    def evaluate(i):
        return _site_expectation(i, sites[i], geometry, array, displacements, heating)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, range(len(sites))))
    else:
        rows = [evaluate(i) for i in range(len(sites))]
    return np.vstack(rows)


def _stream(seed, stage, site, cell):
    """Counter-based generator keyed by (seed, stage, site, scan cell)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stage, site, cell])))


def _simulate_site(site_number, probabilities, loading):
    n_cells = len(probabilities)
    survived = np.zeros(n_cells, dtype=np.int64)
    loaded = np.zeros(n_cells, dtype=np.int64)
    for j, p in enumerate(probabilities):
        load = _stream(loading.seed, STAGE_LOAD, site_number, j).random(loading.shots) < loading.fill_probability
        deliver = _stream(loading.seed, STAGE_TRANSPORT, site_number, j).random(loading.shots) < loading.transport_survival
        survive = _stream(loading.seed, STAGE_SURVIVE, site_number, j).random(loading.shots) < p
        loaded[j] = load.sum()
        survived[j] = (load & deliver & survive).sum()
    return loaded, survived


def _run_shots(probabilities, loading, workers):
    """Shot-by-shot outcome of every (site, cell): loaded counts, conditioned survival, yield."""

    def run(i):
        return _simulate_site(i, probabilities[i], loading)

    n_sites = len(probabilities)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_sites)))
    else:
        results = [run(i) for i in range(n_sites)]

    loaded = np.vstack([r[0] for r in results])
    survived = np.vstack([r[1] for r in results])
    with np.errstate(invalid="ignore", divide="ignore"):
        survival = np.where(loaded > 0, survived / np.maximum(loaded, 1), np.nan)
    return loaded, survival, float(survived.sum() / (loading.shots * survived.size))


def simulate_scan(geometry, array, scan, heating=None, loading=None, scan_unit="m", workers=1):
    """
    Monte Carlo position scan.

    Every shot, each site is loaded with probability fill_probability,
    survives transport with probability transport_survival and then survives
    the scan point with the geometric × heating probability. Each stage draws
    from its own Philox stream keyed by (seed, stage, site, scan cell) with
    the shot number as the position in the stream, so results do not depend
    on the number of workers.
    """
    loading = loading or LoadingModel()
    coordinates = np.asarray(scan, dtype=float)
    if not np.all(np.isfinite(coordinates)):
        raise InvalidParameterError("scan coordinates must be finite")
    if scan_unit == "Hz":
        displacements = aod_to_position(coordinates, array)
    elif scan_unit == "m":
        displacements = coordinates
    else:
        raise InvalidParameterError(f"scan unit must be 'm' or 'Hz', got {scan_unit!r}")

    probabilities = expected_survival(geometry, array, displacements, heating, workers)
    loaded, survival, mean_yield = _run_shots(probabilities, loading, workers)
    logger.info(
        "✓ Simulated scan: %d sites x %d points, %d shots per point", array.n_sites, len(coordinates), loading.shots
    )
    return SurvivalMap(
        scan_coordinates=coordinates,
        per_site_survival=survival,
        shot_counts=loaded,
        site_index=array.site_index(),
        site_positions=array.sites(),
        displacements=displacements,
        coordinate_unit=scan_unit,
        mean_yield=mean_yield,
    )


def _pulse_expectation(site_number, site, geometry, array, durations, heating):
    geo = float(np.atleast_1d(geometric_survival(
        site[None, :], geometry, array.waist, array.occlusion_tolerance, array.wavelength
    ))[0])
    y = float(geometry.guide_offset(site[None, :])[0])
    z = float(site[2])
    if not heating.in_domain(y, z):
        if geo < LOSS_REGION_LEVEL:
            return np.full(len(durations), geo)
        raise OutOfDomainError(
            f"site {site_number} at {y * 1e6:.4f} um from the guide is outside the field domain",
            site=site_number,
        )
    return np.array([geo * heating.survival_at(y, z, duration=d).survival for d in durations])


def expected_pulse_survival(geometry, array, durations, heating, workers=1):
    """
    Survival probability of a delivered atom at every site (rows) after a
    heating pulse of each duration (columns). Sites stay at their array
    positions; the geometric factor does not depend on the duration.
    """
    if heating is None:
        raise InvalidParameterError("a pulse scan needs a heating model")
    durations = np.asarray(durations, dtype=float)
    if durations.ndim != 1 or not np.all(np.isfinite(durations)) or np.any(durations < 0):
        raise InvalidParameterError("pulse durations must be a list of finite values >= 0")
    sites = array.sites()

    def evaluate(i):
        return _pulse_expectation(i, sites[i], geometry, array, durations, heating)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate, range(len(sites))))
    else:
        rows = [evaluate(i) for i in range(len(sites))]
    return np.vstack(rows)


def simulate_pulse_scan(geometry, array, durations, heating, loading=None, workers=1):
    """
    Monte Carlo pulse-duration scan of the whole array: the light in the
    guide is left on for each duration in turn while the atoms sit at their
    sites. Loading, transport and survival use the same keyed streams as a
    position scan, with the duration index as the scan cell.
    """
    loading = loading or LoadingModel()
    durations = np.asarray(durations, dtype=float)
    probabilities = expected_pulse_survival(geometry, array, durations, heating, workers)
    loaded, survival, mean_yield = _run_shots(probabilities, loading, workers)
    logger.info(
        "✓ Simulated pulse scan: %d sites x %d durations, %d shots per point",
        array.n_sites, len(durations), loading.shots,
    )
    return SurvivalMap(
        scan_coordinates=durations,
        per_site_survival=survival,
        shot_counts=loaded,
        site_index=array.site_index(),
        site_positions=array.sites(),
        displacements=np.zeros(len(durations)),
        coordinate_unit="s",
        mean_yield=mean_yield,
    )


def row_survival(survival_map):
    """
    Survival of every array row, pooled over the loaded shots of its sites.
    Returns the row labels, the pooled survival (rows x cells) and the
    loaded shot counts behind it.
    """
    index = np.asarray(survival_map.site_index, dtype=int).reshape(-1, 2)
    loaded = np.asarray(survival_map.shot_counts)
    survived = np.rint(np.nan_to_num(survival_map.per_site_survival) * loaded)
    rows = np.unique(index[:, 0])
    counts = np.vstack([loaded[index[:, 0] == r].sum(axis=0) for r in rows])
    hits = np.vstack([survived[index[:, 0] == r].sum(axis=0) for r in rows])
    with np.errstate(invalid="ignore", divide="ignore"):
        pooled = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    return rows, pooled, counts


def half_loss_width(displacements, survival, baseline=None):
    """
    Width of the region where survival drops below half its baseline, with
    linear interpolation of both edges. The baseline defaults to the 90th
    percentile of the curve.
    """
    x = np.asarray(displacements, dtype=float)
    s = np.asarray(survival, dtype=float)
    keep = np.isfinite(s)
    x, s = x[keep], s[keep]
    if baseline is None:
        baseline = float(np.quantile(s, 0.9))
    level = 0.5 * baseline
    below = np.flatnonzero(s < level)
    if below.size == 0:
        raise InsufficientSignalError("survival never drops below half its baseline")
    first, last = below[0], below[-1]
    if first == 0 or last == len(s) - 1:
        raise InsufficientSignalError("loss region extends past the scan range")

    def crossing(i, j):
        return x[i] + (level - s[i]) * (x[j] - x[i]) / (s[j] - s[i])

    return float(crossing(last, last + 1) - crossing(first - 1, first))


def tilt_estimate(survival_map, array):
    """
    Tilt of the guide relative to the array from the drift of the loss centre
    from row to row.

    Per row, the loss centre is the centroid of (half baseline - survival),
    clipped at zero, over the absolute positions of the row's sites that show
    the loss feature. A straight line through the centres versus row position
    gives the tilt as -arctan(slope).
    """
    survival = np.asarray(survival_map.per_site_survival, dtype=float)
    displacements = np.asarray(survival_map.displacements, dtype=float)
    positions = np.asarray(survival_map.site_positions, dtype=float)
    rows = sorted({r for r, _ in survival_map.site_index})
    if len(rows) < 2:
        raise InsufficientSignalError("tilt estimation needs at least two rows")

    centres, row_y = [], []
    for row in rows:
        members = [i for i, (r, _) in enumerate(survival_map.site_index) if r == row]
        numerator = denominator = 0.0
        ys = []
        for i in members:
            s = survival[i]
            finite = np.isfinite(s)
            if not finite.any() or np.nanmin(s) >= LOSS_REGION_LEVEL:
                continue
            baseline = float(np.quantile(s[finite], 0.9))
            weight = np.clip(0.5 * baseline - s[finite], 0.0, None)
            x_abs = positions[i, 0] + displacements[finite]
            numerator += float(np.dot(weight, x_abs))
            denominator += float(weight.sum())
            ys.append(positions[i, 1])
        if denominator <= 0:
            raise InsufficientSignalError(f"no loss feature in row {row}")
        centres.append(numerator / denominator)
        row_y.append(float(np.mean(ys)))

    line = weighted_line_fit(np.array(row_y), np.array(centres))
    slope, slope_se = line.params["slope"], line.std_errors["slope"]
    tilt = -math.atan(slope)
    tilt_se = slope_se / (1.0 + slope ** 2)
    return FitResult(
        params={"tilt": tilt},
        std_errors={"tilt": tilt_se},
        residual_norm=line.residual_norm,
        iterations=1,
        converged=True,
        residuals=line.residuals,
        extra={"row_positions": row_y, "loss_centres": centres},
    )


def transport_profile(distance, v_max, a_max, jerk_time, dt):
    """
    Jerk-limited (S-curve) move over `distance` starting and ending at rest.

    Acceleration ramps linearly over jerk_time. When the move is too short to
    reach a_max (or v_max) the peak values are lowered, logged, and reported
    on the returned profile.
    """
    for name, value in (("v_max", v_max), ("a_max", a_max), ("jerk_time", jerk_time), ("dt", dt)):
        if not value > 0:
            raise InvalidParameterError(f"{name} must be > 0, got {value!r}")
    if not distance >= 0:
        raise InvalidParameterError(f"distance must be >= 0, got {distance!r}")

    if distance == 0:
        samples = pd.DataFrame(
            {"time_s": [0.0], "position_m": [0.0], "velocity_m_s": [0.0], "acceleration_m_s2": [0.0]}
        )
        return MotionProfile(samples, v_max, a_max, jerk_time, 0.0, 0.0, 0.0)

    tj = jerk_time
    accel = a_max
    ta = v_max / accel - tj
    if ta < 0:
        accel, ta = v_max / tj, 0.0
    velocity = v_max
    if velocity * (2 * tj + ta) > distance:
        velocity = 0.5 * accel * (-tj + math.sqrt(tj ** 2 + 4 * distance / accel))
        ta = velocity / accel - tj
        if ta < 0:
            ta = 0.0
            velocity = distance / (2 * tj)
            accel = velocity / tj
        tv = 0.0
    else:
        tv = (distance - velocity * (2 * tj + ta)) / velocity
    if velocity < v_max:
        logger.warning("Peak velocity reduced from %.4g to %.4g m/s for a %.4g m move", v_max, velocity, distance)
    if accel < a_max:
        logger.warning(
            "Peak acceleration reduced from %.4g to %.4g m/s^2 for a %.4g m move", a_max, accel, distance
        )

    jerk = accel / tj
    durations = np.array([tj, ta, tj, tv, tj, ta, tj])
    jerks = np.array([jerk, 0.0, -jerk, 0.0, -jerk, 0.0, jerk])
    starts = np.concatenate([[0.0], np.cumsum(durations)[:-1]])
    states = np.zeros((7, 3))
    p, v, a = 0.0, 0.0, 0.0
    for k, (tau, j) in enumerate(zip(durations, jerks)):
        states[k] = (p, v, a)
        p, v, a = (
            p + v * tau + a * tau ** 2 / 2 + j * tau ** 3 / 6,
            v + a * tau + j * tau ** 2 / 2,
            a + j * tau,
        )
    total = float(durations.sum())

    profile = MotionProfile(
        samples=None, v_max=v_max, a_max=a_max, jerk_time=jerk_time, a_peak=accel,
        v_peak=velocity, duration=total, segment_starts=starts, segment_states=states,
        segment_jerks=jerks,
    )
    times = np.arange(0.0, total, dt)
    times = np.append(times, total) if times[-1] < total else times
    position, vel, acc = profile.at(times)
    position[-1], vel[-1], acc[-1] = distance, 0.0, 0.0
    samples = pd.DataFrame(
        {"time_s": times, "position_m": position, "velocity_m_s": vel, "acceleration_m_s2": acc}
    )
    object.__setattr__(profile, "samples", samples)
    return profile
