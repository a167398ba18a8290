"""
Input Table Loaders
===================
Reads the CSV inputs of the toolkit (tabulated guided modes, device
geometries, decay-length samples, release-recapture curves and survival
maps), coerces every numeric column and turns the tables into model objects.

Rows are numbered from 1 after the header; the first bad row is reported.
"""

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from utils.errors import AtomScanError, ParseError
from utils.fieldmodel import TabulatedMode
from utils.inference import ReleaseRecaptureCurve
from utils.scanmicroscope import DeviceGeometry, Rectangle, SurvivalMap

logger = logging.getLogger(__name__)

# Define paths
DATA_DIR = Path(__file__).parent.parent / 'data'

MODE_COLUMNS = ['y_nm', 'z_nm', 'intensity_per_W']
GEOMETRY_COLUMNS = ['name', 'cx_um', 'cy_um', 'width_um', 'length_um', 'thickness_um']
DECAY_COLUMNS = ['r_nm', 'intensity_W_m2']
RECAPTURE_COLUMNS = ['release_time_us', 'survival']
MAP_COLUMNS = ['site_row', 'site_col', 'coordinate', 'survival', 'shots']


def _read_comments(path):
    """`# key=value` lines of a CSV header, as a dict of strings."""
    comments = {}
    with open(path, encoding='utf-8') as handle:
        for line in handle:
            line = line.strip()
            if not line.startswith('#'):
                continue
            key, sep, value = line.lstrip('#').partition('=')
            if sep:
                comments[key.strip()] = value.strip()
    return comments


def _read_table(path, columns, numeric=None, allow_empty=False):
    """
    Read a CSV with pandas and check the required columns.
    Numeric columns are coerced; the first row that fails is reported.
    """
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=path)
    try:
        df = pd.read_csv(path, comment='#', skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", path=path) from None
    except pd.errors.ParserError as err:
        raise ParseError(f"malformed CSV ({err})", path=path) from None

    df.columns = [str(c).strip() for c in df.columns]
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)}", path=path)
    if df.empty and not allow_empty:
        raise ParseError("no data rows", path=path)

    for col in (numeric if numeric is not None else columns):
        raw = df[col]
        df[col] = pd.to_numeric(raw, errors='coerce')
        bad = df[col].isna() | ~np.isfinite(df[col].astype(float))
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
            raise ParseError(f"column '{col}' has a non-numeric value {raw.iloc[row - 1]!r}", path=path, row=row)
    return df


def _uniform_axis(values, name, path):
    axis = np.unique(values)
    if axis.size < 2:
        raise ParseError(f"{name} grid needs at least 2 distinct values", path=path)
    steps = np.diff(axis)
    if np.max(np.abs(steps - steps[0])) > 1e-6 * steps[0]:
        raise ParseError(f"{name} grid spacing is not uniform", path=path)
    return axis


def load_mode_file(path):
    """
    Tabulated guided mode from `y_nm,z_nm,intensity_per_W`.
    The rows must cover a complete rectangular grid exactly once.
    """
    df = _read_table(path, MODE_COLUMNS)
    y_axis = _uniform_axis(df['y_nm'].to_numpy(), 'y', path)
    z_axis = _uniform_axis(df['z_nm'].to_numpy(), 'z', path)

    duplicated = df.duplicated(subset=['y_nm', 'z_nm'])
    if duplicated.any():
        row = int(np.flatnonzero(duplicated.to_numpy())[0]) + 1
        raise ParseError("grid node appears twice", path=path, row=row)
    if len(df) != y_axis.size * z_axis.size:
        raise ParseError(
            f"grid is incomplete: {len(df)} rows for a {y_axis.size} x {z_axis.size} grid", path=path
        )
    negative = df['intensity_per_W'] < 0
    if negative.any():
        row = int(np.flatnonzero(negative.to_numpy())[0]) + 1
        raise ParseError("intensity_per_W must be >= 0", path=path, row=row)

    grid = df.pivot(index='y_nm', columns='z_nm', values='intensity_per_W')
    grid = grid.reindex(index=y_axis, columns=z_axis)
    mode = TabulatedMode(y_axis * 1e-9, z_axis * 1e-9, grid.to_numpy(dtype=float))
    logger.info("✓ Loaded mode %s: %d x %d grid", Path(path).name, y_axis.size, z_axis.size)
    return mode


def load_geometry_file(path):
    """
    Device geometry from `name,cx_um,cy_um,width_um,length_um,thickness_um`.

    Header comments: `# tilt_deg=` (required) and optionally
    `# guide_center_um=x,y`, `# waveguide=ax,ay`, `# offset_left_um=`,
    `# offset_right_um=`. A file without element rows describes a bare
    field of view.
    """
    df = _read_table(path, GEOMETRY_COLUMNS, numeric=GEOMETRY_COLUMNS[1:], allow_empty=True)
    comments = _read_comments(path)
    if 'tilt_deg' not in comments:
        raise ParseError("missing '# tilt_deg=<value>' header comment", path=path)

    def number(key, default=None):
        if key not in comments:
            return default
        try:
            return float(comments[key])
        except ValueError:
            raise ParseError(f"header comment '{key}' is not a number: {comments[key]!r}", path=path) from None

    def pair(key):
        if key not in comments:
            return None
        try:
            a, b = (float(v) for v in comments[key].split(','))
        except ValueError:
            raise ParseError(f"header comment '{key}' must be two comma-separated numbers", path=path) from None
        return a, b

    elements = []
    for index, row in enumerate(df.itertuples(index=False), start=1):
        try:
            elements.append(Rectangle(
                name=str(row.name),
                cx=row.cx_um * 1e-6,
                cy=row.cy_um * 1e-6,
                width=row.width_um * 1e-6,
                length=row.length_um * 1e-6,
                thickness=row.thickness_um * 1e-6,
            ))
        except AtomScanError as err:
            raise ParseError(str(err), path=path, row=index) from None

    centre = pair('guide_center_um')
    kwargs = {
        'elements': tuple(elements),
        'tilt': math.radians(number('tilt_deg')),
        'side_offsets': (number('offset_left_um', 0.0) * 1e-6, number('offset_right_um', 0.0) * 1e-6),
    }
    if centre is not None:
        kwargs['guide_center'] = (centre[0] * 1e-6, centre[1] * 1e-6)
    axis = pair('waveguide')
    if axis is not None:
        kwargs['waveguide_axis'] = axis
    try:
        geometry = DeviceGeometry(**kwargs)
    except AtomScanError as err:
        raise ParseError(str(err), path=path) from None
    logger.info("✓ Loaded geometry %s: %d elements", Path(path).name, len(elements))
    return geometry


def load_decay_samples(path):
    """Intensity samples `r_nm,intensity_W_m2[,weight]`; returns r (m), I, weights or None."""
    df = _read_table(path, DECAY_COLUMNS)
    if 'weight' in df.columns:
        df = _read_table(path, DECAY_COLUMNS + ['weight'])
    for col in DECAY_COLUMNS:
        bad = df[col] <= 0
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 1
            raise ParseError(f"column '{col}' must be > 0", path=path, row=row)
    weights = df['weight'].to_numpy(dtype=float) if 'weight' in df.columns else None
    return df['r_nm'].to_numpy(dtype=float) * 1e-9, df['intensity_W_m2'].to_numpy(dtype=float), weights


def load_recapture_curve(path, n_samples=None):
    """
    Release-recapture curve `release_time_us,survival[,shots]`. The sample
    count comes from the shots column when present.
    """
    df = _read_table(path, RECAPTURE_COLUMNS)
    if 'shots' in df.columns:
        df = _read_table(path, RECAPTURE_COLUMNS + ['shots'])
        n_samples = int(df['shots'].min())
    if n_samples is None:
        raise ParseError("no 'shots' column and no sample count configured", path=path)
    out_of_range = (df['survival'] < 0) | (df['survival'] > 1)
    if out_of_range.any():
        row = int(np.flatnonzero(out_of_range.to_numpy())[0]) + 1
        raise ParseError("survival must lie in [0, 1]", path=path, row=row)
    descending = df['release_time_us'].diff() < 0
    if descending.any():
        row = int(np.flatnonzero(descending.to_numpy())[0]) + 1
        raise ParseError("release times must be ascending", path=path, row=row)
    return ReleaseRecaptureCurve(
        df['release_time_us'].to_numpy(dtype=float) * 1e-6,
        df['survival'].to_numpy(dtype=float),
        n_samples,
    )


def load_survival_map(path, array):
    """
    Survival map `site_row,site_col,coordinate,survival,shots` for `array`.
    The `# coordinate_unit=` header (um or MHz, default um) sets how
    coordinates become displacements.
    """
    df = _read_table(path, MAP_COLUMNS, numeric=['site_row', 'site_col', 'coordinate', 'shots'])
    df['survival'] = pd.to_numeric(df['survival'], errors='coerce')
    unit = _read_comments(path).get('coordinate_unit', 'um')
    if unit not in ('um', 'MHz'):
        raise ParseError(f"unknown coordinate unit {unit!r}", path=path)

    outside = (df['site_row'] < 0) | (df['site_row'] >= array.rows) | (df['site_col'] < 0) | (df['site_col'] >= array.cols)
    if outside.any():
        row = int(np.flatnonzero(outside.to_numpy())[0]) + 1
        raise ParseError("site lies outside the configured array", path=path, row=row)

    df['site'] = (df['site_row'].astype(int) * array.cols + df['site_col'].astype(int))
    survival = df.pivot_table(index='site', columns='coordinate', values='survival', aggfunc='first', dropna=False)
    shots = df.pivot_table(index='site', columns='coordinate', values='shots', aggfunc='first')
    survival = survival.reindex(index=range(array.n_sites))
    shots = shots.reindex(index=range(array.n_sites)).fillna(0)
    coordinates = survival.columns.to_numpy(dtype=float)
    displacements = coordinates * 1e-6 if unit == 'um' else coordinates * 1e6 * array.aod_calibration
    return SurvivalMap(
        scan_coordinates=coordinates,
        per_site_survival=survival.to_numpy(dtype=float),
        shot_counts=shots.to_numpy(dtype=np.int64),
        site_index=array.site_index(),
        site_positions=array.sites(),
        displacements=displacements,
        coordinate_unit=unit,
    )
