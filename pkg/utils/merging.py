"""
Result Tables and Reports
=========================
Turns model results into the CSV tables and JSON summaries the commands
write. Float formatting is fixed and JSON keys are sorted, so the same
inputs always produce byte-identical files.
"""

import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'


def _jsonable(value, exact=False):
    """Plain JSON types; non-finite floats become null. exact keeps full float precision."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v, exact) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v, exact) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return value if exact else float(FLOAT_FORMAT % value)
    return value


def write_json(payload, path, exact=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(_jsonable(payload, exact), handle, indent=2, sort_keys=True)
        handle.write('\n')
    logger.info("✓ Created %s", path.name)
    return path


def write_csv(df, path, header_comments=None):
    """Write a table with the fixed float format, optionally after `# key=value` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        for key, value in (header_comments or {}).items():
            handle.write(f'# {key}={value}\n')
        df.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info("✓ Created %s: %d records", path.name, len(df))
    return path


def fc_matrix_frame(fc):
    """Franck-Condon matrix with one row per final level n and one column per initial level m."""
    df = pd.DataFrame(fc.probs, columns=[f'm{m}' for m in range(fc.size)])
    df.insert(0, 'n', np.arange(fc.size))
    return df


def fc_report(fc, n_bound):
    """Column deficits of a Franck-Condon matrix, overall and over the bound levels."""
    deficits = fc.column_deficits
    within = deficits[: min(n_bound, fc.size)]
    max_within = float(within.max()) if within.size else 0.0
    return {
        'eta': fc.eta,
        'n_trunc': fc.size,
        'kicks': fc.kicks,
        'bound_state_count': n_bound,
        'entry_00': float(fc.probs[0, 0]),
        'column_deficits': deficits.tolist(),
        'max_deficit': float(deficits.max()),
        'max_deficit_within_bound_states': max_within,
        'complete': max_within < 1e-6,
    }


def survival_curve_frame(points, normalization=1.0):
    """Survival versus displacement; coordinates in metres become micrometres."""
    return pd.DataFrame({
        'displacement_um': [p.coordinate * 1e6 for p in points],
        'intensity_W_m2': [p.intensity for p in points],
        's': [p.saturation for p in points],
        'R_sc_per_s': [p.scattering_rate for p in points],
        'survival': [min(p.survival / normalization, 1.0) for p in points],
    })


def duration_curve_frame(points):
    return pd.DataFrame({
        'pulse_ms': [p.coordinate * 1e3 for p in points],
        'n_events_mean': [p.n_events_mean for p in points],
        'survival': [p.survival for p in points],
    })


COORDINATE_UNITS = {'m': ('um', 1e6), 'Hz': ('MHz', 1e-6), 's': ('ms', 1e3)}


def map_coordinate_unit(survival_map):
    return COORDINATE_UNITS[survival_map.coordinate_unit][0]


def survival_map_frame(survival_map):
    """Long table `site_row,site_col,coordinate,survival,shots`, sites in row-major order."""
    scale = COORDINATE_UNITS[survival_map.coordinate_unit][1]
    coordinates = np.asarray(survival_map.scan_coordinates) * scale
    n_sites, n_points = survival_map.per_site_survival.shape
    index = np.asarray(survival_map.site_index, dtype=int).reshape(-1, 2)
    return pd.DataFrame({
        'site_row': np.repeat(index[:, 0], n_points),
        'site_col': np.repeat(index[:, 1], n_points),
        'coordinate': np.tile(coordinates, n_sites),
        'survival': survival_map.per_site_survival.ravel(),
        'shots': survival_map.shot_counts.ravel(),
    })


def write_survival_map(survival_map, path):
    return write_csv(
        survival_map_frame(survival_map), path,
        header_comments={
            'coordinate_unit': map_coordinate_unit(survival_map),
            'survival': 'conditioned_on_loading',
            'mean_yield': FLOAT_FORMAT % survival_map.mean_yield,
        },
    )


def pulse_rows_frame(rows, guide_offsets, durations, pooled, counts):
    """Per-row survival versus pulse duration, rows in order."""
    n_rows, n_points = pooled.shape
    return pd.DataFrame({
        'site_row': np.repeat(np.asarray(rows, dtype=int), n_points),
        'guide_offset_um': np.repeat(np.asarray(guide_offsets, dtype=float) * 1e6, n_points),
        'pulse_ms': np.tile(np.asarray(durations, dtype=float) * 1e3, n_rows),
        'survival': pooled.ravel(),
        'shots': counts.ravel(),
    })


def recapture_frame(curve):
    return pd.DataFrame({
        'release_time_us': curve.release_times * 1e6,
        'survival': curve.survival,
        'shots': np.full(curve.release_times.size, curve.n_samples),
    })


def residuals_frame(coordinate_name, coordinates, residuals):
    return pd.DataFrame({coordinate_name: np.asarray(coordinates), 'residual': np.asarray(residuals)})


def fit_summary(kind, result):
    """JSON object of a fit: one record per parameter plus flags."""
    return {
        'kind': kind,
        'results': result.records(),
        'flags': list(result.flags),
    }
