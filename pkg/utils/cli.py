"""
Command-Line Front End
======================
Batch commands that compose the models from a run configuration and write
CSV tables and JSON reports into the output directory:

    fc-matrix   Franck-Condon matrix and its completeness report
    survival    survival versus displacement (and pulse duration)
    scan        simulated scanning-atom-microscope map and tilt
    pulse       array survival versus heating-pulse duration
    fit         decay-length, temperature or tilt fit of an input table
    transport   jerk-limited transport profile
    recapture   synthetic release-recapture curve
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from utils import merging
from utils.cleaning import (
    load_decay_samples,
    load_geometry_file,
    load_recapture_curve,
    load_survival_map,
)
from utils.config import RunConfig, config_to_dict, load_config
from utils.errors import AtomScanError, ConfigError, InsufficientSignalError, OutOfDomainError
from utils.heating import (
    HeatingModel,
    HeatingOptions,
    franck_condon_matrix,
    half_survival_radius,
    survival_vs_duration,
)
from utils.inference import fit_decay_length, fit_temperature, release_recapture_simulate
from utils.quantities import bound_state_count, lamb_dicke
from utils.scanmicroscope import (
    DeviceGeometry,
    aod_to_position,
    half_loss_width,
    row_survival,
    simulate_pulse_scan,
    simulate_scan,
    tilt_estimate,
    transport_profile,
)

logger = logging.getLogger(__name__)

WORKERS_ENV = 'ATOMSCAN_WORKERS'


def _output_dir(config):
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    merging.write_json(config_to_dict(config), out / 'resolved_config.json', exact=True)
    return out


def _heating_model(config, constants=None):
    constants = constants or config.constants.build()
    heating = config.heating
    trap = config.trap.build(heating.n_trunc)
    field = config.field.build()
    return HeatingModel(
        field=field,
        sat=config.build_saturation(constants),
        trap=trap,
        temperature=heating.temperature_uK * 1e-6,
        duration=heating.pulse_ms * 1e-3,
        constants=constants,
        power=config.field.power if config.field.mode_file else None,
        options=HeatingOptions(heating.double_kick, heating.position_average),
    )


def _scan_displacements(config):
    coordinates = config.scan.coordinates()
    if config.scan.unit == 'Hz':
        return aod_to_position(coordinates, config.array.build())
    return coordinates


def cmd_fc_matrix(config, workers=1):
    """Franck-Condon matrix CSV and a JSON report of its column-sum deficits."""
    out = _output_dir(config)
    constants = config.constants.build()
    trap = config.trap.build()
    eta = config.fc_matrix.eta if config.fc_matrix.eta is not None else lamb_dicke(constants, trap)
    n_trunc = config.fc_matrix.n_trunc or trap.n_trunc
    fc = franck_condon_matrix(eta, n_trunc).per_event(config.heating.double_kick)
    n_bound = bound_state_count(trap.depth, trap.omega_trap, constants)

    merging.write_csv(merging.fc_matrix_frame(fc), out / 'fc_matrix.csv')
    report = merging.fc_report(fc, n_bound)
    merging.write_json(report, out / 'fc_report.json')
    if not report['complete']:
        logger.warning("Column deficit %.3g exceeds 1e-6 within the bound states", report['max_deficit_within_bound_states'])
    return report


def cmd_survival_curve(config, workers=1):
    """Survival versus displacement from the guide, plus versus pulse duration when configured."""
    out = _output_dir(config)
    model = _heating_model(config)
    normalization = model.state0.total if config.heating.normalize and model.state0.total > 0 else 1.0

    points, skipped = [], []
    for y in _scan_displacements(config):
        if not model.in_domain(y):
            skipped.append(float(y * 1e6))
            continue
        points.append(model.survival_at(y))
    if skipped:
        logger.warning("Skipped %d displacement(s) inside the field validity cutoff", len(skipped))
    merging.write_csv(merging.survival_curve_frame(points, normalization), out / 'survival_vs_position.csv')

    report = {
        'eta': model.fc.eta,
        'n_trunc': model.trap.n_trunc,
        'initial_population': model.state0.total,
        'normalization': normalization,
        'skipped_displacements_um': skipped,
        'points': len(points),
    }
    try:
        report['half_survival_radius_um'] = half_survival_radius(model, level=0.5 * normalization) * 1e6
    except (InsufficientSignalError, OutOfDomainError) as err:
        report['half_survival_radius_um'] = None
        report['half_survival_warning'] = str(err)

    if config.heating.pulse_ms_list:
        durations = np.asarray(config.heating.pulse_ms_list, dtype=float) * 1e-3
        curve = survival_vs_duration(
            model, durations, config.heating.duration_site_um * 1e-6, normalize=config.heating.normalize
        )
        merging.write_csv(merging.duration_curve_frame(curve), out / 'survival_vs_duration.csv')
    merging.write_json(report, out / 'survival_report.json')
    return report


def cmd_scan_map(config, workers=1):
    """Simulated survival map CSV and a JSON summary with the tilt estimate."""
    out = _output_dir(config)
    geometry = load_geometry_file(config.geometry_file) if config.geometry_file else DeviceGeometry()
    array = config.array.build()
    heating = _heating_model(config) if config.heating.enabled else None
    survival_map = simulate_scan(
        geometry, array, config.scan.coordinates(),
        heating=heating, loading=config.scan.loading(), scan_unit=config.scan.unit, workers=workers,
    )
    merging.write_survival_map(survival_map, out / 'survival_map.csv')

    widths = []
    for i in range(array.n_sites):
        try:
            widths.append(half_loss_width(survival_map.displacements, survival_map.per_site_survival[i]) * 1e6)
        except InsufficientSignalError:
            widths.append(None)
    summary = {
        'sites': array.n_sites,
        'points': len(survival_map.scan_coordinates),
        'shots': config.scan.shots,
        'coordinate_unit': merging.map_coordinate_unit(survival_map),
        'mean_survival': float(np.nanmean(survival_map.per_site_survival)),
        'mean_yield': survival_map.mean_yield,
        'half_loss_width_um': widths,
        'geometry_tilt_deg': float(np.degrees(geometry.tilt)),
    }
    if array.rows >= 2:
        try:
            tilt = tilt_estimate(survival_map, array)
            summary['tilt'] = tilt.records()
            summary['tilt_deg'] = float(np.degrees(tilt.params['tilt']))
            summary['tilt_std_error_deg'] = float(np.degrees(tilt.std_errors['tilt']))
        except InsufficientSignalError as err:
            logger.warning("Tilt estimate unavailable: %s", err)
            summary['tilt_warning'] = str(err)
    merging.write_json(summary, out / 'scan_summary.json')
    return summary


def cmd_pulse_scan(config, workers=1):
    """Survival of the whole array versus pulse duration, per site and pooled per row."""
    if not config.heating.pulse_ms_list:
        raise ConfigError("the pulse command needs pulse durations", key='heating.pulse_ms_list')
    out = _output_dir(config)
    geometry = load_geometry_file(config.geometry_file) if config.geometry_file else DeviceGeometry()
    array = config.array.build()
    durations = np.asarray(config.heating.pulse_ms_list, dtype=float) * 1e-3
    survival_map = simulate_pulse_scan(
        geometry, array, durations, _heating_model(config), loading=config.scan.loading(), workers=workers,
    )
    merging.write_survival_map(survival_map, out / 'pulse_map.csv')

    rows, pooled, counts = row_survival(survival_map)
    offsets = geometry.guide_offset(array.sites())
    row_of_site = np.array([r for r, _ in array.site_index()])
    row_offsets = [float(np.mean(offsets[row_of_site == r])) for r in rows]
    merging.write_csv(
        merging.pulse_rows_frame(rows, row_offsets, durations, pooled, counts), out / 'pulse_rows.csv'
    )
    summary = {
        'sites': array.n_sites,
        'pulse_ms': durations * 1e3,
        'shots': config.scan.shots,
        'mean_yield': survival_map.mean_yield,
        'rows': [
            {'row': int(r), 'guide_offset_um': offset * 1e6, 'survival': pooled[k]}
            for k, (r, offset) in enumerate(zip(rows, row_offsets))
        ],
    }
    merging.write_json(summary, out / 'pulse_summary.json')
    return summary


def cmd_fit(config, kind=None, input_path=None, workers=1):
    """Fit an input table; writes fit_result.json and fit_residuals.csv."""
    kind = kind or config.fit.kind
    input_path = input_path or config.fit.input
    if not input_path:
        raise ConfigError("the fit command needs an input table", key='fit.input')
    out = _output_dir(config)

    if kind == 'decay':
        r, intensity, weights = load_decay_samples(input_path)
        power_pw = config.fit.power_pW if config.fit.power_pW is not None else config.field.power_pW
        result = fit_decay_length(r, intensity, power_pw * 1e-12, weights, free_prefactor=config.fit.free_prefactor)
        residuals = merging.residuals_frame('r_nm', r * 1e9, result.residuals)
    elif kind == 'temperature':
        curve = load_recapture_curve(input_path, config.thermometry.n_samples)
        thermometry = config.thermometry
        result = fit_temperature(
            curve, config.trap.build(), config.constants.build(),
            n_samples=thermometry.n_samples, seed=thermometry.inner_seed,
            bootstrap=thermometry.bootstrap, workers=workers,
        )
        residuals = merging.residuals_frame('release_time_us', curve.release_times * 1e6, result.residuals)
    elif kind == 'tilt':
        array = config.array.build()
        result = tilt_estimate(load_survival_map(input_path, array), array)
        residuals = merging.residuals_frame(
            'row_y_um', np.asarray(result.extra['row_positions']) * 1e6, result.residuals * 1e6
        )
    else:
        raise ConfigError(f"unknown fit kind {kind!r}", key='fit.kind')

    summary = merging.fit_summary(kind, result)
    merging.write_json(summary, out / 'fit_result.json')
    merging.write_csv(residuals, out / 'fit_residuals.csv')
    return summary


def cmd_transport(config, workers=1):
    out = _output_dir(config)
    t = config.transport
    profile = transport_profile(
        t.distance_mm * 1e-3, t.v_max_m_s, t.a_max_m_s2, t.jerk_time_ms * 1e-3, t.dt_ms * 1e-3
    )
    merging.write_csv(profile.samples, out / 'motion_profile.csv')
    summary = {
        'distance_m': t.distance_mm * 1e-3,
        'duration_s': profile.duration,
        'v_peak_m_s': profile.v_peak,
        'a_peak_m_s2': profile.a_peak,
        'velocity_reduced': profile.v_peak < t.v_max_m_s,
        'acceleration_reduced': profile.a_peak < t.a_max_m_s2,
    }
    merging.write_json(summary, out / 'transport_summary.json')
    return summary


def cmd_recapture(config, workers=1):
    out = _output_dir(config)
    th = config.thermometry
    curve = release_recapture_simulate(
        th.temperature_uK * 1e-6, config.trap.build(), config.constants.build(),
        np.asarray(th.release_times_us, dtype=float) * 1e-6, th.n_samples, th.seed,
    )
    merging.write_csv(merging.recapture_frame(curve), out / 'recapture_curve.csv')
    return curve


COMMANDS = {
    'fc-matrix': cmd_fc_matrix,
    'survival': cmd_survival_curve,
    'scan': cmd_scan_map,
    'pulse': cmd_pulse_scan,
    'transport': cmd_transport,
    'recapture': cmd_recapture,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON or YAML run configuration')
    common.add_argument('--seed', type=int, help='top-level seed for every random stream')
    common.add_argument('--workers', type=int, help=f'concurrent workers (default: ${WORKERS_ENV} or 1)')
    common.add_argument('--out', help='output directory')
    common.add_argument('--verbose', action='store_true', help='debug logging')

    parser = argparse.ArgumentParser(prog='atomscan', description=__doc__.split('\n\n')[0])
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('fc-matrix', parents=[common], help='Franck-Condon matrix and completeness report')
    sub.add_parser('survival', parents=[common], help='survival versus displacement')
    sub.add_parser('scan', parents=[common], help='simulated survival map')
    sub.add_parser('pulse', parents=[common], help='array survival versus pulse duration')
    fit = sub.add_parser('fit', parents=[common], help='fit an input table')
    fit.add_argument('--kind', choices=('decay', 'temperature', 'tilt'))
    fit.add_argument('--input', help='CSV table to fit')
    sub.add_parser('transport', parents=[common], help='transport motion profile')
    sub.add_parser('recapture', parents=[common], help='synthetic release-recapture curve')
    return parser


def resolve_workers(flag):
    if flag is not None:
        workers, key = flag, '--workers'
    else:
        raw = os.environ.get(WORKERS_ENV, '1')
        key = WORKERS_ENV
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}", key=key) from None
    if workers < 1:
        raise ConfigError("worker count must be >= 1", key=key)
    return workers


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
    )
    try:
        config = load_config(args.config) if args.config else RunConfig()
        config = config.with_overrides(seed=args.seed, output_dir=args.out)
        workers = resolve_workers(args.workers)
        if args.command == 'fit':
            cmd_fit(config, args.kind, args.input, workers=workers)
        else:
            COMMANDS[args.command](config, workers=workers)
    except AtomScanError as err:
        logger.error("%s", err)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
