"""
Run Configuration
=================
A run is described by one JSON (or YAML, by file suffix) document with
explicit unit-suffixed keys. Each block maps onto a frozen dataclass; every
key has a default and unknown keys are rejected with their dotted path.
"""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from scipy import constants as sc

from utils.cleaning import load_mode_file
from utils.errors import AtomScanError, ConfigError
from utils.fieldmodel import AnalyticEvanescentModel, SaturationContext
from utils.quantities import (
    CS_D2_GAMMA,
    CS_D2_RECOIL,
    CS_D2_WAVELENGTH,
    PhysicalConstants,
    TrapSpec,
)
from utils.scanmicroscope import LoadingModel, TweezerArray

logger = logging.getLogger(__name__)

YAML_SUFFIXES = ('.yaml', '.yml')


@dataclass(frozen=True)
class ConstantsConfig:
    wavelength_nm: float = CS_D2_WAVELENGTH * 1e9
    gamma_MHz: float = CS_D2_GAMMA / (2 * math.pi * 1e6)
    recoil_kHz: float = CS_D2_RECOIL / (2 * math.pi * 1e3)
    atom_mass_amu: float = 132.905451931
    sigma_0_m2: float = None
    gravity_m_s2: float = 9.81

    def build(self):
        return PhysicalConstants(
            atom_mass=self.atom_mass_amu * sc.atomic_mass,
            wavelength_d2=self.wavelength_nm * 1e-9,
            gamma=2 * math.pi * self.gamma_MHz * 1e6,
            omega_recoil=2 * math.pi * self.recoil_kHz * 1e3,
            sigma_0=self.sigma_0_m2,
            gravity=self.gravity_m_s2,
        )


@dataclass(frozen=True)
class TrapConfig:
    depth_uK: float = 340.0
    frequency_kHz: float = 30.1
    waist_um: float = 1.2
    n_trunc: int = 130
    axial_frequency_kHz: float = None
    wavelength_nm: float = 933.0

    def build(self, n_trunc=None):
        axial = None if self.axial_frequency_kHz is None else 2 * math.pi * self.axial_frequency_kHz * 1e3
        return TrapSpec(
            depth=sc.k * self.depth_uK * 1e-6,
            omega_trap=2 * math.pi * self.frequency_kHz * 1e3,
            waist=self.waist_um * 1e-6,
            n_trunc=self.n_trunc if n_trunc is None else n_trunc,
            omega_axial=axial,
            wavelength=self.wavelength_nm * 1e-9,
        )


@dataclass(frozen=True)
class FieldConfig:
    """Analytic decay law, or a tabulated mode when mode_file is set."""

    decay_length_nm: float = 743.0
    power_pW: float = 400.0
    r_min_nm: float = 90.0
    mode_file: str = None

    @property
    def power(self):
        return self.power_pW * 1e-12

    def build(self):
        if self.mode_file:
            return load_mode_file(self.mode_file)
        if self.decay_length_nm is None or self.r_min_nm is None:
            raise ConfigError("the analytic field needs decay_length_nm and r_min_nm", key='field')
        return AnalyticEvanescentModel(self.power, self.decay_length_nm * 1e-9, self.r_min_nm * 1e-9)


@dataclass(frozen=True)
class ArrayConfig:
    rows: int = 8
    cols: int = 1
    pitch_um: float = 5.0
    origin_um: list = (0.0, 0.0, 0.0)
    waist_um: float = 1.2
    aod_um_per_MHz: float = 0.5
    occlusion_tolerance: float = 0.025

    def build(self):
        if len(self.origin_um) != 3:
            raise ConfigError("origin_um needs three coordinates", key='array.origin_um')
        return TweezerArray(
            rows=self.rows,
            cols=self.cols,
            pitch=self.pitch_um * 1e-6,
            origin=tuple(v * 1e-6 for v in self.origin_um),
            waist=self.waist_um * 1e-6,
            aod_calibration=self.aod_um_per_MHz * 1e-12,
            occlusion_tolerance=self.occlusion_tolerance,
        )


@dataclass(frozen=True)
class ScanConfig:
    """Scan range in um (axis = position) or MHz (axis = aod), endpoints included."""

    axis: str = 'position'
    start: float = -4.0
    stop: float = 4.0
    step: float = 0.1
    shots: int = 100
    seed: int = 0
    fill_probability: float = 0.5
    transport_survival: float = 0.92

    def coordinates(self):
        """Scan coordinates in SI (m or Hz)."""
        if not self.step > 0:
            raise ConfigError("step must be > 0", key='scan.step')
        if self.stop < self.start:
            raise ConfigError("stop must be >= start", key='scan.stop')
        count = int(round((self.stop - self.start) / self.step)) + 1
        values = self.start + self.step * np.arange(count)
        return values * (1e-6 if self.axis == 'position' else 1e6)

    @property
    def unit(self):
        return 'm' if self.axis == 'position' else 'Hz'

    def loading(self):
        return LoadingModel(self.fill_probability, self.transport_survival, self.shots, self.seed)


@dataclass(frozen=True)
class HeatingConfig:
    enabled: bool = False
    temperature_uK: float = 40.0
    pulse_ms: float = 6.0
    pulse_ms_list: list = None
    duration_site_um: float = 1.0
    n_trunc: int = None
    double_kick: bool = False
    position_average: bool = False
    normalize: bool = True


@dataclass(frozen=True)
class FcMatrixConfig:
    """Overrides for the fc-matrix command; n_trunc may exceed the bound ladder here."""

    eta: float = None
    n_trunc: int = None


@dataclass(frozen=True)
class ThermometryConfig:
    temperature_uK: float = 40.0
    release_times_us: list = tuple(float(t) for t in np.linspace(0.0, 100.0, 21))
    n_samples: int = 10000
    seed: int = 0
    inner_seed: int = 20240601
    bootstrap: int = 20


@dataclass(frozen=True)
class TransportConfig:
    distance_mm: float = 3.6
    v_max_m_s: float = 0.2
    a_max_m_s2: float = 5.0
    jerk_time_ms: float = 10.0
    dt_ms: float = 1.0


@dataclass(frozen=True)
class FitConfig:
    kind: str = 'decay'
    input: str = None
    power_pW: float = None
    free_prefactor: bool = False


@dataclass(frozen=True)
class RunConfig:
    constants: ConstantsConfig = dataclasses.field(default_factory=ConstantsConfig)
    trap: TrapConfig = dataclasses.field(default_factory=TrapConfig)
    field: FieldConfig = dataclasses.field(default_factory=FieldConfig)
    geometry_file: str = None
    array: ArrayConfig = dataclasses.field(default_factory=ArrayConfig)
    scan: ScanConfig = dataclasses.field(default_factory=ScanConfig)
    heating: HeatingConfig = dataclasses.field(default_factory=HeatingConfig)
    fc_matrix: FcMatrixConfig = dataclasses.field(default_factory=FcMatrixConfig)
    thermometry: ThermometryConfig = dataclasses.field(default_factory=ThermometryConfig)
    transport: TransportConfig = dataclasses.field(default_factory=TransportConfig)
    fit: FitConfig = dataclasses.field(default_factory=FitConfig)
    output_dir: str = 'out'

    def with_overrides(self, seed=None, output_dir=None):
        config = self
        if seed is not None:
            config = dataclasses.replace(
                config,
                scan=dataclasses.replace(config.scan, seed=seed),
                thermometry=dataclasses.replace(config.thermometry, seed=seed),
            )
        if output_dir is not None:
            config = dataclasses.replace(config, output_dir=str(output_dir))
        return config

    def build_saturation(self, constants=None):
        return SaturationContext.from_constants(constants or self.constants.build())


CHOICES = {
    'scan.axis': ('position', 'aod'),
    'fit.kind': ('decay', 'temperature', 'tilt'),
}
PATH_KEYS = ('field.mode_file', 'geometry_file', 'fit.input')


def _coerce(value, typ, key):
    """Check one scalar or list value against the annotated type."""
    if value is None:
        return None
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key=key)
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"expected an integer, got {value!r}", key=key)
        return int(value)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key=key)
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=key)
        return value
    if typ is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", key=key)
        return [_coerce(v, float, f'{key}[{i}]') for i, v in enumerate(value)]
    raise ConfigError(f"unsupported value {value!r}", key=key)


def _build(cls, data, prefix=''):
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", key=prefix.rstrip('.') or None)
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError("unknown key", key=f'{prefix}{key}')
    kwargs = {}
    for name, value in data.items():
        typ = known[name].type
        key = f'{prefix}{name}'
        if dataclasses.is_dataclass(typ):
            kwargs[name] = _build(typ, value, f'{key}.')
        else:
            kwargs[name] = _coerce(value, typ, key)
        if key in CHOICES and kwargs[name] not in CHOICES[key]:
            raise ConfigError(f"must be one of {', '.join(CHOICES[key])}", key=key)
    return cls(**kwargs)


def parse_config(data, base_dir=None):
    """Build a RunConfig from a parsed document; relative paths resolve against base_dir."""
    config = _build(RunConfig, data or {})
    if base_dir is not None:
        base_dir = Path(base_dir)
        replacements = {}
        for key in PATH_KEYS:
            block, _, name = key.rpartition('.')
            owner = getattr(config, block) if block else config
            value = getattr(owner, name)
            if value and not Path(value).is_absolute():
                replacements[key] = str((base_dir / value).resolve())
        for key, value in replacements.items():
            block, _, name = key.rpartition('.')
            if block:
                config = dataclasses.replace(
                    config, **{block: dataclasses.replace(getattr(config, block), **{name: value})}
                )
            else:
                config = dataclasses.replace(config, **{name: value})
    field_block = (data or {}).get('field', {})
    if not isinstance(field_block, dict):
        field_block = {}
    if field_block.get('mode_file') and field_block.get('decay_length_nm') is not None:
        raise ConfigError("give either decay_length_nm or mode_file, not both", key='field')
    validate(config)
    return config


def validate(config):
    """Referenced files must exist and the derived physics objects must build."""
    for key in PATH_KEYS:
        block, _, name = key.rpartition('.')
        owner = getattr(config, block) if block else config
        value = getattr(owner, name)
        if value and not Path(value).exists():
            raise ConfigError(f"file not found: {value}", key=key)
    try:
        constants = config.constants.build()
        config.trap.build()
        config.array.build()
        config.scan.loading()
        config.scan.coordinates()
        if not config.field.mode_file:
            config.field.build()
        config.build_saturation(constants)
    except ConfigError:
        raise
    except AtomScanError as err:
        raise ConfigError(str(err)) from None


def load_config(path):
    """Read a JSON or YAML configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    text = path.read_text(encoding='utf-8')
    if path.suffix.lower() in YAML_SUFFIXES:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as err:
            mark = getattr(err, 'problem_mark', None)
            raise ConfigError(f"invalid YAML in {path.name}", line=mark.line + 1 if mark else None) from None
    else:
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON in {path.name}: {err.msg}", line=err.lineno) from None
    logger.debug("Loaded configuration %s", path)
    return parse_config(data, base_dir=path.parent)


def config_to_dict(config):
    """Resolved configuration in the document schema; a tabulated mode drops the analytic keys."""
    data = dataclasses.asdict(config)
    if config.field.mode_file:
        data['field'].update(decay_length_nm=None, r_min_nm=None)
    return data
