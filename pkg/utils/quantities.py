"""
Physical Quantities
===================
Atomic constants, tweezer trap parameters and the derived scalars the field,
heating and thermometry modules consume. Everything is SI internally; unit
conversion happens where configuration files are parsed.
"""

import math
from dataclasses import dataclass, field

from scipy import constants as sc

from utils.errors import InvalidParameterError

# Cs-133 D2 line reference values
CS_MASS = 132.905451931 * sc.atomic_mass
CS_D2_WAVELENGTH = 852.347e-9
CS_D2_GAMMA = 2 * math.pi * 5.2227e6
CS_D2_RECOIL = 2 * math.pi * 2.0663e3

# Tweezer parameters of the reference apparatus
TRAP_DEPTH_K = 340e-6
TRAP_FREQUENCY = 2 * math.pi * 30.1e3
TRAP_WAIST = 1.2e-6
TWEEZER_WAVELENGTH = 933e-9
N_TRUNC = 130


def _require_positive(name, value):
    if not value > 0:
        raise InvalidParameterError(f"{name} must be > 0, got {value!r}")


def _require_non_negative(name, value):
    if not value >= 0:
        raise InvalidParameterError(f"{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class PhysicalConstants:
    """
    Constants block for a two-level atom on the D2 line.

    omega_0 is derived from the wavelength and sigma_0 defaults to the
    two-level maximum 3λ²/2π when left unset. omega_recoil and gravity may be
    set to 0 to switch recoil or free fall off.
    """

    hbar: float = sc.hbar
    k_boltzmann: float = sc.k
    atom_mass: float = CS_MASS
    wavelength_d2: float = CS_D2_WAVELENGTH
    gamma: float = CS_D2_GAMMA
    omega_recoil: float = CS_D2_RECOIL
    sigma_0: float = None
    gravity: float = 9.81
    omega_0: float = field(init=False)

    def __post_init__(self):
        for name in ("hbar", "k_boltzmann", "atom_mass", "wavelength_d2", "gamma"):
            _require_positive(name, getattr(self, name))
        _require_non_negative("omega_recoil", self.omega_recoil)
        _require_non_negative("gravity", self.gravity)
        if self.sigma_0 is None:
            object.__setattr__(self, "sigma_0", 3 * self.wavelength_d2 ** 2 / (2 * math.pi))
        _require_positive("sigma_0", self.sigma_0)
        object.__setattr__(self, "omega_0", 2 * math.pi * sc.c / self.wavelength_d2)

    @property
    def wavenumber(self):
        return 2 * math.pi / self.wavelength_d2


@dataclass(frozen=True)
class TrapSpec:
    """
    Tweezer trap: depth U (J), radial angular frequency, 1/e² waist and the
    number of oscillator levels kept in the heating model.

    omega_axial defaults to omega_trap / 5 and is only used by the
    release-recapture simulation.
    """

    depth: float = sc.k * TRAP_DEPTH_K
    omega_trap: float = TRAP_FREQUENCY
    waist: float = TRAP_WAIST
    n_trunc: int = N_TRUNC
    omega_axial: float = None
    wavelength: float = TWEEZER_WAVELENGTH

    def __post_init__(self):
        _require_positive("depth", self.depth)
        _require_positive("omega_trap", self.omega_trap)
        _require_positive("waist", self.waist)
        _require_positive("wavelength", self.wavelength)
        if int(self.n_trunc) != self.n_trunc or self.n_trunc < 2:
            raise InvalidParameterError(f"n_trunc must be an integer >= 2, got {self.n_trunc!r}")
        object.__setattr__(self, "n_trunc", int(self.n_trunc))
        if self.omega_axial is None:
            object.__setattr__(self, "omega_axial", self.omega_trap / 5)
        _require_positive("omega_axial", self.omega_axial)

    def check_ladder(self, constants):
        """Raise unless n_trunc fits inside the physical ladder of bound levels."""
        n_bound = bound_state_count(self.depth, self.omega_trap, constants)
        if self.n_trunc > n_bound:
            raise InvalidParameterError(
                f"n_trunc={self.n_trunc} exceeds the {n_bound} bound states of the trap"
            )
        return n_bound


def lamb_dicke(constants, trap):
    """η = √(ω_r/ω_T)."""
    _require_positive("omega_trap", trap.omega_trap)
    return math.sqrt(constants.omega_recoil / trap.omega_trap)


def bound_state_count(depth, omega_trap, constants):
    """Number of harmonic levels below the trap depth, floor(U / ħω_T)."""
    _require_positive("depth", depth)
    _require_positive("omega_trap", omega_trap)
    return math.floor(depth / (constants.hbar * omega_trap))


def recoil_frequency(constants):
    """Free-space recoil angular frequency ħk²/2m derived from the constants."""
    return constants.hbar * constants.wavenumber ** 2 / (2 * constants.atom_mass)


def saturation_intensity(constants):
    """I_sat = ħω₀Γ / 2σ₀ in W/m²."""
    return constants.hbar * constants.omega_0 * constants.gamma / (2 * constants.sigma_0)


def thermal_position_spread(temperature, omega, constants):
    """RMS displacement √(k_B T / m ω²) of a thermal atom in a harmonic trap."""
    _require_non_negative("temperature", temperature)
    return math.sqrt(constants.k_boltzmann * temperature / (constants.atom_mass * omega ** 2))
