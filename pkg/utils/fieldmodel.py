"""
Evanescent Field Models
=======================
Intensity of the guided mode outside the waveguide core, either from the
asymptotic law

    I(r) = (P / πρ) (1/r) exp(-2r/ρ)

or from a tabulated cross-section of the mode (normalized to 1 W of guided
power). Also holds the optical depth, saturation parameter and scattering
rate that turn an intensity into photon scattering events.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from utils.errors import InvalidParameterError, OutOfDomainError
from utils.quantities import saturation_intensity

# Half-width of the 180 nm wide coupler
R_MIN = 90e-9
CORE_CROSS_SECTION = (180e-9, 200e-9)


@dataclass(frozen=True)
class AnalyticEvanescentModel:
    """Guided power P (W), decay length ρ (m) and the validity cutoff r_min (m)."""

    power: float
    decay_length: float
    r_min: float = R_MIN

    def __post_init__(self):
        if not self.power >= 0:
            raise InvalidParameterError(f"power must be >= 0, got {self.power!r}")
        if not self.decay_length > 0:
            raise InvalidParameterError(f"decay_length must be > 0, got {self.decay_length!r}")
        if not self.r_min > 0:
            raise InvalidParameterError(f"r_min must be > 0, got {self.r_min!r}")

    def with_power(self, power):
        return AnalyticEvanescentModel(power, self.decay_length, self.r_min)


@dataclass(frozen=True, eq=False)
class TabulatedMode:
    """
    Normalized intensity I/P (m⁻²) of one guided mode sampled on a uniform
    rectangular (y, z) grid. Power enters only at query time.
    """

    y_grid: np.ndarray
    z_grid: np.ndarray
    intensity: np.ndarray
    cross_section: tuple = CORE_CROSS_SECTION

    def __post_init__(self):
        y = np.asarray(self.y_grid, dtype=float)
        z = np.asarray(self.z_grid, dtype=float)
        values = np.asarray(self.intensity, dtype=float)
        if values.shape != (y.size, z.size):
            raise InvalidParameterError(
                f"intensity grid has shape {values.shape}, expected {(y.size, z.size)}"
            )
        if y.size < 2 or z.size < 2:
            raise InvalidParameterError("tabulated mode needs at least 2 nodes per axis")
        for name, axis in (("y", y), ("z", z)):
            steps = np.diff(axis)
            if np.any(steps <= 0):
                raise InvalidParameterError(f"{name} grid must be strictly ascending")
            if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]):
                raise InvalidParameterError(f"{name} grid spacing is not uniform")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidParameterError("intensity values must be finite and >= 0")
        object.__setattr__(self, "y_grid", y)
        object.__setattr__(self, "z_grid", z)
        object.__setattr__(self, "intensity", values)
        object.__setattr__(
            self, "_interpolator", RegularGridInterpolator((y, z), values, method="linear")
        )

    def contains(self, y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        return (
            (y >= self.y_grid[0]) & (y <= self.y_grid[-1])
            & (z >= self.z_grid[0]) & (z <= self.z_grid[-1])
        )


@dataclass(frozen=True)
class SaturationContext:
    i_sat: float
    gamma: float
    sigma_0: float
    omega_0: float

    def __post_init__(self):
        for name in ("i_sat", "gamma", "sigma_0", "omega_0"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0")

    @classmethod
    def from_constants(cls, constants):
        return cls(
            i_sat=saturation_intensity(constants),
            gamma=constants.gamma,
            sigma_0=constants.sigma_0,
            omega_0=constants.omega_0,
        )


def intensity_analytic(model, r):
    """
    Evaluate the asymptotic evanescent law at distance r (scalar or array).

    Raises OutOfDomainError for any r < r_min: inside and near the core the
    law is not valid and the value is never clamped.
    """
    r = np.asarray(r, dtype=float)
    if np.any(~(r >= model.r_min)):
        bad = float(np.min(r))
        raise OutOfDomainError(
            f"r = {bad * 1e9:.1f} nm is inside the validity cutoff r_min = {model.r_min * 1e9:.1f} nm"
        )
    value = (model.power / (math.pi * model.decay_length)) / r * np.exp(-2.0 * r / model.decay_length)
    return value if value.ndim else float(value)


def sample_tabulated(mode, y, z, power):
    """Bilinear interpolation of the tabulated mode, scaled to the guided power."""
    if not power >= 0:
        raise InvalidParameterError(f"power must be >= 0, got {power!r}")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    y, z = np.broadcast_arrays(y, z)
    if not np.all(mode.contains(y, z)):
        raise OutOfDomainError("query lies outside the tabulated mode grid")
    points = np.stack([y.ravel(), z.ravel()], axis=-1)
    value = mode._interpolator(points).reshape(y.shape) * power
    return value if value.ndim else float(value)


def intensity_at(field, y, z=0.0, power=None):
    """
    Intensity at the transverse position (y, z) relative to the guide axis.

    The analytic model uses r = √(y² + z²) and its own power; a tabulated
    mode needs the guided power passed in.
    """
    if isinstance(field, AnalyticEvanescentModel):
        return intensity_analytic(field, np.hypot(y, z))
    if isinstance(field, TabulatedMode):
        if power is None:
            raise InvalidParameterError("a tabulated mode needs the guided power")
        return sample_tabulated(field, y, z, power)
    raise InvalidParameterError(f"unsupported field model {type(field).__name__}")


def in_domain(field, y, z=0.0):
    """Element-wise validity of (y, z) queries for either field model."""
    if isinstance(field, AnalyticEvanescentModel):
        return np.hypot(y, z) >= field.r_min
    return field.contains(y, z)


def optical_depth(sigma_0, intensity, power):
    """Single-atom optical depth σ₀I/P."""
    if not power > 0:
        raise InvalidParameterError("optical depth is defined per unit guided power; power must be > 0")
    od = sigma_0 * np.asarray(intensity, dtype=float) / power
    return od if od.ndim else float(od)


def saturation_parameter(intensity, sat):
    intensity = np.asarray(intensity, dtype=float)
    if np.any(intensity < 0):
        raise InvalidParameterError("intensity must be >= 0")
    return intensity / sat.i_sat


def scattering_rate(intensity, sat):
    """R_sc = (Γ/2) s/(1+s) with s = I/I_sat, in photons per second."""
    s = saturation_parameter(intensity, sat)
    rate = 0.5 * sat.gamma * s / (1.0 + s)
    return rate if rate.ndim else float(rate)
