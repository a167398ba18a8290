"""
Parameter Estimation
====================
Least-squares fits shared by the analysis commands:

- straight lines with weights (tilt of the guide, log-linear starts)
- the evanescent decay length from intensity samples
- the temperature of trapped atoms from release-recapture curves, by
  matching a Monte Carlo simulation of the ballistic flight
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from utils.errors import (
    ConvergenceError,
    InsufficientSignalError,
    InvalidParameterError,
    UnsupportedRegimeError,
)

logger = logging.getLogger(__name__)

TEMPERATURE_BOUNDS = (1e-7, 1e-3)
INNER_SEED = 20240601
BOOTSTRAP_RESAMPLES = 20
MIN_SURVIVAL_SPAN = 0.2
# Rejection sampling gives up after this many batches of unbound draws
MAX_DRAW_BATCHES = 1000
# Fits closer than this to the lower bound (in ln T) are flagged
BOUND_TOLERANCE = 0.05


@dataclass
class FitResult:
    params: dict
    std_errors: dict
    residual_norm: float
    iterations: int
    converged: bool
    residuals: np.ndarray = None
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.std_errors.items():
            if value < 0:
                raise InvalidParameterError(f"standard error of '{name}' is negative")

    def records(self):
        """One summary row per parameter, as written to fit_result.json."""
        return [
            {
                "param": name,
                "value": float(value),
                "std_error": float(self.std_errors.get(name, float("nan"))),
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "residual_norm": float(self.residual_norm),
            }
            for name, value in self.params.items()
        ]


@dataclass(frozen=True, eq=False)
class ReleaseRecaptureCurve:
    release_times: np.ndarray
    survival: np.ndarray
    n_samples: int
    seed: int = 0

    def __post_init__(self):
        times = np.asarray(self.release_times, dtype=float)
        survival = np.asarray(self.survival, dtype=float)
        if times.shape != survival.shape or times.ndim != 1:
            raise InvalidParameterError("release times and survival must be vectors of equal length")
        if np.any(np.diff(times) < 0):
            raise InvalidParameterError("release times must be ascending")
        if np.any((survival < 0) | (survival > 1)):
            raise InvalidParameterError("survival entries must lie in [0, 1]")
        if self.n_samples < 1:
            raise InvalidParameterError("n_samples must be >= 1")
        object.__setattr__(self, "release_times", times)
        object.__setattr__(self, "survival", survival)


def weighted_line_fit(x, y, weights=None):
    """Least-squares line y = intercept + slope·x with optional weights."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if x.shape != y.shape or x.shape != w.shape:
        raise InvalidParameterError("x, y and weights must have the same length")
    if x.size < 2 or np.ptp(x) == 0:
        raise InsufficientSignalError("a line fit needs at least two distinct x values")
    if np.any(w < 0):
        raise InvalidParameterError("weights must be >= 0")

    sqrt_w = np.sqrt(w)
    design = np.stack([np.ones_like(x), x], axis=-1)
    coef, _, _, _ = np.linalg.lstsq(design * sqrt_w[:, None], y * sqrt_w, rcond=None)
    residuals = y - design @ coef
    dof = x.size - 2
    if dof > 0:
        s2 = float(np.sum(w * residuals ** 2)) / dof
        cov = s2 * np.linalg.inv(design.T @ (design * w[:, None]))
        errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        errors = np.array([float("nan"), float("nan")])
    return FitResult(
        params={"intercept": float(coef[0]), "slope": float(coef[1])},
        std_errors={"intercept": float(errors[0]), "slope": float(errors[1])},
        residual_norm=float(np.sqrt(np.sum(w * residuals ** 2))),
        iterations=1,
        converged=True,
        residuals=residuals,
    )


def log_intensity_model(r, decay_length, power=None, log_prefactor=None):
    """ln I(r) of the evanescent law, with either the power or a free ln-prefactor."""
    r = np.asarray(r, dtype=float)
    if log_prefactor is None:
        log_prefactor = math.log(power / (math.pi * decay_length))
    return log_prefactor - np.log(r) - 2.0 * r / decay_length


def fit_decay_length(r, intensity, power=None, weights=None, free_prefactor=False, max_nfev=200):
    """
    Decay length ρ from samples (r, I) of the evanescent intensity.

    Residuals are taken in log-intensity space. With a known power, ρ also
    sets the prefactor P/πρ; with free_prefactor the prefactor is a second
    parameter and the result does not depend on the intensity scale. The
    start value comes from the slope of ln(I·r) against r, which is -2/ρ.
    """
    r = np.asarray(r, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    if r.shape != intensity.shape or r.ndim != 1:
        raise InvalidParameterError("r and intensity must be vectors of equal length")
    if r.size < 3:
        raise InvalidParameterError(f"a decay-length fit needs at least 3 samples, got {r.size}")
    if np.any(~(r > 0)) or np.any(~(intensity > 0)):
        raise InvalidParameterError("all radii and intensities must be > 0")
    if not free_prefactor and not (power is not None and power > 0):
        raise InvalidParameterError("a fixed-prefactor fit needs the guided power > 0")
    w = np.ones_like(r) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != r.shape or np.any(w < 0):
        raise InvalidParameterError("weights must be >= 0 and match the samples")
    sqrt_w = np.sqrt(w)
    log_i = np.log(intensity)

    start = weighted_line_fit(r, np.log(intensity * r), w)
    slope = start.params["slope"]
    rho0 = -2.0 / slope if slope < 0 else float(np.ptp(r))
    x0 = [math.log(rho0)]
    if free_prefactor:
        x0.append(start.params["intercept"])

    def residuals(params):
        rho = math.exp(params[0])
        c = params[1] if free_prefactor else None
        return sqrt_w * (log_i - log_intensity_model(r, rho, power, c))

    result = least_squares(
        residuals, x0, method="lm", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=max_nfev
    )
    rho = math.exp(result.x[0])
    if not result.success:
        raise ConvergenceError(
            f"decay-length fit did not converge ({result.message})", last_iterate=rho
        )

    n, p = r.size, len(x0)
    rss = float(np.sum(result.fun ** 2))
    jac = result.jac
    cov = np.linalg.pinv(jac.T @ jac) * (rss / (n - p) if n > p else float("nan"))
    se_u = math.sqrt(max(cov[0, 0], 0.0))

    params = {"decay_length": rho}
    errors = {"decay_length": rho * se_u}
    if free_prefactor:
        params["log_prefactor"] = float(result.x[1])
        errors["log_prefactor"] = math.sqrt(max(cov[1, 1], 0.0))
    logger.info("Decay length fit: %.4f nm ± %.4f nm (%d evaluations)", rho * 1e9, rho * se_u * 1e9, result.nfev)
    return FitResult(
        params=params,
        std_errors=errors,
        residual_norm=math.sqrt(rss),
        iterations=int(result.nfev),
        converged=True,
        residuals=result.fun / np.where(sqrt_w > 0, sqrt_w, 1.0),
        extra={"initial_decay_length": rho0},
    )


def _trap_potential(positions, trap, constants):
    """Gaussian tweezer potential (J), zero at infinity, at positions (..., 3)."""
    rayleigh = math.sqrt(2.0 * trap.depth / (constants.atom_mass * trap.omega_axial ** 2))
    x, y, z = positions[..., 0], positions[..., 1], positions[..., 2]
    spread = 1.0 + (z / rayleigh) ** 2
    return -trap.depth / spread * np.exp(-2.0 * (x ** 2 + y ** 2) / (trap.waist ** 2 * spread))


def _draw_bound_atoms(temperature, trap, constants, n_samples, seed):
    """Thermal positions and velocities of atoms bound at release, by rejection."""
    kt = constants.k_boltzmann * temperature
    m = constants.atom_mass
    sigma_x = math.sqrt(kt / (m * trap.omega_trap ** 2))
    sigma_z = math.sqrt(kt / (m * trap.omega_axial ** 2))
    sigma_v = math.sqrt(kt / m)
    scale_x = np.array([sigma_x, sigma_x, sigma_z])

    positions, velocities, kept = [], [], 0
    for batch in range(MAX_DRAW_BATCHES):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, batch])))
        draw = rng.standard_normal((n_samples, 6))
        x = draw[:, :3] * scale_x
        v = draw[:, 3:] * sigma_v
        energy = 0.5 * m * np.sum(v ** 2, axis=-1) + _trap_potential(x, trap, constants)
        bound = energy < 0
        positions.append(x[bound])
        velocities.append(v[bound])
        kept += int(bound.sum())
        if kept >= n_samples:
            break
    else:
        raise UnsupportedRegimeError(
            f"fewer than {n_samples} of {MAX_DRAW_BATCHES * n_samples} thermal draws are bound at "
            f"T = {temperature * 1e6:.3g} uK"
        )
    return np.concatenate(positions)[:n_samples], np.concatenate(velocities)[:n_samples]


def release_recapture_simulate(temperature, trap, constants, release_times, n_samples, seed=0):
    """
    Monte Carlo release-recapture curve.

    Atoms start from the harmonic thermal distribution (radial frequency on
    x and y, axial frequency on z) with Maxwell-Boltzmann velocities; draws
    that are not bound in the full Gaussian potential are redrawn. Each atom
    flies ballistically with gravity along -x and is recaptured when its
    kinetic plus potential energy is negative when the trap returns.
    """
    if not temperature >= 0:
        raise InvalidParameterError(f"temperature must be >= 0, got {temperature!r}")
    if int(n_samples) != n_samples or n_samples < 1:
        raise InvalidParameterError(f"n_samples must be an integer >= 1, got {n_samples!r}")
    times = np.asarray(release_times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise InvalidParameterError("release times must be an ascending list of values >= 0")
    n_samples = int(n_samples)

    positions, velocities = _draw_bound_atoms(temperature, trap, constants, n_samples, seed)
    survival = recapture_probability(positions, velocities, times, trap, constants)
    return ReleaseRecaptureCurve(times, survival, n_samples, seed)


def recapture_probability(positions, velocities, release_times, trap, constants):
    """Fraction of a fixed set of atoms (positions, velocities: (n, 3)) recaptured after each release time."""
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    g = np.array([-constants.gravity, 0.0, 0.0])
    t = np.asarray(release_times, dtype=float)[None, :, None]
    flown = positions[:, None, :] + velocities[:, None, :] * t + 0.5 * g * t ** 2
    final_velocity = velocities[:, None, :] + g * t
    kinetic = 0.5 * constants.atom_mass * np.sum(final_velocity ** 2, axis=-1)
    recaptured = kinetic + _trap_potential(flown, trap, constants) < 0
    return recaptured.mean(axis=0)


def recapture_chi2(observed, temperature, trap, constants, n_samples=None, seed=INNER_SEED):
    """χ² between an observed curve and the simulation at `temperature`, binomial variances."""
    n_samples = n_samples or observed.n_samples
    model = release_recapture_simulate(temperature, trap, constants, observed.release_times, n_samples, seed)
    p = observed.survival
    variance = np.maximum(p * (1 - p), 1.0 / observed.n_samples) / observed.n_samples
    residuals = p - model.survival
    return float(np.sum(residuals ** 2 / variance)), residuals


def _search_temperature(observed, trap, constants, n_samples, seed, bounds):
    lo, hi = np.log(bounds[0]), np.log(bounds[1])

    def objective(log_t):
        return recapture_chi2(observed, math.exp(log_t), trap, constants, n_samples, seed)[0]

    result = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-3})
    log_t, chi2 = float(result.x), float(result.fun)
    chi2_lo = objective(lo)
    if chi2_lo <= chi2:
        log_t, chi2 = lo, chi2_lo
    at_bound = log_t - lo <= BOUND_TOLERANCE
    return math.exp(log_t), chi2, int(result.nfev), bool(result.success), at_bound


def fit_temperature(observed, trap, constants, n_samples=None, seed=INNER_SEED,
                    bounds=TEMPERATURE_BOUNDS, bootstrap=BOOTSTRAP_RESAMPLES, workers=1):
    """
    Temperature whose simulated release-recapture curve best matches the
    observed one.

    The χ² objective compares against a fixed-seed simulation, so it is
    deterministic, and is minimized over ln T inside `bounds`. The standard
    error is the spread of refits on binomially resampled observations, each
    against a simulation with its own seed.
    """
    if observed.release_times.size < 3:
        raise InsufficientSignalError("thermometry needs at least 3 release times")
    if np.ptp(observed.survival) < MIN_SURVIVAL_SPAN:
        raise InsufficientSignalError(
            f"survival spans only {np.ptp(observed.survival):.3f}; at least {MIN_SURVIVAL_SPAN} is needed"
        )
    n_samples = n_samples or observed.n_samples
    temperature, chi2, nfev, converged, at_bound = _search_temperature(
        observed, trap, constants, n_samples, seed, bounds
    )

    def refit(index):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index, 1])))
        resampled = rng.binomial(observed.n_samples, observed.survival) / observed.n_samples
        replicate = ReleaseRecaptureCurve(observed.release_times, resampled, observed.n_samples, observed.seed)
        return _search_temperature(replicate, trap, constants, n_samples, seed + 1 + index, bounds)[0]

    if bootstrap > 1:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                replicas = list(pool.map(refit, range(bootstrap)))
        else:
            replicas = [refit(i) for i in range(bootstrap)]
        std_error = float(np.std(replicas, ddof=1))
    else:
        std_error = float("nan")

    _, residuals = recapture_chi2(observed, temperature, trap, constants, n_samples, seed)
    flags = ["at_lower_bound"] if at_bound else []
    if at_bound:
        logger.warning("Temperature fit reached the lower search bound %.3g uK", bounds[0] * 1e6)
    logger.info("Temperature fit: %.2f uK ± %.2f uK", temperature * 1e6, std_error * 1e6)
    return FitResult(
        params={"temperature": temperature},
        std_errors={"temperature": std_error},
        residual_norm=math.sqrt(chi2),
        iterations=nfev,
        converged=converged,
        residuals=residuals,
        flags=flags,
    )
