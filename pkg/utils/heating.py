"""
Recoil Heating Model
====================
Motion of a tweezer-trapped atom on a truncated harmonic ladder. Every photon
scattering event redistributes the population with the Franck-Condon factors

    |<n|D(η)|m>|² = e^{-η²} (m!/n!) η^{2(n-m)} [L_m^{(n-m)}(η²)]²   (n >= m)

and population pushed above the truncation is counted as lost. Survival is
the population left after the expected number of events of a light pulse.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import brentq
from scipy.special import gammaln
from scipy.stats import poisson

from utils.errors import (
    InsufficientSignalError,
    InvalidParameterError,
    OutOfDomainError,
    UnsupportedRegimeError,
)
from utils.fieldmodel import (
    AnalyticEvanescentModel,
    TabulatedMode,
    in_domain,
    intensity_at,
    saturation_parameter,
    scattering_rate,
)
from utils.quantities import (
    PhysicalConstants,
    bound_state_count,
    lamb_dicke,
    thermal_position_spread,
)

logger = logging.getLogger(__name__)

# Expected event count above which the Poisson spread is ignored
POISSON_DISPATCH = 50
POISSON_TAIL = 1e-9
# Above this power of the matrix, use binary exponentiation
DIRECT_POWER_LIMIT = 64
GAUSS_HERMITE_NODES = 9


@dataclass(frozen=True, eq=False)
class FranckCondonMatrix:
    """
    Per-event transition probabilities, probs[n, m] = |<n|D(η)|m>|².

    kicks = 2 stores the square of the single-kick matrix (absorption and
    emission recoil applied separately).
    """

    eta: float
    size: int
    probs: np.ndarray
    kicks: int = 1

    @property
    def column_deficits(self):
        """Per-event probability of leaving the truncated space from each level."""
        return np.clip(1.0 - self.probs.sum(axis=0), 0.0, None)

    def per_event(self, double_kick=False):
        if not double_kick or self.kicks == 2:
            return self
        return FranckCondonMatrix(self.eta, self.size, self.probs @ self.probs, kicks=2)


@dataclass(frozen=True, eq=False)
class MotionalState:
    """Populations of the oscillator levels; a total below 1 is lost population."""

    pop: np.ndarray

    def __post_init__(self):
        pop = np.asarray(self.pop, dtype=float)
        if pop.ndim != 1:
            raise InvalidParameterError("population must be a vector")
        if np.any(pop < 0):
            raise InvalidParameterError("populations must be >= 0")
        if pop.sum() > 1 + 1e-12:
            raise InvalidParameterError(f"total population {pop.sum()!r} exceeds 1")
        object.__setattr__(self, "pop", pop)

    @property
    def total(self):
        return float(self.pop.sum())

    @property
    def size(self):
        return self.pop.size


@dataclass(frozen=True)
class SurvivalCurvePoint:
    coordinate: float
    survival: float
    n_events_mean: float
    intensity: float = 0.0
    saturation: float = 0.0
    scattering_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.survival <= 1.0:
            raise InvalidParameterError(f"survival {self.survival!r} outside [0, 1]")


@dataclass(frozen=True)
class HeatingOptions:
    """
    Model variants, both off by default.

    double_kick: apply the Franck-Condon matrix twice per scattering event.
    position_average: average the intensity over the thermal position spread
        along the scan axis instead of using the trap centre.
    """

    double_kick: bool = False
    position_average: bool = False


def franck_condon_matrix(eta, n_trunc):
    """
    Build the Franck-Condon matrix on the first n_trunc oscillator levels.

    Each diagonal band α = n - m is generated with the three-term Laguerre
    recurrence in m, carried on the normalized amplitude
    g_m = e^{-x/2} x^{α/2} √(m!/(m+α)!) L_m^{(α)}(x), x = η², whose starting
    value comes from log-factorials. g_m² is the matrix entry; g never
    overflows even where L_m^{(α)} alone would.
    """
    if not 0 <= eta < 1:
        if eta >= 1:
            raise UnsupportedRegimeError(f"eta = {eta} is outside the Lamb-Dicke regime handled (eta < 1)")
        raise InvalidParameterError(f"eta must be >= 0, got {eta!r}")
    if int(n_trunc) != n_trunc or n_trunc < 2:
        raise InvalidParameterError(f"n_trunc must be an integer >= 2, got {n_trunc!r}")
    n = int(n_trunc)
    if eta == 0:
        return FranckCondonMatrix(0.0, n, np.eye(n))

    x = eta * eta
    alpha = np.arange(n, dtype=float)
    g_prev = np.zeros(n)
    g = np.exp(-0.5 * x + 0.5 * alpha * math.log(x) - 0.5 * gammaln(alpha + 1))

    lower = np.zeros((n, n))
    for m in range(n):
        band = np.arange(n - m)
        lower[m + band, m] = g[band] ** 2
        g_next = (
            (2 * m + 1 + alpha - x) * g - np.sqrt(m * (m + alpha)) * g_prev
        ) / np.sqrt((m + 1) * (m + 1 + alpha))
        g_prev, g = g, g_next

    probs = lower + np.tril(lower, -1).T
    return FranckCondonMatrix(float(eta), n, probs)


def thermal_state(temperature, trap, constants):
    """
    Thermal populations p_n ∝ exp(-n ħω_T / k_B T), normalized over the full
    ladder of bound levels and then truncated to n_trunc.
    """
    if not temperature >= 0:
        raise InvalidParameterError(f"temperature must be >= 0, got {temperature!r}")
    pop = np.zeros(trap.n_trunc)
    if temperature == 0:
        pop[0] = 1.0
        return MotionalState(pop)

    n_ladder = max(bound_state_count(trap.depth, trap.omega_trap, constants), trap.n_trunc)
    x = constants.hbar * trap.omega_trap / (constants.k_boltzmann * temperature)
    weights = np.exp(-x * np.arange(n_ladder))
    weights /= weights.sum()
    return MotionalState(weights[: trap.n_trunc])


def mean_occupation(state):
    total = state.total
    if total == 0:
        return 0.0
    return float(np.dot(np.arange(state.size), state.pop) / total)


def apply_events(state, fc, k):
    """Population after k scattering events, fc^k · pop."""
    if state.size != fc.size:
        raise InvalidParameterError(
            f"state has {state.size} levels but the Franck-Condon matrix has {fc.size}"
        )
    if int(k) != k or k < 0:
        raise InvalidParameterError(f"event count must be a non-negative integer, got {k!r}")
    k = int(k)
    if k == 0:
        return state
    if k > DIRECT_POWER_LIMIT:
        pop = np.linalg.matrix_power(fc.probs, k) @ state.pop
    else:
        pop = state.pop
        for _ in range(k):
            pop = fc.probs @ pop
    # Leakage only removes population; guard the last ulp
    total = pop.sum()
    if total > state.total:
        pop *= state.total / total
    return MotionalState(pop)


def survival_probability(state0, fc, rate, duration):
    """
    Population retained after a pulse with mean event count N = rate·duration.

    For N <= 50 the event count is Poisson distributed and the retained
    population is averaged over it; above that the matrix is applied round(N)
    times.
    """
    if not rate >= 0:
        raise InvalidParameterError(f"scattering rate must be >= 0, got {rate!r}")
    if not duration >= 0:
        raise InvalidParameterError(f"duration must be >= 0, got {duration!r}")
    if state0.size != fc.size:
        raise InvalidParameterError("state and Franck-Condon matrix sizes differ")

    n_mean = rate * duration
    if n_mean == 0:
        survival = state0.total
    elif n_mean <= POISSON_DISPATCH:
        k_max = int(poisson.ppf(1.0 - POISSON_TAIL, n_mean))
        weights = poisson.pmf(np.arange(k_max + 1), n_mean)
        pop = state0.pop
        survival = 0.0
        for weight in weights:
            survival += weight * pop.sum()
            pop = fc.probs @ pop
    else:
        survival = apply_events(state0, fc, int(round(n_mean))).total
    return float(min(max(survival, 0.0), 1.0))


def _as_sites(trap_sites):
    sites = np.asarray(trap_sites, dtype=float)
    if sites.ndim == 0:
        sites = sites.reshape(1)
    if sites.ndim == 1:
        sites = np.stack([sites, np.zeros_like(sites)], axis=-1)
    if sites.ndim != 2 or sites.shape[1] != 2:
        raise InvalidParameterError("trap sites must be displacements y or (y, z) pairs")
    return sites


@dataclass(frozen=True, eq=False)
class HeatingModel:
    """
    Field, saturation, trap and initial thermal state bundled for repeated
    survival evaluations. The Franck-Condon matrix and the initial state are
    built once.
    """

    field: object
    sat: object
    trap: object
    temperature: float
    duration: float
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    power: float = None
    options: HeatingOptions = field(default_factory=HeatingOptions)

    def __post_init__(self):
        if not self.duration >= 0:
            raise InvalidParameterError(f"duration must be >= 0, got {self.duration!r}")
        if isinstance(self.field, TabulatedMode) and self.power is None:
            raise InvalidParameterError("a tabulated mode needs the guided power")
        if not isinstance(self.field, (AnalyticEvanescentModel, TabulatedMode)):
            raise InvalidParameterError(f"unsupported field model {type(self.field).__name__}")
        self.trap.check_ladder(self.constants)
        eta = lamb_dicke(self.constants, self.trap)
        fc = franck_condon_matrix(eta, self.trap.n_trunc).per_event(self.options.double_kick)
        object.__setattr__(self, "fc", fc)
        object.__setattr__(self, "state0", thermal_state(self.temperature, self.trap, self.constants))
        logger.debug(
            "heating model: eta=%.4f, n_trunc=%d, initial population %.4f",
            eta, self.trap.n_trunc, self.state0.total,
        )

    def in_domain(self, y, z=0.0):
        return in_domain(self.field, y, z)

    def intensity(self, y, z=0.0):
        """Intensity seen by the atom at (y, z); thermally averaged if enabled."""
        centre = intensity_at(self.field, y, z, self.power)
        if not self.options.position_average or self.temperature == 0:
            return centre
        sigma = thermal_position_spread(self.temperature, self.trap.omega_trap, self.constants)
        nodes, weights = hermegauss(GAUSS_HERMITE_NODES)
        weights = weights / weights.sum()
        offsets = y + sigma * nodes
        if isinstance(self.field, AnalyticEvanescentModel):
            # Nodes inside the cutoff count at the cutoff
            r = np.maximum(np.hypot(offsets, z), self.field.r_min)
            values = intensity_at(self.field, r, 0.0)
        else:
            offsets = np.clip(offsets, self.field.y_grid[0], self.field.y_grid[-1])
            values = intensity_at(self.field, offsets, z, self.power)
        return float(np.dot(weights, values))

    def survival_at(self, y, z=0.0, duration=None, coordinate=None):
        duration = self.duration if duration is None else duration
        intensity = self.intensity(y, z)
        rate = scattering_rate(intensity, self.sat)
        survival = survival_probability(self.state0, self.fc, rate, duration)
        return SurvivalCurvePoint(
            coordinate=y if coordinate is None else coordinate,
            survival=survival,
            n_events_mean=rate * duration,
            intensity=intensity,
            saturation=float(saturation_parameter(intensity, self.sat)),
            scattering_rate=rate,
        )

    def with_power(self, power):
        if isinstance(self.field, AnalyticEvanescentModel):
            return HeatingModel(
                self.field.with_power(power), self.sat, self.trap, self.temperature,
                self.duration, self.constants, None, self.options,
            )
        return HeatingModel(
            self.field, self.sat, self.trap, self.temperature,
            self.duration, self.constants, power, self.options,
        )


def survival_vs_position(trap_sites, field, sat, trap, temperature, duration,
                         constants=None, power=None, options=None, workers=1, model=None):
    """
    Survival at each trap site after a pulse of the given duration.

    Sites are transverse displacements y from the guide axis, or (y, z)
    pairs. A site outside the field's domain raises OutOfDomainError tagged
    with its index.
    """
    if model is None:
        model = HeatingModel(
            field, sat, trap, temperature, duration,
            constants or PhysicalConstants(), power, options or HeatingOptions(),
        )
    sites = _as_sites(trap_sites)

    def evaluate(index):
        y, z = sites[index]
        try:
            return model.survival_at(y, z)
        except OutOfDomainError as err:
            raise OutOfDomainError(f"site {index} (y = {y * 1e6:.4f} um): {err}", site=index) from err

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(evaluate, range(len(sites))))
    return [evaluate(i) for i in range(len(sites))]


def survival_vs_duration(model, durations, y, z=0.0, normalize=False):
    """
    Survival at one site as a function of pulse duration. With normalize, each
    value is divided by the zero-duration survival.
    """
    durations = np.asarray(durations, dtype=float)
    if np.any(durations < 0):
        raise InvalidParameterError("pulse durations must be >= 0")
    reference = model.state0.total if normalize else 1.0
    curve = []
    for duration in durations:
        point = model.survival_at(y, z, duration=duration, coordinate=float(duration))
        if normalize and reference > 0:
            point = SurvivalCurvePoint(
                coordinate=point.coordinate,
                survival=min(point.survival / reference, 1.0),
                n_events_mean=point.n_events_mean,
                intensity=point.intensity,
                saturation=point.saturation,
                scattering_rate=point.scattering_rate,
            )
        curve.append(point)
    return curve


def half_survival_radius(model, r_max=20e-6, level=0.5, xtol=1e-10):
    """Distance from the guide axis at which survival crosses `level`."""
    if isinstance(model.field, AnalyticEvanescentModel):
        r_min = model.field.r_min
    else:
        r_min = max(0.0, model.field.y_grid[0])
        r_max = min(r_max, model.field.y_grid[-1])

    def excess(r):
        return model.survival_at(r).survival - level

    low, high = excess(r_min), excess(r_max)
    if low > 0 or high < 0:
        raise InsufficientSignalError(
            f"survival does not cross {level} between {r_min * 1e6:.3f} and {r_max * 1e6:.3f} um"
        )
    return brentq(excess, r_min, r_max, xtol=xtol)
