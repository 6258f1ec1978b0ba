"""
Measures on the half-line [0, inf) with exact distribution, put and call functions.

Representations:
    FiniteAtomicMeasure  weighted atoms, the solver's native input
    PiecewiseLaw         atoms plus a right-continuous piecewise-constant density
    AnalyticMeasure      closed-form F and P (Beta(2,3) and user supplied laws)
    MixtureMeasure       positive weight-sums of other measures
    RestrictedMeasure    restriction of any measure to an interval (lo, hi]

Put and call functions follow the usual conventions:
    P(x) = int_0^x (x - y) m(dy),   C(x) = P(x) + mean - x * mass
"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize, stats

logger = logging.getLogger(__name__)

# Default absolute tolerances
EXACT_TOL = 1e-9
DISCRETIZATION_TOL = 1e-6

# Evaluation grid: points per inter-knot interval and far end as a multiple of the support
GRID_REFINEMENT = 32
GRID_EXTENT = 10.0

ArrayLike = Union[float, Sequence[float], np.ndarray]


class MeasureError(ValueError):
    """Custom exception for malformed measures and measure specs."""
    pass


class MeasureDomainError(MeasureError):
    """Raised for arguments outside the domain of a measure operation."""
    pass


class UnsupportedMeasureError(MeasureError):
    """Raised when a representation lacks what an operation needs."""
    pass


def _as_array(x: ArrayLike) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _like(x: ArrayLike, values: np.ndarray):
    """Return a float for scalar input, an array otherwise."""
    if np.ndim(x) == 0:
        return float(values)
    return values


def _check_strike(x: np.ndarray):
    if np.any(x < 0):
        raise MeasureDomainError("put and call strikes must be >= 0")


def _generalized_inverse(cdf: Callable, level: float, upper: float) -> float:
    """inf{x in [0, upper] : cdf(x) >= level} by bracketed root finding."""
    if cdf(0.0) >= level:
        return 0.0
    if cdf(upper) < level:
        return float(upper)
    return float(optimize.brentq(lambda x: cdf(x) - level, 0.0, upper, xtol=1e-15, rtol=1e-15))


class Measure:
    """Interface shared by all measure representations.

    Subclasses provide mass, mean, cdf, put, atom_mass, atoms, breakpoints
    and the integral of another measure's CDF against their continuous part.
    """

    @property
    def atom_at_zero(self) -> float:
        return float(self.atom_mass(0.0))

    @property
    def support_max(self) -> Optional[float]:
        """Finite upper bound of the support, or None when unknown."""
        return None

    def cdf(self, x: ArrayLike):
        raise NotImplementedError

    def put(self, x: ArrayLike):
        raise NotImplementedError

    def atom_mass(self, x: ArrayLike):
        raise NotImplementedError

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        raise NotImplementedError

    def density(self, x: ArrayLike):
        raise UnsupportedMeasureError(f"{type(self).__name__} has no density")

    def call(self, x: ArrayLike):
        values = _as_array(x)
        result = _as_array(self.put(values)) + self.mean - values * self.mass
        return _like(x, result)

    def cdf_left(self, x: ArrayLike):
        """F(x-), the mass of [0, x)."""
        values = _as_array(x)
        return _like(x, _as_array(self.cdf(values)) - _as_array(self.atom_mass(values)))

    def positive_atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        locations, weights = self.atoms()
        keep = locations > 0
        return locations[keep], weights[keep]

    def quantile(self, u: ArrayLike):
        bound = self.support_max
        if bound is None or not np.isfinite(bound):
            raise UnsupportedMeasureError(
                f"{type(self).__name__} needs a finite support bound or a quantile function"
            )
        levels = np.atleast_1d(_as_array(u))
        result = np.array([_generalized_inverse(self.cdf, level, bound) for level in levels])
        return _like(u, result.reshape(np.shape(u)))

    def cdf_integral(self, other: 'Measure', lo: float = -np.inf, hi: float = np.inf,
                     left_limits: bool = True) -> float:
        """Integral of F_other over the open interval (lo, hi) against this measure.

        With left_limits the integrand is F_other(x-), as in the contest payoff.
        """
        locations, weights = self.atoms()
        inside = (locations > lo) & (locations < hi)
        total = 0.0
        if np.any(inside):
            at = locations[inside]
            values = other.cdf_left(at) if left_limits else other.cdf(at)
            total += float(np.dot(weights[inside], values))
        return total + self._continuous_cdf_integral(other, lo, hi)

    def _continuous_cdf_integral(self, other: 'Measure', lo: float, hi: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FiniteAtomicMeasure(Measure):
    """Weighted atoms at strictly increasing locations >= 0."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        locations = np.asarray(self.locations, dtype=float).reshape(-1)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if locations.shape != weights.shape:
            raise MeasureDomainError("locations and weights must have the same length")
        if not (np.all(np.isfinite(locations)) and np.all(np.isfinite(weights))):
            raise MeasureDomainError("atom locations and weights must be finite")
        if np.any(locations < 0):
            raise MeasureDomainError("atom locations must be >= 0")
        if np.any(weights <= 0):
            raise MeasureDomainError("atom weights must be > 0")
        if np.any(np.diff(locations) <= 0):
            raise MeasureDomainError("atom locations must be strictly increasing")
        object.__setattr__(self, 'locations', locations)
        object.__setattr__(self, 'weights', weights)
        # Cumulative mass and first moment, index j covers the first j atoms
        object.__setattr__(self, '_cum_mass', np.concatenate([[0.0], np.cumsum(weights)]))
        object.__setattr__(self, '_cum_moment', np.concatenate([[0.0], np.cumsum(weights * locations)]))

    @classmethod
    def from_atoms(cls, locations: Iterable[float], weights: Iterable[float]) -> 'FiniteAtomicMeasure':
        """Build from unsorted atoms, summing weights at duplicate locations."""
        locations = np.asarray(list(locations), dtype=float).reshape(-1)
        weights = np.asarray(list(weights), dtype=float).reshape(-1)
        if locations.shape != weights.shape:
            raise MeasureDomainError("locations and weights must have the same length")
        if locations.size == 0:
            return cls(locations, weights)
        unique, inverse = np.unique(locations, return_inverse=True)
        merged = np.bincount(inverse, weights=weights, minlength=unique.size)
        return cls(unique, merged)

    def __len__(self) -> int:
        return int(self.locations.size)

    @property
    def mass(self) -> float:
        return float(self._cum_mass[-1])

    @property
    def mean(self) -> float:
        return float(self._cum_moment[-1])

    @property
    def support_max(self) -> Optional[float]:
        return float(self.locations[-1]) if self.locations.size else 0.0

    @property
    def line_slopes(self) -> np.ndarray:
        """Slopes A_j of the supporting lines of the put, one per atom."""
        return self._cum_mass[1:]

    @property
    def line_intercepts(self) -> np.ndarray:
        """Offsets B_j of the supporting lines y -> A_j * y - B_j."""
        return self._cum_moment[1:]

    def cdf(self, x: ArrayLike):
        values = _as_array(x)
        index = np.searchsorted(self.locations, values, side='right')
        return _like(x, self._cum_mass[index])

    def put(self, x: ArrayLike):
        values = _as_array(x)
        _check_strike(values)
        index = np.searchsorted(self.locations, values, side='right')
        return _like(x, values * self._cum_mass[index] - self._cum_moment[index])

    def atom_mass(self, x: ArrayLike):
        values = _as_array(x)
        if not self.locations.size:
            return _like(x, np.zeros_like(values))
        index = np.searchsorted(self.locations, values, side='left')
        clipped = np.minimum(index, self.locations.size - 1)
        hit = (index < self.locations.size) & (self.locations[clipped] == values)
        return _like(x, np.where(hit, self.weights[clipped], 0.0))

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.locations, self.weights

    def breakpoints(self) -> np.ndarray:
        return self.locations

    def density(self, x: ArrayLike):
        return _like(x, np.zeros_like(_as_array(x)))

    def quantile(self, u: ArrayLike):
        if not self.locations.size:
            raise MeasureDomainError("empty measure has no quantile function")
        values = _as_array(u)
        index = np.searchsorted(self._cum_mass[1:], values, side='left')
        index = np.clip(index, 0, self.locations.size - 1)
        return _like(u, self.locations[index])

    def _continuous_cdf_integral(self, other: Measure, lo: float, hi: float) -> float:
        return 0.0

    def scaled(self, factor: float) -> 'FiniteAtomicMeasure':
        return FiniteAtomicMeasure(self.locations, self.weights * factor)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'atomic',
            'atoms': [[float(x), float(w)] for x, w in zip(self.locations, self.weights)],
        }


@dataclass(frozen=True, eq=False)
class PiecewiseLaw(Measure):
    """Atoms plus a piecewise-constant density.

    The density equals density_values[i] on [density_knots[i], density_knots[i+1])
    and vanishes elsewhere. A single knot with no values means no density.
    """

    atom_locations: np.ndarray
    atom_weights: np.ndarray
    density_knots: np.ndarray
    density_values: np.ndarray

    def __post_init__(self):
        locations = np.asarray(self.atom_locations, dtype=float).reshape(-1)
        weights = np.asarray(self.atom_weights, dtype=float).reshape(-1)
        nonzero = weights != 0
        atoms = FiniteAtomicMeasure.from_atoms(locations[nonzero], weights[nonzero])
        knots = np.asarray(self.density_knots, dtype=float).reshape(-1)
        values = np.asarray(self.density_values, dtype=float).reshape(-1)
        if values.size == 0:
            if knots.size > 1:
                raise MeasureDomainError("density knots given without density values")
        elif knots.size != values.size + 1:
            raise MeasureDomainError("need exactly one more density knot than density values")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise MeasureDomainError("density knots and values must be finite")
        if knots.size and knots[0] < 0:
            raise MeasureDomainError("density knots must be >= 0")
        if np.any(np.diff(knots) <= 0):
            raise MeasureDomainError("density knots must be strictly increasing")
        if np.any(values < 0):
            raise MeasureDomainError("density values must be >= 0")
        object.__setattr__(self, 'atom_locations', atoms.locations)
        object.__setattr__(self, 'atom_weights', atoms.weights)
        object.__setattr__(self, 'density_knots', knots)
        object.__setattr__(self, 'density_values', values)
        object.__setattr__(self, '_atoms', atoms)

        widths = np.diff(knots)
        piece_mass = values * widths
        cum_mass = np.concatenate([[0.0], np.cumsum(piece_mass)])
        # int_0^k F_c at every knot k
        cum_put = np.concatenate([[0.0], np.cumsum(cum_mass[:-1] * widths + 0.5 * values * widths ** 2)])
        moment = float(np.sum(0.5 * values * (knots[1:] ** 2 - knots[:-1] ** 2))) if values.size else 0.0
        object.__setattr__(self, '_cum_mass', cum_mass)
        object.__setattr__(self, '_cum_put', cum_put)
        object.__setattr__(self, '_moment', moment)

    @property
    def mass(self) -> float:
        return self._atoms.mass + float(self._cum_mass[-1])

    @property
    def mean(self) -> float:
        return self._atoms.mean + self._moment

    @property
    def support_max(self) -> Optional[float]:
        top = self._atoms.support_max
        if self.density_values.size:
            positive = np.flatnonzero(self.density_values > 0)
            if positive.size:
                top = max(top, float(self.density_knots[positive[-1] + 1]))
        return top

    def _continuous_parts(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Continuous CDF, continuous put and density at the given points."""
        pieces = self.density_values.size
        if pieces == 0:
            zeros = np.zeros_like(values)
            return zeros, zeros, zeros
        knots = self.density_knots
        index = np.searchsorted(knots, values, side='right') - 1
        below = index < 0
        index = np.clip(index, 0, pieces)
        extended = np.append(self.density_values, 0.0)
        offset = np.where(below, 0.0, values - knots[index])
        density = np.where(below, 0.0, extended[index])
        cdf = np.where(below, 0.0, self._cum_mass[index] + density * offset)
        put = np.where(below, 0.0, self._cum_put[index] + self._cum_mass[index] * offset
                       + 0.5 * density * offset ** 2)
        return cdf, put, density

    def cdf(self, x: ArrayLike):
        values = _as_array(x)
        continuous, _, _ = self._continuous_parts(values)
        return _like(x, _as_array(self._atoms.cdf(values)) + continuous)

    def put(self, x: ArrayLike):
        values = _as_array(x)
        _check_strike(values)
        _, continuous, _ = self._continuous_parts(values)
        return _like(x, _as_array(self._atoms.put(values)) + continuous)

    def density(self, x: ArrayLike):
        """Right-continuous density of the continuous part."""
        values = _as_array(x)
        _, _, density = self._continuous_parts(values)
        return _like(x, density)

    def density_left(self, x: ArrayLike):
        """Left limit of the density."""
        values = _as_array(x)
        pieces = self.density_values.size
        if pieces == 0:
            return _like(x, np.zeros_like(values))
        index = np.searchsorted(self.density_knots, values, side='left') - 1
        inside = (index >= 0) & (index < pieces)
        return _like(x, np.where(inside, self.density_values[np.clip(index, 0, pieces - 1)], 0.0))

    def atom_mass(self, x: ArrayLike):
        return self._atoms.atom_mass(x)

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.atom_locations, self.atom_weights

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([self.density_knots, self.atom_locations]))

    def quantile(self, u: ArrayLike):
        """Exact generalized inverse of the CDF."""
        points = self.breakpoints()
        if not points.size:
            raise MeasureDomainError("empty measure has no quantile function")
        values = _as_array(u)
        right = _as_array(self.cdf(points))
        left = _as_array(self.cdf_left(points))
        index = np.searchsorted(right, values, side='left')
        index = np.clip(index, 0, points.size - 1)
        previous = np.maximum(index - 1, 0)
        span = left[index] - right[previous]
        on_atom = (index == 0) | (values > left[index]) | (span <= 0)
        fraction = np.where(on_atom, 0.0, (values - right[previous]) / np.where(span > 0, span, 1.0))
        interpolated = points[previous] + fraction * (points[index] - points[previous])
        return _like(u, np.where(on_atom, points[index], interpolated))

    def _continuous_cdf_integral(self, other: Measure, lo: float, hi: float) -> float:
        if not self.density_values.size:
            return 0.0
        start = np.maximum(self.density_knots[:-1], lo)
        stop = np.minimum(self.density_knots[1:], hi)
        keep = (stop > start) & (self.density_values > 0)
        if not np.any(keep):
            return 0.0
        # int_a^b F_other = P_other(b) - P_other(a)
        increments = _as_array(other.put(stop[keep])) - _as_array(other.put(start[keep]))
        return float(np.dot(self.density_values[keep], increments))

    def scaled(self, factor: float) -> 'PiecewiseLaw':
        return PiecewiseLaw(self.atom_locations, self.atom_weights * factor,
                            self.density_knots, self.density_values * factor)

    def without_atom(self, location: float) -> 'PiecewiseLaw':
        keep = self.atom_locations != location
        return PiecewiseLaw(self.atom_locations[keep], self.atom_weights[keep],
                            self.density_knots, self.density_values)

    def restrict(self, lo: Optional[float] = None, hi: Optional[float] = None,
                 include_lo: bool = False, include_hi: bool = True) -> 'PiecewiseLaw':
        """Restriction to the interval between lo and hi (None means unbounded)."""
        lower = -np.inf if lo is None else lo
        upper = np.inf if hi is None else hi
        locations = self.atom_locations
        keep = (locations > lower) & (locations < upper)
        if lo is not None and include_lo:
            keep |= locations == lo
        if hi is not None and include_hi:
            keep |= locations == hi
        pieces = []
        if self.density_values.size:
            start = np.maximum(self.density_knots[:-1], lower)
            stop = np.minimum(self.density_knots[1:], upper)
            for a, b, value in zip(start, stop, self.density_values):
                if b > a:
                    pieces.append((float(a), float(b), float(value)))
        knots, values = _pieces_to_knots(pieces)
        return PiecewiseLaw(locations[keep], self.atom_weights[keep], knots, values)


def _pieces_to_knots(pieces: List[Tuple[float, float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    """Turn sorted non-overlapping (start, stop, density) pieces into knots and values."""
    if not pieces:
        return np.empty(0), np.empty(0)
    knots = [pieces[0][0]]
    values: List[float] = []
    for start, stop, value in pieces:
        if start > knots[-1]:
            knots.append(start)
            values.append(0.0)
        knots.append(stop)
        values.append(value)
    return np.asarray(knots), np.asarray(values)


@dataclass(frozen=True, eq=False)
class AnalyticMeasure(Measure):
    """Function-backed measure with closed-form CDF and put.

    Only an atom at zero is allowed; the rest of the mass is continuous with
    density density_fn when given. cdf_fn and put_fn must accept numpy arrays.
    """

    name: str
    mass: float
    mean: float
    cdf_fn: Callable[[np.ndarray], np.ndarray]
    put_fn: Callable[[np.ndarray], np.ndarray]
    zero_atom: float = 0.0
    density_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    quantile_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    support: Optional[float] = None
    kinks: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.mass > 0:
            raise MeasureDomainError(f"{self.name}: mass must be > 0")
        if self.mean < 0:
            raise MeasureDomainError(f"{self.name}: mean must be >= 0")
        if not 0 <= self.zero_atom <= self.mass:
            raise MeasureDomainError(f"{self.name}: atom at zero must lie in [0, mass]")

    @property
    def support_max(self) -> Optional[float]:
        return self.support

    def cdf(self, x: ArrayLike):
        values = _as_array(x)
        result = np.where(values < 0, 0.0, self.cdf_fn(np.maximum(values, 0.0)))
        return _like(x, result)

    def put(self, x: ArrayLike):
        values = _as_array(x)
        _check_strike(values)
        return _like(x, _as_array(self.put_fn(values)))

    def density(self, x: ArrayLike):
        if self.density_fn is None:
            raise UnsupportedMeasureError(f"{self.name}: no density function declared")
        values = _as_array(x)
        inside = values >= 0
        if self.support is not None:
            inside &= values < self.support
        return _like(x, np.where(inside, self.density_fn(np.clip(values, 0.0, None)), 0.0))

    def atom_mass(self, x: ArrayLike):
        values = _as_array(x)
        return _like(x, np.where(values == 0, self.zero_atom, 0.0))

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.zero_atom > 0:
            return np.array([0.0]), np.array([self.zero_atom])
        return np.empty(0), np.empty(0)

    def breakpoints(self) -> np.ndarray:
        points = [0.0, *self.kinks]
        if self.support is not None:
            points.append(self.support)
        return np.unique(np.asarray(points, dtype=float))

    def quantile(self, u: ArrayLike):
        if self.quantile_fn is not None:
            values = _as_array(u)
            return _like(u, _as_array(self.quantile_fn(values)))
        return super().quantile(u)

    def _continuous_cdf_integral(self, other: Measure, lo: float, hi: float) -> float:
        if self.density_fn is None:
            raise UnsupportedMeasureError(f"{self.name}: payoff integration needs a density")
        start = max(lo, 0.0)
        stop = hi if self.support is None else min(hi, self.support)
        if not stop > start:
            return 0.0
        cuts = np.concatenate([self.breakpoints(), other.breakpoints()])
        cuts = np.unique(np.concatenate([[start], cuts[(cuts > start) & (cuts < stop)], [stop]]))
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            value, _ = integrate.quad(lambda t: float(self.density_fn(t)) * float(other.cdf(t)),
                                      a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
            total += value
        return total


@dataclass(frozen=True, eq=False)
class MixtureMeasure(Measure):
    """Positive weight-sum of component measures."""

    components: Tuple[Tuple[float, Measure], ...]

    def __post_init__(self):
        components = tuple((float(w), m) for w, m in self.components)
        if not components:
            raise MeasureDomainError("mixture needs at least one component")
        if any(not w > 0 for w, _ in components):
            raise MeasureDomainError("mixture weights must be > 0")
        object.__setattr__(self, 'components', components)

    def _sum(self, method: str, x: ArrayLike):
        values = _as_array(x)
        total = np.zeros_like(values)
        for weight, component in self.components:
            total = total + weight * _as_array(getattr(component, method)(values))
        return _like(x, total)

    @property
    def mass(self) -> float:
        return float(sum(w * m.mass for w, m in self.components))

    @property
    def mean(self) -> float:
        return float(sum(w * m.mean for w, m in self.components))

    @property
    def support_max(self) -> Optional[float]:
        bounds = [m.support_max for _, m in self.components]
        if any(b is None for b in bounds):
            return None
        return float(max(bounds))

    def cdf(self, x: ArrayLike):
        return self._sum('cdf', x)

    def put(self, x: ArrayLike):
        _check_strike(_as_array(x))
        return self._sum('put', x)

    def atom_mass(self, x: ArrayLike):
        return self._sum('atom_mass', x)

    def density(self, x: ArrayLike):
        return self._sum('density', x)

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        locations, weights = [], []
        for weight, component in self.components:
            at, w = component.atoms()
            locations.append(at)
            weights.append(weight * w)
        merged = FiniteAtomicMeasure.from_atoms(np.concatenate(locations), np.concatenate(weights))
        return merged.locations, merged.weights

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([m.breakpoints() for _, m in self.components]))

    def _continuous_cdf_integral(self, other: Measure, lo: float, hi: float) -> float:
        return float(sum(w * m._continuous_cdf_integral(other, lo, hi) for w, m in self.components))


@dataclass(frozen=True, eq=False)
class RestrictedMeasure(Measure):
    """Restriction of base to (lo, hi]; lo=None means [0, hi], hi=None means unbounded.

    Evaluated from the base CDF and put only:
        P_r(x) = [P(m) + (x - m) F(m)] - [P(lo) + (x - lo) F(lo)],  m = min(x, hi)
    """

    base: Measure
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        if self.lo is not None and self.lo < 0:
            raise MeasureDomainError("restriction bounds must be >= 0")
        if self.lo is not None and self.hi is not None and not self.hi > self.lo:
            raise MeasureDomainError("restriction needs lo < hi")

    def _lower_terms(self, values: np.ndarray) -> Tuple[float, np.ndarray]:
        if self.lo is None:
            return 0.0, np.zeros_like(values)
        f_lo = float(self.base.cdf(self.lo))
        return f_lo, float(self.base.put(self.lo)) + (values - self.lo) * f_lo

    @property
    def mass(self) -> float:
        top = self.base.mass if self.hi is None else float(self.base.cdf(self.hi))
        bottom = 0.0 if self.lo is None else float(self.base.cdf(self.lo))
        return top - bottom

    @property
    def mean(self) -> float:
        def partial(x: Optional[float]) -> float:
            # int_[0,x] y m(dy) = x F(x) - P(x)
            return x * float(self.base.cdf(x)) - float(self.base.put(x))
        top = self.base.mean if self.hi is None else partial(self.hi)
        bottom = 0.0 if self.lo is None else partial(self.lo)
        return top - bottom

    @property
    def support_max(self) -> Optional[float]:
        return self.hi if self.hi is not None else self.base.support_max

    def cdf(self, x: ArrayLike):
        values = _as_array(x)
        capped = values if self.hi is None else np.minimum(values, self.hi)
        f_lo, _ = self._lower_terms(values)
        result = _as_array(self.base.cdf(capped)) - f_lo
        lower = -np.inf if self.lo is None else self.lo
        result = np.where((values <= lower) | (values < 0), 0.0, result)
        return _like(x, result)

    def put(self, x: ArrayLike):
        values = _as_array(x)
        _check_strike(values)
        capped = values if self.hi is None else np.minimum(values, self.hi)
        _, lower_put = self._lower_terms(values)
        upper_put = _as_array(self.base.put(capped)) + (values - capped) * _as_array(self.base.cdf(capped))
        result = upper_put - lower_put
        if self.lo is not None:
            result = np.where(values <= self.lo, 0.0, result)
        return _like(x, result)

    def _inside(self, values: np.ndarray) -> np.ndarray:
        inside = values >= 0
        if self.lo is not None:
            inside &= values > self.lo
        if self.hi is not None:
            inside &= values <= self.hi
        return inside

    def atom_mass(self, x: ArrayLike):
        values = _as_array(x)
        return _like(x, np.where(self._inside(values), _as_array(self.base.atom_mass(values)), 0.0))

    def density(self, x: ArrayLike):
        values = _as_array(x)
        return _like(x, np.where(self._inside(values), _as_array(self.base.density(values)), 0.0))

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        locations, weights = self.base.atoms()
        keep = self._inside(locations)
        return locations[keep], weights[keep]

    def breakpoints(self) -> np.ndarray:
        points = self.base.breakpoints()
        bounds = [b for b in (self.lo, self.hi) if b is not None]
        points = points[self._inside(points)]
        return np.unique(np.concatenate([points, bounds, [0.0] if self.lo is None else []]))

    def _continuous_cdf_integral(self, other: Measure, lo: float, hi: float) -> float:
        lower = lo if self.lo is None else max(lo, self.lo)
        upper = hi if self.hi is None else min(hi, self.hi)
        if not upper > lower:
            return 0.0
        return self.base._continuous_cdf_integral(other, lower, upper)


# --- constructors -----------------------------------------------------------

def uniform(a: float, b: float, weight: float = 1.0) -> PiecewiseLaw:
    """weight * U[a, b]."""
    if not 0 <= a < b:
        raise MeasureDomainError("uniform requires 0 <= a < b")
    return PiecewiseLaw([], [], [a, b], [weight / (b - a)])


def point_mass(x: float, weight: float = 1.0) -> FiniteAtomicMeasure:
    return FiniteAtomicMeasure([x], [weight])


def _beta23_cdf(x: np.ndarray) -> np.ndarray:
    x = np.minimum(x, 1.0)
    return np.minimum(3 * x ** 4 - 8 * x ** 3 + 6 * x ** 2, 1.0)


def _beta23_put(x: np.ndarray) -> np.ndarray:
    inner = np.minimum(x, 1.0)
    return np.where(x <= 1.0, 0.6 * inner ** 5 - 2 * inner ** 4 + 2 * inner ** 3, x - 0.4)


def beta23() -> AnalyticMeasure:
    """Beta(2, 3): density 12 x (1 - x)^2 on [0, 1], mean 2/5."""
    return AnalyticMeasure(
        name='beta23',
        mass=1.0,
        mean=0.4,
        cdf_fn=_beta23_cdf,
        put_fn=_beta23_put,
        density_fn=lambda x: 12 * x * (1 - x) ** 2,
        quantile_fn=stats.beta(2, 3).ppf,
        support=1.0,
        kinks=(1.0 / 3.0,),
    )


def as_piecewise(m: Measure) -> PiecewiseLaw:
    """Exact PiecewiseLaw view of an atomic or piecewise measure."""
    if isinstance(m, PiecewiseLaw):
        return m
    if isinstance(m, FiniteAtomicMeasure):
        return PiecewiseLaw(m.locations, m.weights, [], [])
    raise UnsupportedMeasureError(f"{type(m).__name__} has no atoms-plus-density representation")


def restrict(m: Measure, lo: Optional[float] = None, hi: Optional[float] = None) -> Measure:
    """Restriction of m to (lo, hi], exact for atomic and piecewise measures."""
    if isinstance(m, (PiecewiseLaw, FiniteAtomicMeasure)):
        return as_piecewise(m).restrict(lo, hi)
    return RestrictedMeasure(m, lo, hi)


def combine(parts: Sequence[Measure]) -> Measure:
    """Sum of measures; a PiecewiseLaw when every part has that representation."""
    parts = [p for p in parts if p.mass > 0]
    if not parts:
        raise MeasureDomainError("cannot combine an empty list of measures")
    if not all(isinstance(p, (PiecewiseLaw, FiniteAtomicMeasure)) for p in parts):
        return MixtureMeasure(tuple((1.0, p) for p in parts))
    laws = [as_piecewise(p) for p in parts]
    locations = np.concatenate([law.atom_locations for law in laws])
    weights = np.concatenate([law.atom_weights for law in laws])
    knots = np.unique(np.concatenate([law.density_knots for law in laws if law.density_values.size]
                                     or [np.empty(0)]))
    if knots.size < 2:
        return PiecewiseLaw(locations, weights, [], [])
    values = sum(_as_array(law.density(knots[:-1])) for law in laws)
    return PiecewiseLaw(locations, weights, knots, values)


# --- module level operations -----------------------------------------------

def put(m: Measure, x: ArrayLike):
    return m.put(x)


def call(m: Measure, x: ArrayLike):
    return m.call(x)


def cdf(m: Measure, x: ArrayLike):
    return m.cdf(x)


def evaluation_grid(*measures: Measure, refinement: int = GRID_REFINEMENT,
                    extent: float = GRID_EXTENT) -> np.ndarray:
    """Breakpoints of all measures plus a uniform refinement of every gap.

    The grid runs from 0 to extent times the largest support point.
    """
    points = [np.array([0.0])]
    top = 0.0
    for m in measures:
        breakpoints = m.breakpoints()
        points.append(breakpoints)
        bound = m.support_max
        if bound is None or not np.isfinite(bound):
            bound = max(float(breakpoints.max()) if breakpoints.size else 0.0,
                        m.mean / m.mass if m.mass > 0 else 0.0)
        top = max(top, bound)
    far = extent * (top if top > 0 else 1.0)
    knots = np.unique(np.concatenate(points + [np.array([far])]))
    knots = knots[(knots >= 0) & (knots <= far)]
    steps = np.linspace(0.0, 1.0, refinement + 2)[1:-1]
    interior = (knots[:-1, None] + np.diff(knots)[:, None] * steps[None, :]).ravel()
    return np.unique(np.concatenate([knots, interior]))


def convex_order_leq(a: Measure, b: Measure, tol: float = EXACT_TOL) -> bool:
    """a precedes b in convex order: same mass and mean, P_a <= P_b."""
    if abs(a.mass - b.mass) > tol or abs(a.mean - b.mean) > tol:
        return False
    grid = evaluation_grid(a, b)
    return bool(np.all(_as_array(a.put(grid)) <= _as_array(b.put(grid)) + tol))


def weakly_admissible(nu: Measure, mu: Measure, tol: float = EXACT_TOL) -> bool:
    """nu is reachable from mu by stopping Brownian motion absorbed at zero."""
    if abs(nu.mass - mu.mass) > tol:
        return False
    grid = evaluation_grid(nu, mu)
    return bool(np.all(_as_array(nu.put(grid)) >= _as_array(mu.put(grid)) - tol))


def strongly_admissible(nu: Measure, mu: Measure, tol: float = EXACT_TOL) -> bool:
    return weakly_admissible(nu, mu, tol) and abs(nu.mean - mu.mean) <= tol


# --- breve operator ----------------------------------------------------------

def breve(m: FiniteAtomicMeasure) -> PiecewiseLaw:
    """Replace every atom p at x by p * U[0, 2x]; an atom at zero stays put."""
    locations, weights = m.locations, m.weights
    at_zero = locations == 0
    ends = 2 * locations[~at_zero]
    heights = weights[~at_zero] / ends
    zero_locations = [0.0] if np.any(at_zero) else []
    zero_weights = list(weights[at_zero])
    if not ends.size:
        return PiecewiseLaw(zero_locations, zero_weights, [], [])
    knots = np.concatenate([[0.0], ends])
    values = np.cumsum(heights[::-1])[::-1]
    return PiecewiseLaw(zero_locations, zero_weights, knots, values)


def breve_put(m: FiniteAtomicMeasure, x: ArrayLike):
    """Closed-form put of breve(m).

    U[0, c] has put x^2 / (2c) below c and x - c/2 above.
    """
    values = _as_array(x)
    _check_strike(values)
    locations, weights = m.locations, m.weights
    at_zero = locations == 0
    ends = 2 * locations[~at_zero]
    w = weights[~at_zero]
    zero_mass = float(weights[at_zero].sum())
    cum_w = np.concatenate([[0.0], np.cumsum(w)])
    cum_wc = np.concatenate([[0.0], np.cumsum(w * ends)])
    cum_w_over_c = np.concatenate([[0.0], np.cumsum(w / ends)])
    below = np.searchsorted(ends, values, side='left')
    passed = values * cum_w[below] - 0.5 * cum_wc[below]
    pending = 0.5 * values ** 2 * (cum_w_over_c[-1] - cum_w_over_c[below])
    return _like(x, passed + pending + zero_mass * values)


def breve_put_integral(m: FiniteAtomicMeasure, x: float) -> float:
    """int_{x/2}^inf P_m(u) x^2 / (2 u^3) du, by quadrature between atoms.

    Beyond the largest atom P_m is linear and the tail is integrated exactly.
    """
    if x < 0:
        raise MeasureDomainError("put strikes must be >= 0")
    if x == 0:
        return 0.0
    start = x / 2.0
    largest = float(m.support_max)
    tail_from = max(largest, start)
    tail = 0.5 * x ** 2 * (m.mass / tail_from - m.mean / (2 * tail_from ** 2))
    if largest <= start:
        return float(tail)
    cuts = m.locations[(m.locations > start) & (m.locations < largest)]
    cuts = np.concatenate([[start], cuts, [largest]])
    body = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        value, _ = integrate.quad(lambda u: float(m.put(u)) * x ** 2 / (2 * u ** 3),
                                  a, b, epsabs=1e-14, epsrel=1e-13)
        body += value
    return float(body + tail)


def breve_cdf(m: FiniteAtomicMeasure, x: ArrayLike):
    """F_breve(x) = F_m(x/2) + x * sum over atoms beyond x/2 of p/(2 xi)."""
    values = _as_array(x)
    locations, weights = m.locations, m.weights
    positive = locations > 0
    share = np.concatenate([[0.0], np.cumsum((weights[positive] / (2 * locations[positive]))[::-1])])[::-1]
    beyond = np.searchsorted(locations[positive], values / 2.0, side='right')
    result = _as_array(m.cdf(values / 2.0)) + values * share[beyond]
    return _like(x, np.where(values < 0, 0.0, result))


# --- spec parsing -------------------------------------------------------------

def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MeasureError(f"{path}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise MeasureError(f"{path}: expected a finite number")
    return float(value)


def resolve_measure(spec: Any, path: str = '$') -> Measure:
    """Turn a measure spec (parsed JSON) into a measure.

    Supported shapes:
        {"type": "atomic", "atoms": [[x, w], ...]}
        {"type": "uniform", "a": A, "b": B}
        {"type": "beta23"}
        {"type": "pointmass", "x": X, "w": W}
        {"type": "mixture", "components": [[weight, spec], ...]}
    """
    if not isinstance(spec, dict):
        raise MeasureError(f"{path}: expected an object")
    kind = spec.get('type')

    if kind == 'atomic':
        atoms = spec.get('atoms')
        if not isinstance(atoms, list) or not atoms:
            raise MeasureError(f"{path}.atoms: expected a non-empty list of [location, weight]")
        locations, weights = [], []
        for i, atom in enumerate(atoms):
            if not isinstance(atom, list) or len(atom) != 2:
                raise MeasureError(f"{path}.atoms[{i}]: expected [location, weight]")
            location = _number(atom[0], f"{path}.atoms[{i}][0]")
            weight = _number(atom[1], f"{path}.atoms[{i}][1]")
            if location < 0:
                raise MeasureError(f"{path}.atoms[{i}][0]: location must be >= 0")
            if weight <= 0:
                raise MeasureError(f"{path}.atoms[{i}][1]: weight must be > 0")
            locations.append(location)
            weights.append(weight)
        return FiniteAtomicMeasure.from_atoms(locations, weights)

    if kind == 'uniform':
        a = _number(spec.get('a'), f"{path}.a")
        b = _number(spec.get('b'), f"{path}.b")
        if a < 0:
            raise MeasureError(f"{path}.a: must be >= 0")
        if not b > a:
            raise MeasureError(f"{path}.b: must be > a")
        return uniform(a, b)

    if kind == 'beta23':
        return beta23()

    if kind == 'pointmass':
        x = _number(spec.get('x'), f"{path}.x")
        w = _number(spec.get('w', 1.0), f"{path}.w")
        if x < 0:
            raise MeasureError(f"{path}.x: must be >= 0")
        if w <= 0:
            raise MeasureError(f"{path}.w: must be > 0")
        return point_mass(x, w)

    if kind == 'mixture':
        components = spec.get('components')
        if not isinstance(components, list) or not components:
            raise MeasureError(f"{path}.components: expected a non-empty list of [weight, spec]")
        resolved = []
        for i, component in enumerate(components):
            if not isinstance(component, list) or len(component) != 2:
                raise MeasureError(f"{path}.components[{i}]: expected [weight, spec]")
            weight = _number(component[0], f"{path}.components[{i}][0]")
            if weight <= 0:
                raise MeasureError(f"{path}.components[{i}][0]: weight must be > 0")
            resolved.append((weight, resolve_measure(component[1], f"{path}.components[{i}][1]")))
        if all(isinstance(m, (PiecewiseLaw, FiniteAtomicMeasure)) for _, m in resolved):
            law = combine([as_piecewise(m).scaled(w) for w, m in resolved])
            if not law.density_values.size:
                return FiniteAtomicMeasure(law.atom_locations, law.atom_weights)
            return law
        return MixtureMeasure(tuple(resolved))

    raise MeasureError(f"{path}.type: unknown measure type {kind!r}")


def parse_measure(text: str) -> Measure:
    """Parse a JSON measure spec."""
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as e:
        raise MeasureError(f"$: invalid JSON ({e.msg} at line {e.lineno} column {e.colno})") from e
    return resolve_measure(spec)
