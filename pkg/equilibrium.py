"""
Construction of the symmetric equilibrium target law.

For a finitely atomic initial law the equilibrium put function is a chain of
quadratics. Each quadratic leaves the previous contact point with the value
and slope of the initial put and has the smallest curvature that keeps it
above every supporting line of that put; it touches the put again at the
next contact point. The curvature of each piece is the equilibrium density
on that piece and the atom at zero is carried over unchanged.

General initial laws are discretized into equal-probability bins, each bin
replaced by its conditional mean, and refined dyadically until successive
equilibrium puts agree.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np

from measures import (
    DISCRETIZATION_TOL,
    FiniteAtomicMeasure,
    Measure,
    MeasureDomainError,
    MeasureError,
    PiecewiseLaw,
    _as_array,
    _check_strike,
    _like,
    evaluation_grid,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_LEVEL = 14
# Relative slack when two supporting lines demand the same curvature
TIE_TOL = 1e-12
SCHEMES = ('dyadic', 'shifted')


class ConstructionError(Exception):
    """Raised when an invariant of the quadratic construction fails."""
    pass


class QuadraticStep(NamedTuple):
    curvature: float
    contact: float
    segment: int


@dataclass(frozen=True, eq=False)
class PiecewisePut:
    """C1 put function built from quadratic pieces between knots, linear beyond the last knot."""

    knots: np.ndarray
    curvatures: np.ndarray
    initial_slope: float
    terminal_slope: float
    terminal_intercept: float

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).reshape(-1)
        curvatures = np.asarray(self.curvatures, dtype=float).reshape(-1)
        if knots.size != curvatures.size + 1:
            raise ConstructionError("need exactly one more knot than curvatures")
        object.__setattr__(self, 'knots', knots)
        object.__setattr__(self, 'curvatures', curvatures)
        widths = np.diff(knots)
        slopes = self.initial_slope + np.concatenate([[0.0], np.cumsum(curvatures * widths)])
        values = np.concatenate([[0.0], np.cumsum(slopes[:-1] * widths + 0.5 * curvatures * widths ** 2)])
        object.__setattr__(self, '_slopes', slopes)
        object.__setattr__(self, '_values', values)

    def _locate(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        pieces = self.curvatures.size
        index = np.clip(np.searchsorted(self.knots, values, side='right') - 1, 0, pieces)
        offset = values - self.knots[index]
        curvature = np.append(self.curvatures, 0.0)[index]
        return index, offset, curvature

    def __call__(self, y):
        values = _as_array(y)
        _check_strike(values)
        index, offset, curvature = self._locate(values)
        inside = self._values[index] + self._slopes[index] * offset + 0.5 * curvature * offset ** 2
        terminal = self.terminal_slope * values + self.terminal_intercept
        return _like(y, np.where(index >= self.curvatures.size, terminal, inside))

    def derivative(self, y):
        values = _as_array(y)
        index, offset, curvature = self._locate(values)
        inside = self._slopes[index] + curvature * offset
        return _like(y, np.where(index >= self.curvatures.size, self.terminal_slope, inside))

    def smoothness_defect(self) -> float:
        """Mismatch in value and slope where the last quadratic meets the terminal line."""
        end = self.knots[-1]
        value_gap = abs(self._values[-1] - (self.terminal_slope * end + self.terminal_intercept))
        slope_gap = abs(self._slopes[-1] - self.terminal_slope)
        return float(max(value_gap, slope_gap))

    def contact_defect(self, chi: FiniteAtomicMeasure) -> float:
        """Largest value or slope gap to the put of chi over all knots."""
        value_gap = np.abs(self._values - _as_array(chi.put(self.knots)))
        slope_gap = np.abs(self._slopes - _as_array(chi.cdf(self.knots)))
        return float(max(value_gap.max(), slope_gap.max()))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'knots': self.knots.tolist(),
            'curvatures': self.curvatures.tolist(),
            'initial_slope': float(self.initial_slope),
            'terminal_slope': float(self.terminal_slope),
            'terminal_intercept': float(self.terminal_intercept),
        }


@dataclass(frozen=True, eq=False)
class EquilibriumLaw(PiecewiseLaw):
    """Atom at zero plus a non-increasing piecewise-constant density on (0, y_T]."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.atom_locations != 0):
            raise MeasureDomainError("an equilibrium law has no atoms away from zero")
        if self.density_knots.size and self.density_knots[0] != 0:
            raise MeasureDomainError("equilibrium density knots start at zero")
        values = self.density_values
        if np.any(np.diff(values) > TIE_TOL * values[:-1]):
            raise MeasureDomainError("equilibrium density must be non-increasing")

    @classmethod
    def from_knots(cls, atom_at_zero: float, knots, densities) -> 'EquilibriumLaw':
        knots = np.asarray(knots, dtype=float)
        if not knots.size:
            knots = np.array([0.0])
        return cls(
            atom_locations=[0.0] if atom_at_zero > 0 else [],
            atom_weights=[atom_at_zero] if atom_at_zero > 0 else [],
            density_knots=knots,
            density_values=densities,
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EquilibriumLaw':
        try:
            knots = data['knots']
            curvatures = data['curvatures']
            atom = float(data.get('atom_at_zero', 0.0))
        except (KeyError, TypeError) as e:
            raise MeasureError(f"$: malformed equilibrium law ({e})") from e
        return cls.from_knots(atom, knots, curvatures)

    @property
    def terminal_knot(self) -> float:
        return float(self.density_knots[-1]) if self.density_knots.size else 0.0

    def curvature_drops(self) -> FiniteAtomicMeasure:
        """Mass r_i - r_{i+1} at every knot y_i, r_T at y_T (the negative density derivative)."""
        values = self.density_values
        if not values.size:
            return FiniteAtomicMeasure([], [])
        drops = values - np.append(values[1:], 0.0)
        drops = np.maximum(drops, 0.0)
        keep = drops > 0
        return FiniteAtomicMeasure(self.density_knots[1:][keep], drops[keep])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'knots': self.density_knots.tolist(),
            'curvatures': self.density_values.tolist(),
            'atom_at_zero': self.atom_at_zero,
            'mass': self.mass,
            'mean': self.mean,
        }


@dataclass
class ConvergenceReport:
    """Successive-level diagnostics of the discretized solve."""

    levels: List[Tuple[int, Optional[float]]] = field(default_factory=list)
    converged: bool = False
    final_level: int = 0
    scheme: str = 'dyadic'
    tol: float = DISCRETIZATION_TOL
    final_measure: Optional[FiniteAtomicMeasure] = field(default=None, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'levels': [[n, d] for n, d in self.levels],
            'converged': self.converged,
            'final_level': self.final_level,
            'scheme': self.scheme,
            'tol': self.tol,
        }


def next_quadratic(chi: FiniteAtomicMeasure, y: float, value: float, slope: float) -> QuadraticStep:
    """Smallest curvature quadratic from (y, value) with the given slope staying above P_chi.

    The put of chi is the upper envelope of lines L_j(t) = A_j t - B_j. A quadratic
    with curvature r stays above L_j iff r >= (A_j - slope)^2 / (2 (value - L_j(y)));
    it touches L_j at y + (A_j - slope) / r.
    """
    slopes = chi.line_slopes
    intercepts = chi.line_intercepts
    candidates = np.flatnonzero(slopes > slope)
    if not candidates.size:
        raise ConstructionError(f"no segment of the put is steeper than slope {slope}")
    rise = slopes[candidates] - slope
    gap = value - (slopes[candidates] * y - intercepts[candidates])
    if np.any(gap <= 0):
        raise ConstructionError(f"start point ({y}, {value}) lies on or below a segment it has not reached")
    required = rise ** 2 / (2.0 * gap)
    curvature = float(required.max())
    # Ties go to the steepest line, i.e. the furthest contact point
    tied = candidates[required >= curvature * (1.0 - TIE_TOL)]
    segment = int(tied.max())
    contact = y + (slopes[segment] - slope) / curvature
    return QuadraticStep(curvature, float(contact), segment)


def solve_atomic(chi: FiniteAtomicMeasure) -> Tuple[PiecewisePut, EquilibriumLaw]:
    """Exact equilibrium for a finitely atomic initial law."""
    if not len(chi):
        raise MeasureDomainError("cannot solve for an empty atomic measure")
    slopes = chi.line_slopes
    intercepts = chi.line_intercepts
    last = slopes.size - 1
    zero_atom = chi.atom_at_zero

    # -1 stands for the zero line when there is no atom at the origin
    current = 0 if chi.locations[0] == 0 else -1
    y, value, slope = 0.0, 0.0, zero_atom
    knots, curvatures = [0.0], []

    while current < last:
        step = next_quadratic(chi, y, value, slope)
        if curvatures and step.curvature >= curvatures[-1] * (1.0 + TIE_TOL):
            logger.warning(f"Curvature increased at knot {len(knots)}: {curvatures[-1]} -> {step.curvature}")
        if step.segment <= current:
            raise ConstructionError(f"construction stalled at y={y}")
        knots.append(step.contact)
        curvatures.append(step.curvature)
        current = step.segment
        y = step.contact
        slope = float(slopes[current])
        # Exact put value at the contact point keeps the block bookkeeping exact
        value = slope * y - float(intercepts[current])

    logger.debug(f"Solved atomic law with {len(chi)} atoms into {len(curvatures)} pieces")
    put_fn = PiecewisePut(knots, curvatures, zero_atom, chi.mass, -chi.mean)
    law = EquilibriumLaw.from_knots(zero_atom, knots, curvatures)
    return put_fn, law


def discretize(mu: Measure, n: int, scheme: str = 'dyadic') -> FiniteAtomicMeasure:
    """Replace equal-probability quantile bins of mu by their conditional means.

    The zero atom is kept verbatim. Bin partial means use the identity
        int_0^u G(v) dv = u G(u) - P(G(u))
    for the quantile function G, which holds for every representation with a put.
    The shifted scheme starts with a half-width bin and has n + 1 bins.
    """
    if n < 1:
        raise MeasureDomainError("number of bins must be >= 1")
    if scheme not in SCHEMES:
        raise MeasureDomainError(f"unknown discretization scheme {scheme!r}")
    mass, zero = mu.mass, mu.atom_at_zero
    if mass - zero <= 0:
        return FiniteAtomicMeasure([0.0], [mass])

    if scheme == 'dyadic':
        fractions = np.arange(n + 1) / n
    else:
        fractions = np.concatenate([[0.0], (np.arange(n) + 0.5) / n, [1.0]])
    levels = zero + (mass - zero) * fractions
    inner = levels[1:-1]
    quantiles = _as_array(mu.quantile(inner)) if inner.size else np.empty(0)
    partial = np.concatenate([[0.0], inner * quantiles - _as_array(mu.put(quantiles)), [mu.mean]])

    bin_mass = np.diff(levels)
    bin_mean = np.diff(partial) / bin_mass
    top = mu.support_max
    lower = np.concatenate([[0.0], quantiles])
    upper = np.concatenate([quantiles, [np.inf if top is None else top]])
    bin_mean = np.clip(bin_mean, lower, upper)

    locations = bin_mean
    weights = bin_mass
    if zero > 0:
        locations = np.concatenate([[0.0], locations])
        weights = np.concatenate([[zero], weights])
    return FiniteAtomicMeasure.from_atoms(locations, weights)


def sup_put_distance(a: Measure, b: Measure) -> float:
    grid = evaluation_grid(a, b)
    return float(np.max(np.abs(_as_array(a.put(grid)) - _as_array(b.put(grid)))))


def _solve_level(mu: Measure, level: int, scheme: str) -> Tuple[FiniteAtomicMeasure, EquilibriumLaw]:
    chi = discretize(mu, 2 ** level, scheme)
    _, law = solve_atomic(chi)
    return chi, law


def _iterate_levels(mu: Measure, max_level: int, scheme: str,
                    workers: int) -> Iterator[Tuple[int, Tuple[FiniteAtomicMeasure, EquilibriumLaw]]]:
    """Yield solved levels in order; with several workers levels are solved in batches."""
    if workers <= 1:
        for level in range(1, max_level + 1):
            yield level, _solve_level(mu, level, scheme)
        return
    with ThreadPoolExecutor(max_workers=workers) as executor:
        level = 1
        while level <= max_level:
            batch = list(range(level, min(level + workers, max_level + 1)))
            futures = [executor.submit(_solve_level, mu, k, scheme) for k in batch]
            for k, future in zip(batch, futures):
                yield k, future.result()
            level += len(batch)


def _warn_on_non_monotone_tail(report: ConvergenceReport):
    # Only nested dyadic bins refine each other
    if report.scheme != 'dyadic':
        return
    distances = [d for _, d in report.levels if d is not None]
    for earlier, later in zip(distances[:-1], distances[1:]):
        if later > earlier:
            logger.warning(f"Convergence distances not monotone: {earlier:.3e} -> {later:.3e}")
            return


def solve_general(mu: Measure, tol: float = DISCRETIZATION_TOL, max_level: int = DEFAULT_MAX_LEVEL,
                  scheme: str = 'dyadic', workers: int = 1) -> Tuple[EquilibriumLaw, ConvergenceReport]:
    """Solve successive discretizations with 2^k bins until the puts settle.

    A level's distance is the larger of the sup put distances between successive
    discretized inputs and between successive equilibria. Coarse discretizations
    can share an equilibrium while the inputs are still far apart.
    """
    if not tol > 0:
        raise MeasureDomainError("tolerance must be > 0")
    if max_level < 1:
        raise MeasureDomainError("max_level must be >= 1")
    report = ConvergenceReport(scheme=scheme, tol=tol)
    law: Optional[EquilibriumLaw] = None
    previous: Optional[Tuple[FiniteAtomicMeasure, EquilibriumLaw]] = None

    for level, (chi, candidate) in _iterate_levels(mu, max_level, scheme, workers):
        distance = None
        if previous is not None:
            input_distance = sup_put_distance(chi, previous[0])
            law_distance = sup_put_distance(candidate, previous[1])
            logger.debug(f"Level {level}: input distance {input_distance:.3e}, law distance {law_distance:.3e}")
            distance = max(input_distance, law_distance)
        report.levels.append((len(chi), distance))
        report.final_level = level
        report.final_measure = chi
        law = candidate
        logger.info(f"Level {level}: {len(chi)} atoms, distance {distance}")
        if distance is not None and distance < tol:
            report.converged = True
            break
        previous = chi, candidate

    if not report.converged:
        logger.warning(f"No convergence to {tol} within {max_level} levels")
    _warn_on_non_monotone_tail(report)
    return law, report


def solve(mu: Measure, tol: float = DISCRETIZATION_TOL, max_level: int = DEFAULT_MAX_LEVEL,
          scheme: str = 'dyadic', workers: int = 1) -> Tuple[EquilibriumLaw, ConvergenceReport]:
    """Exact solve for atomic laws, successive discretization otherwise."""
    if isinstance(mu, FiniteAtomicMeasure):
        _, law = solve_atomic(mu)
        report = ConvergenceReport(levels=[(len(mu), 0.0)], converged=True, final_level=0,
                                   scheme='exact', tol=tol, final_measure=mu)
        return law, report
    return solve_general(mu, tol, max_level, scheme, workers)
