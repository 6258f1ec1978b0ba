"""
Equilibrium verification.

- check_astar: membership in the characterization set (zero atom, continuity,
  mean, call dominance, concave CDF, linear CDF where the call constraint is slack)
- certificate: Lagrange multipliers proving optimality against every
  weakly admissible deviation
- payoff: exact contest payoff between two target laws
- deviation_*: explicit profitable deviations from laws that fail one condition
- best_response_search: LP over laws supported on a nested grid
- check_uniform_bound: uniform upper bound for measures with convex CDF
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from equilibrium import ConvergenceReport, EquilibriumLaw
from measures import (
    EXACT_TOL,
    GRID_REFINEMENT,
    FiniteAtomicMeasure,
    Measure,
    PiecewiseLaw,
    UnsupportedMeasureError,
    _as_array,
    as_piecewise,
    combine,
    evaluation_grid,
    restrict,
    uniform,
    weakly_admissible,
)

logger = logging.getLogger(__name__)

CERTIFICATE_GRID_POINTS = 1024
DEFAULT_LP_GRID = 256
MAX_BISECTIONS = 60


class CertificateError(Exception):
    """Raised when the Lagrangian certificate identities fail."""

    def __init__(self, violations: List[str], certificate: Optional['LagrangianCertificate'] = None):
        super().__init__('; '.join(violations))
        self.violations = violations
        self.certificate = certificate


class CertificateScalingError(CertificateError):
    """Raised for initial laws that are not probability measures."""

    def __init__(self, message: str):
        super().__init__([message])


class DeviationError(Exception):
    """Raised when a deviation's hypotheses fail; the message names the inequality."""
    pass


class PreconditionError(Exception):
    """Raised when an input does not meet an operation's precondition."""
    pass


class BestResponseError(Exception):
    """Raised when the best-response LP does not solve."""
    pass


def _require_probability(mu: Measure, tol: float = EXACT_TOL):
    if abs(mu.mass - 1.0) > tol:
        raise CertificateScalingError(f"initial law must have mass 1, got {mu.mass}")


# --- characterization ----------------------------------------------------------

@dataclass
class AstarReport:
    mass_ok: bool
    zero_atom_ok: bool
    continuity_ok: bool
    mean_ok: bool
    call_dominance_ok: bool
    concavity_ok: bool
    slack_linearity_ok: bool
    worst_violation: Optional[Tuple[str, float, float]] = None

    @property
    def passed(self) -> bool:
        return all([self.mass_ok, self.zero_atom_ok, self.continuity_ok, self.mean_ok,
                    self.call_dominance_ok, self.concavity_ok, self.slack_linearity_ok])

    def to_dict(self) -> Dict[str, Any]:
        worst = None
        if self.worst_violation is not None:
            name, x, magnitude = self.worst_violation
            worst = {'condition': name, 'x': x, 'magnitude': magnitude}
        return {
            'mass_ok': self.mass_ok,
            'zero_atom_ok': self.zero_atom_ok,
            'continuity_ok': self.continuity_ok,
            'mean_ok': self.mean_ok,
            'call_dominance_ok': self.call_dominance_ok,
            'concavity_ok': self.concavity_ok,
            'slack_linearity_ok': self.slack_linearity_ok,
            'passed': self.passed,
            'worst_violation': worst,
        }


def _chord_excess(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """values[i] minus the chord through its neighbours, for interior points."""
    left, middle, right = grid[:-2], grid[1:-1], grid[2:]
    weight = (middle - left) / (right - left)
    chord = values[:-2] + weight * (values[2:] - values[:-2])
    return values[1:-1] - chord


def check_astar(nu: Measure, mu: Measure, tol: float = EXACT_TOL) -> AstarReport:
    """Check every condition of the equilibrium characterization on the evaluation grid."""
    violations: List[Tuple[str, float, float]] = []

    def record(name: str, x: float, magnitude: float):
        violations.append((name, float(x), float(magnitude)))

    mass_gap = abs(nu.mass - mu.mass)
    if mass_gap > tol:
        record('mass', 0.0, mass_gap)
    zero_gap = abs(nu.atom_at_zero - mu.atom_at_zero)
    if zero_gap > tol:
        record('zero_atom', 0.0, zero_gap)
    mean_gap = abs(nu.mean - mu.mean)
    if mean_gap > tol:
        record('mean', 0.0, mean_gap)

    locations, weights = nu.positive_atoms()
    heavy = weights > tol
    continuity_ok = not np.any(heavy)
    if not continuity_ok:
        i = int(np.argmax(weights))
        record('continuity', locations[i], weights[i])

    grid = evaluation_grid(nu, mu)
    gap = _as_array(nu.call(grid)) - _as_array(mu.call(grid))
    call_dominance_ok = bool(np.all(gap >= -tol))
    if not call_dominance_ok:
        i = int(np.argmin(gap))
        record('call_dominance', grid[i], -gap[i])

    F = _as_array(nu.cdf(grid))
    excess = _chord_excess(grid, F)
    concavity_ok = bool(np.all(excess >= -tol))
    if not concavity_ok:
        i = int(np.argmin(excess))
        record('concavity', grid[i + 1], -excess[i])

    # Linearity of F_nu on maximal runs of grid points where C_nu > C_mu
    slack = gap > tol
    interior = slack[:-2] & slack[1:-1] & slack[2:]
    bend = np.where(interior, np.abs(excess), 0.0)
    slack_linearity_ok = bool(np.all(bend <= tol))
    if not slack_linearity_ok:
        i = int(np.argmax(bend))
        record('slack_linearity', grid[i + 1], bend[i])

    worst = max(violations, key=lambda v: v[2]) if violations else None
    return AstarReport(
        mass_ok=mass_gap <= tol,
        zero_atom_ok=zero_gap <= tol,
        continuity_ok=continuity_ok,
        mean_ok=mean_gap <= tol,
        call_dominance_ok=call_dominance_ok,
        concavity_ok=concavity_ok,
        slack_linearity_ok=slack_linearity_ok,
        worst_violation=worst,
    )


# --- payoffs -----------------------------------------------------------------

def payoff(pi: Measure, rho: Measure, theta: float) -> float:
    """Expected payoff of a player with target law pi against one with law rho.

    A win pays 1 and a tie pays theta:
        int F_rho(x-) pi(dx) + theta * sum_x pi({x}) rho({x})
    """
    value = pi.cdf_integral(rho)
    locations, weights = pi.atoms()
    ties = float(np.dot(weights, _as_array(rho.atom_mass(locations)))) if locations.size else 0.0
    return value + theta * ties


def equilibrium_value(mu: Measure, theta: float) -> float:
    """Payoff of each player at the symmetric equilibrium: 1/2 + (theta - 1/2) F_mu(0)^2."""
    _require_probability(mu)
    return 0.5 + (theta - 0.5) * mu.atom_at_zero ** 2


def uniform_dominates(mu: Measure, tol: float = EXACT_TOL) -> bool:
    """True when C_mu <= C of U[0, 2 mean]; that uniform is then the equilibrium."""
    if mu.atom_at_zero > tol or mu.mean <= 0:
        return False
    target = uniform(0.0, 2.0 * mu.mean / mu.mass, mu.mass)
    grid = evaluation_grid(mu, target)
    return bool(np.all(_as_array(mu.call(grid)) <= _as_array(target.call(grid)) + tol))


# --- Lagrangian certificate -----------------------------------------------------

@dataclass
class LagrangianCertificate:
    lambda_star: float
    gamma_star: float
    zeta_star: float
    eta_star: FiniteAtomicMeasure
    theta: float
    moment_gap: float
    gamma_gap: float
    slackness_gap: float
    dual_value: float

    def violations(self, tol: float) -> List[str]:
        found = []
        if self.moment_gap > tol:
            found.append(f"int z eta(dz) = 1 - F_nu(0) fails by {self.moment_gap:.3e}")
        if self.gamma_gap > tol:
            found.append(f"Gamma = F_nu fails by {self.gamma_gap:.3e}")
        if self.slackness_gap > tol:
            found.append(f"P_nu = P_mu on the support of eta fails by {self.slackness_gap:.3e}")
        return found

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambda': self.lambda_star,
            'gamma': self.gamma_star,
            'zeta': self.zeta_star,
            'eta': [[float(y), float(w)] for y, w in zip(self.eta_star.locations, self.eta_star.weights)],
            'theta': self.theta,
            'moment_gap': self.moment_gap,
            'gap_sup': self.gamma_gap,
            'slackness_gap': self.slackness_gap,
            'dual_value': self.dual_value,
        }


def certificate(nu: EquilibriumLaw, mu: Measure, theta: float, tol: float = EXACT_TOL,
                grid_points: int = CERTIFICATE_GRID_POINTS) -> LagrangianCertificate:
    """Build the multipliers for nu and check their identities against mu.

    lambda = 0, gamma = 1, zeta = (1 - theta) F_nu(0) and eta is the curvature-drop
    measure of nu. Then Gamma(x) = 1 - int_(x,inf) (z - x) eta(dz) must equal F_nu.
    """
    if not 0 <= theta < 1:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    _require_probability(mu, tol)
    eta = nu.curvature_drops()
    zero = nu.atom_at_zero
    zeta = (1.0 - theta) * zero

    moment_gap = abs(eta.mean - (1.0 - zero))

    top = nu.terminal_knot if nu.terminal_knot > 0 else 1.0
    grid = np.linspace(0.0, 1.1 * top, grid_points + 1)[1:]
    grid = np.unique(np.concatenate([grid, nu.density_knots[nu.density_knots > 0]]))
    gamma = 1.0 - _as_array(eta.call(grid))
    gamma_gap = float(np.max(np.abs(gamma - _as_array(nu.cdf(grid)))))

    if len(eta):
        contact = np.abs(_as_array(nu.put(eta.locations)) - _as_array(mu.put(eta.locations)))
        slackness_gap = float(contact.max())
        eta_put = float(np.dot(eta.weights, _as_array(mu.put(eta.locations))))
    else:
        slackness_gap, eta_put = 0.0, 0.0

    lam, gam = 0.0, 1.0
    dual_value = lam * mu.mean + gam * mu.mass - eta_put - zeta * mu.atom_at_zero
    result = LagrangianCertificate(
        lambda_star=lam,
        gamma_star=gam,
        zeta_star=zeta,
        eta_star=eta,
        theta=theta,
        moment_gap=float(moment_gap),
        gamma_gap=gamma_gap,
        slackness_gap=slackness_gap,
        dual_value=float(dual_value),
    )
    found = result.violations(tol)
    if found:
        logger.warning(f"Certificate check failed: {found}")
        raise CertificateError(found, result)
    return result


# --- profitable deviations -------------------------------------------------------

@dataclass(frozen=True)
class Deviation:
    """A deviating target law with the guaranteed payoff improvement."""

    law: Measure
    lower_bound: float
    details: Dict[str, float] = field(default_factory=dict)


def _atoms(pairs: List[Tuple[float, float]]) -> FiniteAtomicMeasure:
    kept = [(x, w) for x, w in pairs if w > 0]
    return FiniteAtomicMeasure.from_atoms([x for x, _ in kept], [w for _, w in kept])


def _tangent_from_below(nu: PiecewiseLaw, beta: float, target: float) -> Tuple[float, float]:
    """Contact point and slope of the supporting line of P_nu through (beta, target).

    T(c) = P(c) + F(c)(beta - c) is non-decreasing on [0, beta); the contact point
    is where it crosses target, possibly at a jump of F.
    """
    points = nu.breakpoints()
    points = np.unique(np.concatenate([[0.0], points[points < beta]]))
    P = _as_array(nu.put(points))
    right = P + _as_array(nu.cdf(points)) * (beta - points)
    left = P + _as_array(nu.cdf_left(points)) * (beta - points)

    def reach(c: float) -> float:
        return float(nu.put(c)) + float(nu.cdf(c)) * (beta - c) - target

    crossing = np.flatnonzero(right >= target)
    if not crossing.size:
        gamma = optimize.brentq(reach, points[-1], beta, xtol=1e-15)
    else:
        i = int(crossing[0])
        if i == 0:
            gamma = 0.0
        elif left[i] >= target:
            gamma = optimize.brentq(reach, points[i - 1], points[i], xtol=1e-15)
        else:
            gamma = float(points[i])
    slope = (target - float(nu.put(gamma))) / (beta - gamma)
    return float(gamma), float(slope)


def _call_level(mu: Measure, level: float) -> float:
    """x with C_mu(x) = level, for 0 < level < mean."""
    top = mu.support_max
    if top is None:
        top = 1.0
        while float(mu.call(top)) > level:
            top *= 2.0
    return float(optimize.brentq(lambda x: float(mu.call(x)) - level, 0.0, top, xtol=1e-15))


def deviation_mean_deficit(nu: Measure, mu: Measure, theta: float = 0.0, beta: Optional[float] = None,
                           tol: float = EXACT_TOL) -> Deviation:
    """Move mass of nu on [gamma, beta) to beta when nu has a smaller mean than mu."""
    law = as_piecewise(nu)
    if abs(nu.mass - mu.mass) > tol:
        raise DeviationError("mass of nu = mass of mu fails")
    if not weakly_admissible(nu, mu, tol):
        raise DeviationError("P_nu >= P_mu fails")
    deficit = mu.mean - nu.mean
    if deficit <= tol:
        raise DeviationError("mean of nu < mean of mu fails")

    alpha = _call_level(mu, deficit)
    line = nu.mass * alpha - nu.mean
    if float(nu.put(alpha)) - line <= tol:
        # nu lives on [0, alpha]: keep it there and continue with mu above alpha
        at_alpha = float(mu.cdf(alpha)) - float(nu.cdf_left(alpha))
        sigma = combine([law.restrict(None, alpha, include_hi=False), _atoms([(alpha, at_alpha)]),
                         restrict(mu, alpha, None)])
        bound = (nu.mass - float(mu.cdf(alpha))) * (1.0 - theta) * float(nu.atom_mass(alpha))
        return Deviation(sigma, bound, {'alpha': alpha, 'degenerate': 1.0})

    grid = evaluation_grid(nu, mu)
    grid = np.append(grid[grid > alpha], alpha)
    eps = float(np.min(_as_array(nu.put(grid)) - _as_array(mu.put(grid))))
    eps = min(eps, deficit)
    if eps <= tol:
        raise DeviationError("P_nu - P_mu > 0 on [alpha, inf) fails")
    # Half the grid minimum keeps the lowered put above P_mu between grid points
    eps *= 0.5

    if beta is None:
        beta = float(nu.quantile(0.5 * (float(nu.cdf(alpha)) + nu.mass)))
        if beta <= alpha:
            beta = float(nu.quantile(nu.mass))
    if beta <= alpha:
        raise DeviationError("beta > alpha fails")

    target = float(nu.put(beta)) - eps
    gamma, slope = _tangent_from_below(law, beta, target)
    at_gamma = slope - float(nu.cdf_left(gamma))
    at_beta = float(nu.cdf(beta)) - slope
    moved = float(nu.cdf_left(beta)) - float(nu.cdf_left(gamma))
    if at_gamma < -tol or at_beta < -tol:
        raise DeviationError("F_nu(gamma-) <= Gamma <= F_nu(beta) fails")
    if moved <= tol:
        raise DeviationError("nu([gamma, beta)) > 0 fails")

    sigma = combine([law.restrict(None, gamma, include_hi=False),
                     _atoms([(gamma, at_gamma), (beta, at_beta)]),
                     law.restrict(beta, None)])
    open_part = nu.cdf_integral(nu, gamma, beta, left_limits=False) \
        - slope * (float(nu.cdf_left(beta)) - float(nu.cdf(gamma)))
    bound = (1.0 - theta) * (float(nu.atom_mass(gamma)) * (float(nu.cdf(gamma)) - slope) + open_part)
    return Deviation(sigma, bound, {'alpha': alpha, 'beta': beta, 'gamma': gamma, 'slope': slope,
                                    'epsilon': eps})


def deviation_split_atom(nu: Measure, z: float, eps1: float, eps2: float, theta: float = 0.0) -> Deviation:
    """Split an atom of nu at z > 0 into atoms at z - eps1 and z + eps2, keeping the mean."""
    law = as_piecewise(nu)
    p = float(nu.atom_mass(z))
    if z <= 0 or p <= 0:
        raise DeviationError(f"nu({{z}}) > 0 with z > 0 fails at z={z}")
    if theta >= 1:
        raise DeviationError("theta < 1 fails")
    upper2 = (1.0 - theta) * z * p / (1.0 + theta * p)
    if not 0 < eps2 < upper2:
        raise DeviationError(f"0 < eps2 < (1-theta) z p / (1 + theta p) = {upper2:.6g} fails")
    lower1 = (1.0 + theta * p) * eps2 / ((1.0 - theta) * p)
    if not lower1 < eps1 < z:
        raise DeviationError(f"(1 + theta p) eps2 / ((1-theta) p) = {lower1:.6g} < eps1 < z fails")
    q = eps2 * p / (eps1 + eps2)
    sigma = combine([law.without_atom(z), _atoms([(z - eps1, q), (z + eps2, p - q)])])
    bound = p * (eps1 * (1.0 - theta) * p - (1.0 + theta * p) * eps2) / (eps1 + eps2)
    return Deviation(sigma, bound, {'p': p, 'q': q})


def deviation_zero_atom(nu: Measure, mu: Measure, q: float, phi: float, theta: float = 0.0,
                        tol: float = EXACT_TOL) -> Deviation:
    """Move mass phi (p + q) from [0, eps) to its conditional mean when F_nu(0) > F_mu(0)."""
    law = as_piecewise(nu)
    p = nu.atom_at_zero
    p_mu = mu.atom_at_zero
    if p <= p_mu + tol:
        raise DeviationError("F_nu(0) > F_mu(0) fails")
    _, weights = nu.positive_atoms()
    if np.any(weights > tol):
        raise DeviationError("F_nu continuous on (0, inf) fails")
    q_max = min(p * math.sqrt(1.0 - theta), nu.mass - p)
    if not 0 < q < q_max:
        raise DeviationError(f"0 < q < min(p sqrt(1-theta), mass - p) = {q_max:.6g} fails")
    eps = float(nu.quantile(p + q))
    level = float(nu.cdf(eps))
    delta = (eps * level - float(nu.put(eps))) / level
    phi_max = (p - p_mu) / (2.0 * float(nu.cdf(delta)))
    if not 0 < phi <= phi_max:
        raise DeviationError(f"0 < phi <= (F_nu(0) - F_mu(0)) / (2 F_nu(delta)) = {phi_max:.6g} fails")

    sigma = combine([law.restrict(None, eps, include_hi=False).scaled(1.0 - phi),
                     _atoms([(delta, phi * level)]),
                     law.restrict(eps, None, include_lo=True)])
    if not weakly_admissible(sigma, mu, tol):
        raise DeviationError("C_nu - C_mu > (F_nu(0) - F_mu(0)) x / 2 on (0, eps) fails; reduce q")
    bound = phi * ((1.0 - theta) * p ** 2 - q ** 2)
    return Deviation(sigma, bound, {'p': p, 'epsilon': eps, 'delta': delta})


def deviation_flatten(pi: Measure, a: float, b: float, theta: float = 0.0) -> Deviation:
    """Replace the mass of pi on (a, b] by atoms at a and b when F_pi is convex there."""
    if not 0 < a < b:
        raise DeviationError("0 < a < b fails")
    f_a, f_b = float(pi.cdf(a)), float(pi.cdf(b))
    jump = f_b - f_a
    if jump <= 0:
        raise DeviationError("F_pi(b) - F_pi(a) > 0 fails")
    inner = np.linspace(a, b, GRID_REFINEMENT + 2)[1:-1]
    chord = f_a + jump * (inner - a) / (b - a)
    if not np.all(_as_array(pi.cdf(inner)) < chord):
        raise DeviationError("F_pi below its chord on (a, b) fails")
    # Mean preservation fixes the share left at a
    phi = (float(pi.put(b)) - float(pi.put(a)) - f_a * (b - a)) / (jump * (b - a))
    if not phi < 0.5:
        raise DeviationError("phi < 1/2 fails")
    sigma = combine([restrict(pi, None, a), _atoms([(a, phi * jump), (b, (1.0 - phi) * jump)]),
                     restrict(pi, b, None)])
    bound = (0.5 - phi) * jump ** 2
    return Deviation(sigma, bound, {'phi': phi, 'jump': jump})


def _point_mass_radius_ok(nu: Measure, mu: Measure, z: float, eps: float) -> bool:
    slope_left = float(nu.cdf(z - eps)) - nu.mass
    slope_right = float(nu.cdf(z + eps)) - nu.mass
    first = float(nu.call(z - eps)) + 2 * eps * slope_left > float(mu.call(z + eps))
    second = float(nu.call(z + eps)) - 2 * eps * slope_right > float(mu.call(z - eps))
    return first and second


def deviation_point_mass(nu: Measure, mu: Measure, z: float, eps: Optional[float] = None,
                         theta: float = 0.0, tol: float = EXACT_TOL) -> Deviation:
    """Collapse the mass of nu on (w, z + eps) to an atom at a density drop z."""
    law = as_piecewise(nu)
    _, weights = nu.positive_atoms()
    if np.any(weights > tol) or np.any(np.diff(law.density_values) > tol):
        raise DeviationError("F_nu concave fails")
    if not z > 0:
        raise DeviationError("z > 0 fails")
    if not float(law.density_left(z)) > float(law.density(z)) + tol:
        raise DeviationError("f_nu(x) > f_nu(z) for x < z fails")
    if not float(nu.call(z)) - float(mu.call(z)) > tol:
        raise DeviationError("C_nu(z) > C_mu(z) fails")

    if eps is None:
        eps = z / 2.0
        for _ in range(MAX_BISECTIONS):
            if _point_mass_radius_ok(nu, mu, z, eps):
                break
            eps /= 2.0
        else:
            raise DeviationError("call-slope conditions at z -/+ eps fail for every tried eps")
    elif not (0 < eps < z and _point_mass_radius_ok(nu, mu, z, eps)):
        raise DeviationError("call-slope conditions at z -/+ eps fail")

    f_z, f_top = float(nu.cdf(z)), float(nu.cdf(z + eps))
    p_z = float(nu.put(z))
    gain_area = f_top * eps - (float(nu.put(z + eps)) - p_z)

    def loss_area(w: float) -> float:
        return p_z - float(nu.put(w)) - float(nu.cdf(w)) * (z - w) - gain_area

    if loss_area(0.0) < 0:
        raise DeviationError("int_0^z (F_nu(z) - F_nu) >= int_z^(z+eps) (F_nu(z+eps) - F_nu) fails")
    w = float(optimize.brentq(loss_area, 0.0, z, xtol=1e-15))
    v = float(nu.cdf(w))
    sigma = combine([law.restrict(None, w), _atoms([(z, f_top - v)]), law.restrict(z + eps, None)])
    if not weakly_admissible(sigma, mu, tol):
        raise DeviationError("P_sigma >= P_mu fails")
    bound = 0.5 * (f_top - v) * (2 * f_z - v - f_top)
    return Deviation(sigma, bound, {'epsilon': eps, 'w': w})


# --- best response ----------------------------------------------------------------

@dataclass
class BestResponse:
    value: float
    law: FiniteAtomicMeasure
    equilibrium_value: float
    grid_size: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'value': self.value,
            'equilibrium_value': self.equilibrium_value,
            'excess': self.value - self.equilibrium_value,
            'grid_size': self.grid_size,
            'support_points': len(self.law),
        }


def best_response_search(nu: Measure, mu: Measure, theta: float,
                         grid_size: int = DEFAULT_LP_GRID) -> BestResponse:
    """Best reply to nu among weakly admissible laws on a uniform grid.

    The grid has grid_size intervals, so doubling grid_size refines it. A grid law
    meeting P_pi >= P_mu at the grid points is admissible everywhere since P_pi is
    linear between grid points and P_mu is convex.
    """
    tops = [m.support_max for m in (nu, mu)]
    if any(t is None for t in tops):
        raise UnsupportedMeasureError("best response search needs measures with bounded support")
    extent = 1.25 * max(max(tops), 1e-12)
    grid = extent * np.arange(grid_size + 1) / grid_size

    reward = _as_array(nu.cdf_left(grid)) + theta * _as_array(nu.atom_mass(grid))
    spread = np.maximum(grid[:, None] - grid[None, :], 0.0)
    a_ub = np.vstack([-spread[1:], grid[None, :]])
    b_ub = np.concatenate([-_as_array(mu.put(grid[1:])), [mu.mean]])
    a_eq = np.ones((1, grid.size))
    b_eq = [mu.mass]

    result = optimize.linprog(-reward, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                              bounds=(0, None), method='highs')
    if result.status != 0:
        raise BestResponseError(f"best response LP failed: {result.message}")
    weights = result.x
    keep = weights > 1e-12
    law = FiniteAtomicMeasure(grid[keep], weights[keep])
    value = float(-result.fun)
    logger.debug(f"Best response on {grid.size} points: value {value:.6f}")
    return BestResponse(value, law, payoff(nu, nu, theta), grid_size)


# --- uniform bound ----------------------------------------------------------------

def check_uniform_bound(pi: FiniteAtomicMeasure, H: Callable[[float], float], tol: float = EXACT_TOL) -> bool:
    """int H d(pi) <= average of H over [0, 2 mean] for pi with convex CDF.

    Convexity of an atomic CDF is read off the points (xi_j, F(xi_j-) + p_j / 2)
    with the origin prepended: their slopes must be non-decreasing.
    """
    if abs(pi.mass - 1.0) > tol:
        raise PreconditionError(f"mass 1 fails: mass is {pi.mass}")
    if pi.atom_at_zero > 0:
        raise PreconditionError("CDF convexity fails: atom at zero")
    locations, weights = pi.locations, pi.weights
    midpoints = np.cumsum(weights) - 0.5 * weights
    xs = np.concatenate([[0.0], locations])
    ys = np.concatenate([[0.0], midpoints])
    slopes = np.diff(ys) / np.diff(xs)
    if np.any(np.diff(slopes) < -tol * np.maximum(1.0, slopes[1:])):
        raise PreconditionError("CDF convexity fails: midpoint cumulative weights not convex in location")
    ybar = pi.mean
    lhs = float(sum(w * float(H(x)) for x, w in zip(locations, weights)))
    rhs, _ = integrate.quad(lambda v: float(H(v)), 0.0, 2.0 * ybar, epsabs=1e-13, epsrel=1e-12, limit=200)
    return lhs <= rhs / (2.0 * ybar) + tol


# --- full report -------------------------------------------------------------------

def verification_report(nu: EquilibriumLaw, mu: Measure, report: ConvergenceReport, theta: float,
                        tol: float = EXACT_TOL, grid_size: int = DEFAULT_LP_GRID) -> Dict[str, Any]:
    """Characterization, certificate, value and best response for a solved law.

    For non-atomic mu the certificate is checked against the solved discretization.
    """
    astar = check_astar(nu, mu, tol)
    target = mu if isinstance(mu, FiniteAtomicMeasure) or report.final_measure is None else report.final_measure
    try:
        cert = certificate(nu, target, theta, tol).to_dict()
        certificate_ok = True
    except CertificateScalingError as e:
        cert = {'error': str(e), 'violations': e.violations}
        certificate_ok = False
    except CertificateError as e:
        cert = e.certificate.to_dict() if e.certificate is not None else {}
        cert['violations'] = e.violations
        certificate_ok = False

    best = None
    try:
        best = best_response_search(nu, mu, theta, grid_size).to_dict()
    except (UnsupportedMeasureError, BestResponseError) as e:
        logger.warning(f"Best response search skipped: {e}")
        best = {'error': str(e)}

    value = payoff(nu, nu, theta)
    return {
        'astar': astar.to_dict(),
        'certificate': cert,
        'certificate_checked_against': 'input' if target is mu else f"discretization with {len(target)} atoms",
        'best_response': best,
        'value': value,
        'passed': astar.passed and certificate_ok,
    }
