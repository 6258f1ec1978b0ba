"""
Monte Carlo estimate of the contest payoff between two target laws.

Trials are drawn in fixed-size blocks, each from its own Philox stream spawned
from the seed, so the estimate depends only on (seed, n) and never on the
number of worker threads.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from measures import EXACT_TOL, Measure, MeasureDomainError, MixtureMeasure, RestrictedMeasure

logger = logging.getLogger(__name__)

RNG_ALGORITHM = 'Philox4x64-10'
BLOCK_SIZE = 65536


@dataclass
class SimResult:
    """Counts and estimate of one simulation; wins + ties + losses = n_trials."""

    n_trials: int
    estimate: float
    std_error: float
    wins: int
    ties: int
    losses: int
    theta: float
    seed: int
    rng_algorithm: str = RNG_ALGORITHM

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_trials': self.n_trials,
            'estimate': self.estimate,
            'std_error': self.std_error,
            'wins': self.wins,
            'ties': self.ties,
            'losses': self.losses,
            'theta': self.theta,
            'seed': self.seed,
            'rng': self.rng_algorithm,
        }


def _draw(law: Measure, rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF draws from law normalized to a probability measure."""
    if size == 0:
        return np.empty(0)
    if isinstance(law, MixtureMeasure):
        shares = np.array([w * m.mass for w, m in law.components])
        choice = rng.choice(len(shares), size=size, p=shares / shares.sum())
        result = np.empty(size)
        for i, (_, component) in enumerate(law.components):
            picked = choice == i
            result[picked] = _draw(component, rng, int(picked.sum()))
        return result
    # (0, mass] so that level zero never maps below the support
    levels = (1.0 - rng.random(size)) * law.mass
    if isinstance(law, RestrictedMeasure):
        offset = 0.0 if law.lo is None else float(law.base.cdf(law.lo))
        return np.asarray(law.base.quantile(offset + levels), dtype=float)
    return np.asarray(law.quantile(levels), dtype=float)


def sample(law: Measure, rng: np.random.Generator, size: Optional[int] = None):
    """Draw from law; a float when size is None."""
    draws = _draw(law, rng, 1 if size is None else size)
    return float(draws[0]) if size is None else draws


def _run_block(pi: Measure, rho: Measure, seed_seq: np.random.SeedSequence, size: int) -> Tuple[int, int]:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    mine = _draw(pi, rng, size)
    theirs = _draw(rho, rng, size)
    return int(np.count_nonzero(mine > theirs)), int(np.count_nonzero(mine == theirs))


def simulate(pi: Measure, rho: Measure, theta: float, n: int, seed: int = 0, workers: int = 1) -> SimResult:
    """Estimate the payoff of target law pi against rho: a win pays 1 and a tie theta."""
    if n < 1:
        raise MeasureDomainError("number of trials must be >= 1")
    for name, law in (('pi', pi), ('rho', rho)):
        if abs(law.mass - 1.0) > EXACT_TOL:
            raise MeasureDomainError(f"{name} must be a probability measure, mass is {law.mass}")

    n_blocks = math.ceil(n / BLOCK_SIZE)
    sizes = [BLOCK_SIZE] * (n_blocks - 1) + [n - BLOCK_SIZE * (n_blocks - 1)]
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    logger.info(f"Simulating {n} trials in {n_blocks} blocks with {workers} workers")

    if workers <= 1:
        counts = [_run_block(pi, rho, child, size) for child, size in zip(children, sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            counts = list(executor.map(lambda args: _run_block(pi, rho, *args), zip(children, sizes)))

    wins = sum(w for w, _ in counts)
    ties = sum(t for _, t in counts)
    estimate = (wins + theta * ties) / n
    second_moment = (wins + theta ** 2 * ties) / n
    # Sample variance of the per-trial payoff
    variance = max(second_moment - estimate ** 2, 0.0) * n / (n - 1) if n > 1 else 0.0
    return SimResult(n_trials=n, estimate=estimate, std_error=math.sqrt(variance / n), wins=wins,
                     ties=ties, losses=n - wins - ties, theta=theta, seed=seed)
