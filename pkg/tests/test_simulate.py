import numpy as np
import pytest

from conftest import random_atomic_measure
from equilibrium import solve_atomic
from measures import FiniteAtomicMeasure, MeasureDomainError, MixtureMeasure, RestrictedMeasure, point_mass, uniform
from simulate import BLOCK_SIZE, RNG_ALGORITHM, sample, simulate
from verify import equilibrium_value, payoff


class TestSample:
    def test_scalar_draw(self, rng):
        value = sample(uniform(0.0, 2.0), rng)
        assert isinstance(value, float)
        assert 0.0 <= value <= 2.0

    def test_atomic_draws_hit_atoms(self, rng, wide_pair):
        draws = sample(wide_pair, rng, 1000)
        assert set(np.unique(draws)) <= {0.25, 1.75}

    def test_mixture_mean(self, rng):
        law = MixtureMeasure(((0.5, point_mass(0.4)), (0.5, point_mass(1.0))))
        draws = sample(law, rng, 20000)
        assert draws.mean() == pytest.approx(0.7, abs=0.01)

    def test_restricted_draws_stay_inside(self, rng):
        law = RestrictedMeasure(uniform(0.0, 1.0), 0.5, None)
        draws = sample(law, rng, 5000)
        assert np.all(draws > 0.5)
        assert np.all(draws <= 1.0)


class TestSimulate:
    def test_uniform_against_itself(self):
        law = uniform(0.0, 2.0)
        result = simulate(law, law, 0.0, 200000, seed=11)
        assert abs(result.estimate - 0.5) < 4 * result.std_error
        assert result.rng_algorithm == RNG_ALGORITHM

    def test_workers_do_not_change_estimate(self):
        law = uniform(0.0, 2.0)
        n = 3 * BLOCK_SIZE + 17
        single = simulate(law, law, 0.3, n, seed=5, workers=1)
        pooled = simulate(law, law, 0.3, n, seed=5, workers=4)
        assert single.wins == pooled.wins
        assert single.ties == pooled.ties
        assert single.estimate == pooled.estimate

    def test_same_seed_same_result(self, wide_pair):
        _, law = solve_atomic(wide_pair)
        first = simulate(law, law, 0.0, 10000, seed=3)
        second = simulate(law, law, 0.0, 10000, seed=3)
        assert first.to_dict() == second.to_dict()
        assert simulate(law, law, 0.0, 10000, seed=4).wins != first.wins

    def test_atom_ties(self, unit_atom):
        result = simulate(unit_atom, unit_atom, 0.4, 1000)
        assert result.ties == 1000
        assert result.estimate == pytest.approx(0.4)
        assert result.std_error == pytest.approx(0.0, abs=1e-8)

    @pytest.mark.parametrize('theta', [0.0, 0.5])
    def test_zero_atom_value(self, half_zero_half_one, theta):
        _, law = solve_atomic(half_zero_half_one)
        result = simulate(law, law, theta, 200000, seed=1)
        assert abs(result.estimate - (0.375 + 0.25 * theta)) < 4 * result.std_error

    def test_serializes(self, unit_atom):
        data = simulate(unit_atom, unit_atom, 0.0, 10, seed=2).to_dict()
        assert data['rng'] == RNG_ALGORITHM
        assert data['n_trials'] == 10
        assert data['seed'] == 2

    def test_bad_arguments(self, unit_atom):
        with pytest.raises(MeasureDomainError):
            simulate(unit_atom, unit_atom, 0.0, 0)
        with pytest.raises(MeasureDomainError, match='probability'):
            simulate(point_mass(1.0, 2.0), unit_atom, 0.0, 10)

    def test_sure_win(self, unit_atom):
        result = simulate(point_mass(2.0), unit_atom, 0.0, 100, seed=8)
        assert result.estimate == 1.0
        assert result.wins == 100


def test_equilibrium_keeps_zero_atom(rng, half_zero_half_one):
    _, law = solve_atomic(half_zero_half_one)
    draws = sample(law, rng, 100000)
    share = np.mean(draws == 0.0)
    assert abs(share - 0.5) < 3 * np.sqrt(0.25 / 100000)


def test_counts_add_up(wide_pair):
    _, law = solve_atomic(wide_pair)
    result = simulate(law, wide_pair, 0.5, 5000, seed=12)
    assert result.wins + result.ties + result.losses == result.n_trials
    assert result.estimate == pytest.approx((result.wins + 0.5 * result.ties) / 5000)
    assert result.to_dict()['losses'] == result.losses


class TestMonteCarloAgreement:
    @pytest.mark.parametrize('theta', [0.0, 0.5])
    def test_equilibrium_value_at_a_million_trials(self, theta, unit_atom, half_zero_half_one, wide_pair,
                                                   beta_law, beta_solution):
        cases = [(unit_atom, solve_atomic(unit_atom)[1]),
                 (half_zero_half_one, solve_atomic(half_zero_half_one)[1]),
                 (wide_pair, solve_atomic(wide_pair)[1]),
                 (beta_law, beta_solution[0])]
        for seed, (mu, law) in enumerate(cases):
            result = simulate(law, law, theta, 10 ** 6, seed=seed, workers=4)
            assert abs(result.estimate - equilibrium_value(mu, theta)) <= 4 * result.std_error

    def test_regression_pairs(self):
        rng = np.random.default_rng(77)
        for seed in range(20):
            pi = random_atomic_measure(rng, max_atoms=5, with_zero=bool(seed % 3 == 0))
            if seed % 2:
                # Shared locations make ties possible
                weights = rng.uniform(0.1, 1.0, size=len(pi))
                rho = FiniteAtomicMeasure(pi.locations, weights / weights.sum())
            else:
                rho = random_atomic_measure(rng, max_atoms=5)
            theta = float(rng.uniform(0.0, 0.9))
            result = simulate(pi, rho, theta, 20000, seed=seed)
            assert abs(result.estimate - payoff(pi, rho, theta)) <= 4 * result.std_error + 1e-12


class TestPayoffSymmetry:
    def test_atomic_pairs(self, rng):
        for _ in range(50):
            pi = random_atomic_measure(rng, max_atoms=6, with_zero=bool(rng.integers(2)))
            weights = rng.uniform(0.1, 1.0, size=len(pi))
            rho = FiniteAtomicMeasure(pi.locations, weights / weights.sum())
            theta = float(rng.uniform(0.0, 1.0))
            ties = float(np.dot(pi.weights, rho.weights))
            total = payoff(pi, rho, theta) + payoff(rho, pi, theta)
            assert total == pytest.approx(1.0 + (2 * theta - 1) * ties, abs=1e-12)

    def test_continuous_against_atomic(self, wide_pair):
        law = uniform(0.0, 2.0)
        total = payoff(law, wide_pair, 0.3) + payoff(wide_pair, law, 0.3)
        assert total == pytest.approx(1.0, abs=1e-12)
