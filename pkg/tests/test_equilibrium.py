import logging

import numpy as np
import pytest

from conftest import random_atomic_measure
from equilibrium import (
    ConstructionError,
    ConvergenceReport,
    EquilibriumLaw,
    PiecewisePut,
    discretize,
    next_quadratic,
    solve,
    solve_atomic,
    solve_general,
    sup_put_distance,
)
from measures import (
    AnalyticMeasure,
    FiniteAtomicMeasure,
    MeasureDomainError,
    breve,
    combine,
    convex_order_leq,
    point_mass,
    strongly_admissible,
    uniform,
)
from verify import uniform_dominates

C1 = (8 * np.sqrt(10) + 280) / 486
C2 = (10 - np.sqrt(10)) / 9


class TestSolveAtomic:
    def test_single_atom_closed_form(self, rng):
        for _ in range(50):
            p, xi = rng.uniform(0.1, 2.0), rng.uniform(0.1, 5.0)
            put_fn, law = solve_atomic(point_mass(xi, p))
            assert law.density_knots == pytest.approx([0.0, 2 * xi], abs=1e-12)
            assert law.density_values == pytest.approx([p / (2 * xi)], abs=1e-12)
            assert put_fn.terminal_slope == pytest.approx(p)

    def test_narrow_pair_is_uniform(self, narrow_pair):
        _, law = solve_atomic(narrow_pair)
        assert law.density_knots == pytest.approx([0.0, 2.0], abs=1e-12)
        assert law.density_values == pytest.approx([0.5], abs=1e-12)

    def test_wide_pair_has_two_pieces(self, wide_pair):
        _, law = solve_atomic(wide_pair)
        assert law.density_knots == pytest.approx([0.0, 0.5, 3.0], abs=1e-9)
        assert law.density_values == pytest.approx([1.0, 0.2], abs=1e-9)

    def test_zero_atom_is_carried_over(self, half_zero_half_one):
        put_fn, law = solve_atomic(half_zero_half_one)
        assert law.atom_at_zero == pytest.approx(0.5)
        assert law.density_knots == pytest.approx([0.0, 2.0])
        assert law.density_values == pytest.approx([0.25])
        assert put_fn.derivative(0.0) == pytest.approx(0.5)

    def test_put_function_matches_law(self, rng):
        for _ in range(20):
            chi = random_atomic_measure(rng, with_zero=bool(rng.integers(2)))
            put_fn, law = solve_atomic(chi)
            x = np.linspace(0, 1.2 * law.terminal_knot, 101)
            assert np.max(np.abs(put_fn(x) - law.put(x))) < 1e-9
            assert put_fn.smoothness_defect() < 1e-9
            assert put_fn.contact_defect(chi) < 1e-9

    def test_block_bookkeeping(self, rng):
        for _ in range(100):
            chi = random_atomic_measure(rng)
            _, law = solve_atomic(chi)
            for y in law.density_knots[1:]:
                mass = float(law.cdf(y))
                j = int(np.argmin(np.abs(chi.line_slopes - mass)))
                assert mass == pytest.approx(chi.line_slopes[j], abs=1e-9)
                partial_mean = y * mass - float(law.put(y))
                assert partial_mean == pytest.approx(chi.line_intercepts[j], abs=1e-9)

    def test_solution_is_admissible_and_below_breve(self, rng):
        for _ in range(100):
            chi = random_atomic_measure(rng, with_zero=bool(rng.integers(2)))
            _, law = solve_atomic(chi)
            assert strongly_admissible(law, chi)
            assert convex_order_leq(law, breve(chi))
            assert np.all(np.diff(law.density_values) <= 1e-12)

    def test_uniform_target_when_dominated(self, rng):
        hits = 0
        for _ in range(50):
            chi = random_atomic_measure(rng, max_atoms=5)
            if not uniform_dominates(chi):
                continue
            hits += 1
            _, law = solve_atomic(chi)
            assert law.density_knots == pytest.approx([0.0, 2 * chi.mean], abs=1e-9)
        assert hits > 0

    def test_empty_measure_rejected(self):
        with pytest.raises(MeasureDomainError):
            solve_atomic(FiniteAtomicMeasure([], []))


class TestNextQuadratic:
    def test_first_step_of_wide_pair(self, wide_pair):
        step = next_quadratic(wide_pair, 0.0, 0.0, 0.0)
        assert step.curvature == pytest.approx(1.0)
        assert step.contact == pytest.approx(0.5)
        assert step.segment == 0

    def test_no_steeper_segment(self, wide_pair):
        with pytest.raises(ConstructionError):
            next_quadratic(wide_pair, 3.0, 2.0, 1.0)

    def test_tie_goes_to_furthest_contact(self):
        # Both supporting lines need curvature 1/4 from the origin
        chi = FiniteAtomicMeasure([1.0, 3.0], [0.5, 0.5])
        step = next_quadratic(chi, 0.0, 0.0, 0.0)
        assert step.curvature == pytest.approx(0.25)
        assert step.segment == 1
        assert step.contact == pytest.approx(4.0)
        _, law = solve_atomic(chi)
        assert law.density_knots == pytest.approx([0.0, 4.0])


class TestPiecewisePut:
    def test_linear_beyond_last_knot(self):
        put_fn = PiecewisePut([0.0, 2.0], [0.5], 0.0, 1.0, -1.0)
        assert put_fn(1.0) == pytest.approx(0.25)
        assert put_fn(3.0) == pytest.approx(2.0)
        assert put_fn.derivative(3.0) == pytest.approx(1.0)

    def test_to_dict(self):
        put_fn = PiecewisePut([0.0, 2.0], [0.5], 0.0, 1.0, -1.0)
        data = put_fn.to_dict()
        assert data['knots'] == [0.0, 2.0]
        assert data['curvatures'] == [0.5]

    def test_knot_count_checked(self):
        with pytest.raises(ConstructionError):
            PiecewisePut([0.0], [0.5], 0.0, 1.0, -1.0)


class TestEquilibriumLaw:
    def test_round_trip(self, wide_pair):
        _, law = solve_atomic(wide_pair)
        data = law.to_dict()
        assert data['mass'] == pytest.approx(1.0)
        assert data['mean'] == pytest.approx(1.0)
        again = EquilibriumLaw.from_dict(data)
        assert np.allclose(again.put(np.linspace(0, 4, 9)), law.put(np.linspace(0, 4, 9)))

    def test_increasing_density_rejected(self):
        with pytest.raises(MeasureDomainError):
            EquilibriumLaw.from_knots(0.0, [0.0, 1.0, 2.0], [0.2, 0.6])

    def test_positive_atom_rejected(self):
        with pytest.raises(MeasureDomainError):
            EquilibriumLaw([1.0], [0.5], [0.0, 1.0], [0.5])

    def test_curvature_drops(self, wide_pair):
        _, law = solve_atomic(wide_pair)
        drops = law.curvature_drops()
        assert drops.locations == pytest.approx([0.5, 3.0])
        assert drops.weights == pytest.approx([0.8, 0.2])
        assert drops.mean == pytest.approx(1.0 - law.atom_at_zero)

    def test_pure_atom_at_zero(self):
        _, law = solve_atomic(point_mass(0.0))
        assert law.atom_at_zero == 1.0
        assert law.terminal_knot == 0.0
        assert len(law.curvature_drops()) == 0


class TestDiscretize:
    def test_uniform_bins(self):
        chi = discretize(uniform(0.0, 2.0), 4)
        assert chi.locations == pytest.approx([0.25, 0.75, 1.25, 1.75])
        assert chi.weights == pytest.approx([0.25] * 4)

    def test_zero_atom_kept(self):
        mu = combine([point_mass(0.0, 0.5), uniform(0.0, 4.0, 0.5)])
        chi = discretize(mu, 2)
        assert chi.locations == pytest.approx([0.0, 1.0, 3.0])
        assert chi.weights == pytest.approx([0.5, 0.25, 0.25])

    def test_shifted_scheme_has_extra_bin(self, beta_law):
        chi = discretize(beta_law, 8, 'shifted')
        assert len(chi) == 9
        assert chi.weights[0] == pytest.approx(1 / 16)

    def test_bins_preserve_mean_and_sit_below(self, beta_law):
        for scheme in ('dyadic', 'shifted'):
            chi = discretize(beta_law, 16, scheme)
            assert chi.mass == pytest.approx(1.0)
            assert chi.mean == pytest.approx(0.4, abs=1e-12)
            assert convex_order_leq(chi, beta_law, tol=1e-12)

    def test_dyadic_refinements_increase(self, beta_law):
        previous = discretize(beta_law, 2)
        for k in range(2, 7):
            current = discretize(beta_law, 2 ** k)
            assert convex_order_leq(previous, current, tol=1e-12)
            previous = current

    def test_bad_arguments(self, beta_law):
        with pytest.raises(MeasureDomainError):
            discretize(beta_law, 0)
        with pytest.raises(MeasureDomainError):
            discretize(beta_law, 4, 'random')


class TestSolveGeneral:
    def test_beta23(self, beta_solution, beta_law):
        law, report = beta_solution
        assert report.converged
        assert report.scheme == 'dyadic'
        assert law.density_knots[1] == pytest.approx(C2, abs=1e-2)
        assert law.density_values[0] == pytest.approx(2 * C1, abs=1e-2)
        x = np.linspace(C2 + 0.01, 1.2, 50)
        assert np.max(np.abs(law.call(x) - beta_law.call(x))) < 5e-3

    def test_beta23_distances_shrink(self, beta_solution):
        _, report = beta_solution
        distances = [d for _, d in report.levels if d is not None]
        assert distances[-1] < 1e-6
        assert distances[-1] < distances[0]

    def test_coarse_plateau_does_not_stop_refinement(self, beta_law):
        # 2 and 4 bins of Beta(2, 3) share the equilibrium U[0, 0.8]
        _, law2 = solve_atomic(discretize(beta_law, 2))
        _, law4 = solve_atomic(discretize(beta_law, 4))
        assert sup_put_distance(law2, law4) == pytest.approx(0.0, abs=1e-12)
        _, report = solve_general(beta_law, tol=1e-6, max_level=4)
        assert not report.converged
        assert all(d > 1e-6 for _, d in report.levels[1:])

    def test_beta23_matches_initial_law_beyond_first_knot(self, beta_solution, beta_law):
        law, _ = beta_solution
        x = np.linspace(0.85, 1.0, 16)
        assert np.max(np.abs(law.put(x) - beta_law.put(x))) < 1e-4

    def test_schemes_agree(self, beta_solution, beta_law):
        law, report = beta_solution
        shifted, shifted_report = solve_general(beta_law, tol=1e-6, max_level=14, scheme='shifted')
        assert shifted_report.converged
        assert report.final_level > 4 and shifted_report.final_level > 4
        assert sup_put_distance(law, shifted) < 2e-6

    def test_schemes_agree_on_truncated_uniform_mixture(self):
        # U[0, 2] mixed with its own truncation to [1, 2]: increasing density
        mu = combine([uniform(0.0, 2.0, 0.5), uniform(1.0, 2.0, 0.5)])
        dyadic, report = solve_general(mu, tol=1e-6, max_level=14)
        shifted, shifted_report = solve_general(mu, tol=1e-6, max_level=14, scheme='shifted')
        assert report.converged and shifted_report.converged
        assert report.final_level > 4
        assert sup_put_distance(dyadic, shifted) < 2e-6
        assert strongly_admissible(dyadic, mu, tol=1e-5)

    def test_concave_cdf_is_its_own_equilibrium(self):
        # Density 2 (1 - x) on [0, 1]
        mu = AnalyticMeasure(
            name='triangle',
            mass=1.0,
            mean=1.0 / 3.0,
            cdf_fn=lambda x: np.where(x < 1.0, 2 * np.clip(x, 0, 1) - np.clip(x, 0, 1) ** 2, 1.0),
            put_fn=lambda x: np.where(x < 1.0, np.clip(x, 0, 1) ** 2 - np.clip(x, 0, 1) ** 3 / 3, x - 1.0 / 3.0),
            density_fn=lambda x: np.where((x >= 0) & (x < 1.0), 2 * (1 - x), 0.0),
            quantile_fn=lambda u: 1.0 - np.sqrt(1.0 - np.asarray(u)),
            support=1.0,
        )
        law, report = solve_general(mu, tol=1e-6, max_level=14)
        assert report.converged
        assert sup_put_distance(law, mu) < 1e-5

    def test_uniform_reproduces_itself(self):
        law, report = solve_general(uniform(0.0, 2.0), tol=1e-6, max_level=12)
        assert report.converged
        assert law.density_knots == pytest.approx([0.0, 2.0], abs=1e-9)
        assert law.density_values == pytest.approx([0.5], abs=1e-9)

    def test_workers_do_not_change_result(self, beta_law):
        law1, report1 = solve_general(beta_law, tol=1e-4, max_level=8, workers=1)
        law3, report3 = solve_general(beta_law, tol=1e-4, max_level=8, workers=3)
        assert report1.levels == report3.levels
        assert np.array_equal(law1.density_values, law3.density_values)

    def test_no_convergence_is_reported(self, beta_law, caplog):
        with caplog.at_level(logging.WARNING):
            _, report = solve_general(beta_law, tol=1e-12, max_level=3)
        assert not report.converged
        assert report.final_level == 3
        assert len(report.levels) == 3
        assert 'No convergence' in caplog.text

    def test_bad_tolerance(self, beta_law):
        with pytest.raises(MeasureDomainError):
            solve_general(beta_law, tol=0.0)


class TestSolve:
    def test_atomic_input_is_exact(self, wide_pair):
        law, report = solve(wide_pair)
        assert isinstance(report, ConvergenceReport)
        assert report.scheme == 'exact'
        assert report.converged
        assert report.final_measure is wide_pair
        assert law.density_values == pytest.approx([1.0, 0.2])

    def test_report_serializes(self, wide_pair):
        _, report = solve(wide_pair)
        data = report.to_dict()
        assert data['levels'] == [[2, 0.0]]
        assert 'final_measure' not in data
