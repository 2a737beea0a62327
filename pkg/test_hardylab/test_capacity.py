import math
import unittest

import numpy as np

from hardylab.capacity import capacity, capacity_decay, isocapacitary_ratios
from hardylab.energy import Problem, ScalarField, energy_Q, random_test_fields
from hardylab.errors import DomainError
from hardylab.geometry import SubsetMask, ball_mask, build_geometry, exhaustion, interval_mask, set_family
from hardylab.oracles import radial_condenser_capacity
from hardylab.solvers import SolverOptions


def interval(n):
    return build_geometry({"kind": "interval", "bounds": [0, 1], "resolution": n})


def radial(dim, n):
    return build_geometry({"kind": "radial", "dim": dim, "bounds": [0, 1], "resolution": n})


class IntervalCapacityTests(unittest.TestCase):
    """Linear ramps are exact discrete minimizers on an interval."""

    def setUp(self):
        self.geo = interval(16)
        self.one = ScalarField.constant(self.geo, 1.0)
        self.F = interval_mask(self.geo, 0.25, 0.75)

    def test_quadratic_energy(self):
        result = capacity(Problem.simple(self.geo, 2), self.one, self.F)
        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.value, 8.0, places=8)
        self.assertEqual(result.warnings, [])

    def test_cubic_energy(self):
        result = capacity(Problem.simple(self.geo, 3), self.one, self.F)
        self.assertAlmostEqual(result.value / 32.0, 1.0, places=6)

    def test_minimizer_satisfies_the_constraints(self):
        result = capacity(Problem.simple(self.geo, 2), self.one, self.F)
        values = result.minimizer.values
        np.testing.assert_allclose(values[self.F.flags], 1.0)
        self.assertEqual(values[0], 0.0)
        self.assertEqual(values[-1], 0.0)
        self.assertGreaterEqual(values.min(), 0.0)
        self.assertLessEqual(values.max(), 1.0)

    def test_monotone_in_F(self):
        problem = Problem.simple(self.geo, 2)
        small = capacity(problem, self.one, interval_mask(self.geo, 0.375, 0.625)).value
        large = capacity(problem, self.one, self.F).value
        self.assertAlmostEqual(small, 2 / 0.375, places=8)
        self.assertLessEqual(small, large)

    def test_antimonotone_in_the_domain(self):
        problem = Problem.simple(self.geo, 2)
        full = capacity(problem, self.one, self.F).value
        inner = capacity(problem, self.one, self.F, domain=interval_mask(self.geo, 0.125, 0.875)).value
        self.assertAlmostEqual(inner, 16.0, places=8)
        self.assertGreaterEqual(inner, full)

    def test_scaling_in_u(self):
        problem = Problem.simple(self.geo, 3)
        base = capacity(problem, self.one, self.F).value
        for c in (0.5, 2.0, 10.0):
            scaled = capacity(problem, ScalarField.constant(self.geo, c), self.F).value
            self.assertAlmostEqual(scaled / (c ** 3 * base), 1.0, places=6)

    def test_truncation_does_not_increase_the_energy(self):
        problem = Problem.simple(self.geo, 2)
        cap = capacity(problem, self.one, self.F).value
        rng = np.random.default_rng(11)
        fields = 2.0 * random_test_fields(self.geo, 100, rng, signed=True)
        for values in fields:
            values[self.F.flags] = 1.0
            truncated = np.clip(values, 0.0, 1.0)
            self.assertLessEqual(energy_Q(problem, truncated), energy_Q(problem, values) + 1e-12)
            self.assertGreaterEqual(energy_Q(problem, truncated), cap - 1e-9)

    def test_nonnegative_class_matches_for_nonnegative_potential(self):
        problem = Problem.simple(self.geo, 2)
        truncated = capacity(problem, self.one, self.F).value
        nonnegative = capacity(problem, self.one, self.F, feasible_class="nonnegative").value
        self.assertAlmostEqual(truncated, nonnegative, places=8)

    def test_simplified_route(self):
        problem = Problem.simple(self.geo, 3)
        result = capacity(problem, self.one, self.F, SolverOptions(route="simplified"))
        self.assertAlmostEqual(result.value / 32.0, 1.0, places=3)
        self.assertIn("simplified", result.warnings[-1])

    def test_multistarts_agree_on_a_convex_problem(self):
        V = ScalarField.constant(self.geo, -0.5, "cell")
        result = capacity(Problem.simple(self.geo, 2, V=V), self.one, self.F)
        self.assertLess(result.value, 8.0)
        self.assertLess(result.multistart_spread, 1e-5)

    def test_empty_set(self):
        empty = SubsetMask(self.geo, np.zeros(self.geo.n_nodes, dtype=bool), "empty")
        result = capacity(Problem.simple(self.geo, 2), self.one, empty)
        self.assertEqual(result.value, 0.0)
        self.assertEqual(result.stop_reason, "exact")

    def test_small_sets_are_flagged(self):
        F = interval_mask(self.geo, 0.5, 0.5)
        result = capacity(Problem.simple(self.geo, 2), self.one, F)
        self.assertEqual(len(result.warnings), 1)

    def test_set_touching_the_boundary(self):
        with self.assertRaises(DomainError):
            capacity(Problem.simple(self.geo, 2), self.one, interval_mask(self.geo, 0.0, 0.3))

    def test_unknown_feasible_class(self):
        with self.assertRaises(DomainError):
            capacity(Problem.simple(self.geo, 2), self.one, self.F, feasible_class="signed")


class CapacityDecayTests(unittest.TestCase):
    def test_decays_along_an_exhaustion(self):
        geo = interval(40)
        one = ScalarField.constant(geo, 1.0)
        F = interval_mask(geo, 0.45, 0.55)
        values = capacity_decay(Problem.simple(geo, 2), one, F, exhaustion(geo, 3))
        self.assertEqual(len(values), 3)
        self.assertAlmostEqual(values[0], 10.0, places=8)
        for a, b in zip(values, values[1:]):
            self.assertLess(b, a)

    def test_F_must_fit_in_the_first_element(self):
        geo = interval(40)
        one = ScalarField.constant(geo, 1.0)
        with self.assertRaises(DomainError):
            capacity_decay(Problem.simple(geo, 2), one, interval_mask(geo, 0.1, 0.9), exhaustion(geo, 3))


class RadialCondenserTests(unittest.TestCase):
    def test_logarithmic_condenser(self):
        geo = radial(2, 512)
        F = ball_mask(geo, [0.0], 0.25)
        value = capacity(Problem.simple(geo, 2), ScalarField.constant(geo, 1.0), F).value
        self.assertAlmostEqual(value / (2 * math.pi / math.log(4)), 1.0, delta=1e-3)

    def test_newtonian_condenser(self):
        geo = radial(3, 512)
        F = ball_mask(geo, [0.0], 0.5)
        value = capacity(Problem.simple(geo, 2), ScalarField.constant(geo, 1.0), F).value
        self.assertAlmostEqual(value / (4 * math.pi), 1.0, delta=1e-3)

    def test_nonlinear_condenser(self):
        geo = radial(2, 256)
        F = ball_mask(geo, [0.0], 0.5)
        result = capacity(Problem.simple(geo, 3), ScalarField.constant(geo, 1.0), F,
                          SolverOptions(max_iters=5000))
        self.assertAlmostEqual(result.value / radial_condenser_capacity(3, 2, 0.5, 1.0), 1.0, delta=1e-2)

    def test_isocapacitary_ratios(self):
        geo = radial(3, 256)
        family = set_family(geo, {"strategy": "balls", "centers": [[0.0]], "radii": [0.25, 0.5]})
        rows = isocapacitary_ratios(Problem.simple(geo, 2), family)
        self.assertEqual(len(rows), 2)
        for row in rows:
            self.assertTrue(0 < row["ratio"] < math.inf)

    def test_isocapacitary_needs_p_below_dimension(self):
        geo = radial(2, 64)
        family = set_family(geo, {"strategy": "balls", "centers": [[0.0]], "radii": [0.25]})
        with self.assertRaises(DomainError):
            isocapacitary_ratios(Problem.simple(geo, 2), family)


if __name__ == '__main__':
    unittest.main()
