import math
import unittest

import numpy as np

from hardylab.energy import Problem, ScalarField, q_gradient
from hardylab.errors import DomainError, HypothesisViolation, ResolutionError
from hardylab.geometry import ball_mask, build_geometry, exhaustion, interval_mask
from hardylab.spectral import (
    attainment_run,
    center_label,
    classify_local_trend,
    classify_tail_trend,
    combine_weights,
    compactness_characterization,
    constant_at_infinity,
    criticality_test,
    ground_state,
    local_constant,
    spectral_profile,
)


def interval(n):
    return build_geometry({"kind": "interval", "bounds": [0, 1], "resolution": n})


def unit_weight_problem(n, p=2):
    geo = interval(n)
    return Problem.simple(geo, p, g=ScalarField.constant(geo, 1.0, "cell"))


def hardy_problem(n):
    geo = interval(n)
    return Problem.simple(geo, 2, g=ScalarField(geo, 1.0 / geo.cell_midpoints[:, 0] ** 2, "cell"))


class TrendTests(unittest.TestCase):
    def test_power_law_blow_up_is_diverging(self):
        trend, estimate = classify_local_trend([(0.4, 1.0), (0.2, 4.0), (0.1, 16.0)])
        self.assertEqual(trend, "diverging")
        self.assertEqual(estimate, math.inf)

    def test_flat_curve_is_saturated(self):
        trend, estimate = classify_local_trend([(0.4, 1.0), (0.2, 1.1), (0.1, 1.15)])
        self.assertEqual(trend, "saturated")
        self.assertEqual(estimate, 1.0)

    def test_infinite_entry_is_diverging(self):
        self.assertEqual(classify_local_trend([(0.4, 1.0), (0.2, math.inf)])[0], "diverging")

    def test_tail_trends(self):
        self.assertEqual(classify_tail_trend([1.0, 1.5]), ("increasing", math.inf))
        self.assertEqual(classify_tail_trend([1.0, 1.05]), ("saturated", 1.05))
        self.assertEqual(classify_tail_trend([1.0, math.inf])[0], "increasing")

    def test_center_label(self):
        self.assertEqual(center_label([0.5]), "(0.5)")
        self.assertEqual(center_label([0.0, -0.25]), "(0, -0.25)")


class LocalConstantTests(unittest.TestCase):
    def setUp(self):
        self.problem = unit_weight_problem(200)

    def test_slope_of_a_regular_weight(self):
        curve = local_constant(self.problem, [0.5], [0.2, 0.1, 0.05])
        radii = np.array([r for r, _ in curve])
        values = np.array([s for _, s in curve])
        slope = np.polyfit(np.log(radii), np.log(values), 1)[0]
        self.assertAlmostEqual(slope, -2.0, delta=0.05)
        self.assertAlmostEqual(values[0] / (math.pi ** 2 / 0.16), 1.0, delta=1e-2)

    def test_slope_follows_the_exponent(self):
        for p in (1.5, 3.0):
            with self.subTest(p=p):
                curve, flags = local_constant(unit_weight_problem(200, p), [0.5], [0.2, 0.1, 0.05],
                                              return_flags=True)
                radii = np.array([r for r, _ in curve])
                values = np.array([s for _, s in curve])
                slope = np.polyfit(np.log(radii), np.log(values), 1)[0]
                self.assertAlmostEqual(slope, -p, delta=0.3)
                self.assertEqual(len(flags), 3)

    def test_radii_must_decrease(self):
        with self.assertRaises(DomainError):
            local_constant(self.problem, [0.5], [0.1, 0.2])

    def test_balls_below_four_cells(self):
        with self.assertRaises(ResolutionError):
            local_constant(self.problem, [0.5], [0.1, 0.01])

    def test_infinity_needs_three_levels(self):
        geo = self.problem.geometry
        with self.assertRaises(ResolutionError):
            constant_at_infinity(self.problem, exhaustion(geo, 2))


class CriticalityTests(unittest.TestCase):
    def _decay(self, dim):
        geo = build_geometry({"kind": "radial", "dim": dim, "bounds": [0, 1], "resolution": 1024})
        problem = Problem.simple(geo, 2)
        return criticality_test(problem, ball_mask(geo, [0.0], 1.0 / 64), exhaustion(geo, 4))

    def test_plane_is_critical_for_p_equal_two(self):
        verdict = self._decay(2)
        self.assertEqual(verdict.verdict, "critical-suspected")
        np.testing.assert_allclose(verdict.sizes, [4.0, 8.0, 16.0, 32.0], rtol=1e-6)
        expected = [2 * math.pi / math.log(s) for s in (4, 8, 16, 32)]
        np.testing.assert_allclose(verdict.curve, expected, rtol=1e-3)

    def test_space_is_not_critical(self):
        verdict = self._decay(3)
        self.assertNotEqual(verdict.verdict, "critical-suspected")
        for a, b in zip(verdict.curve, verdict.curve[1:]):
            self.assertLess(b, a)
        self.assertTrue(verdict.converged)

    def test_space_saturates_at_the_newtonian_limit(self):
        geo = build_geometry({"kind": "radial", "dim": 3, "bounds": [0, 512], "resolution": 4096})
        balls = [ball_mask(geo, [0.0], R) for R in (8.0, 64.0, 511.0)]
        verdict = criticality_test(Problem.simple(geo, 2), ball_mask(geo, [0.0], 1.0), balls)
        self.assertEqual(verdict.verdict, "subcritical-suspected")
        np.testing.assert_allclose(verdict.sizes, [8.0, 64.0, 511.0], rtol=1e-6)
        self.assertAlmostEqual(verdict.extrapolated_limit / (4 * math.pi), 1.0, delta=0.01)

    def test_bounded_interval_saturates(self):
        geo = interval(512)
        verdict = criticality_test(Problem.simple(geo, 2), interval_mask(geo, 0.45, 0.55), exhaustion(geo, 8))
        self.assertEqual(verdict.verdict, "subcritical-suspected")
        self.assertGreater(verdict.extrapolated_limit, 0.05 * verdict.curve[0])


class GroundStateTests(unittest.TestCase):
    def test_positive_and_normalized(self):
        problem = unit_weight_problem(64)
        result = ground_state(problem)
        values = result.minimizer.values
        geo = problem.geometry
        self.assertTrue(np.all(values[geo.interior_mask] > 0))
        self.assertAlmostEqual(float(values.max()), 1.0)
        self.assertLess(abs(result.value), 1e-8)
        self.assertAlmostEqual(result.constraint / math.pi ** 2, 1.0, delta=1e-3)
        self.assertTrue(result.converged)
        self.assertLessEqual(result.residual, 1e-8)

    def test_residual_is_the_euler_lagrange_residual(self):
        problem = unit_weight_problem(64)
        result = ground_state(problem)
        values = result.minimizer.values
        inner = problem.geometry.interior_mask
        shifted = problem.shifted(result.constraint)
        expected = (np.linalg.norm(q_gradient(shifted, values)[inner])
                    / np.linalg.norm(q_gradient(problem, values)[inner]))
        self.assertAlmostEqual(result.residual, expected, places=14)

    def test_reference_must_be_interior(self):
        with self.assertRaises(DomainError):
            ground_state(unit_weight_problem(16), reference=0)


class CombineWeightsTests(unittest.TestCase):
    def setUp(self):
        self.problem = unit_weight_problem(64)
        self.g = self.problem.g

    def test_scaled_weight(self):
        _, report = combine_weights(self.problem, self.g, self.g, 2.0)
        self.assertAlmostEqual(report["threshold"], 1.0, places=8)
        self.assertTrue(report["exceeds_threshold"])
        self.assertTrue(report["strict_decrease"])
        self.assertAlmostEqual(report["S_combined"] / (report["S_g"] / 3.0), 1.0, places=8)
        self.assertGreaterEqual(report["upper_bound"], report["S_combined"] * (1 - 1e-10))

    def test_twice_the_threshold_lowers_the_constant(self):
        geo = self.problem.geometry
        g0 = ScalarField(geo, (geo.cell_midpoints[:, 0] > 0.5).astype(float), "cell")
        threshold = combine_weights(self.problem, g0, self.g, 1.0)[1]["threshold"]
        _, report = combine_weights(self.problem, g0, self.g, 2.0 * threshold)
        self.assertTrue(report["exceeds_threshold"])
        self.assertTrue(report["strict_decrease"])
        self.assertLess(report["S_combined"], report["S_g"] * (1 - 1e-6))
        self.assertLessEqual(report["S_combined"], report["upper_bound"] * (1 + 1e-10))
        self.assertLessEqual(report["upper_bound"], report["S_g0"] / report["epsilon"] * (1 + 1e-9))
        self.assertTrue(report["converged"])

    def test_epsilon_must_be_positive(self):
        with self.assertRaises(DomainError):
            combine_weights(self.problem, self.g, self.g, 0.0)

    def test_zero_anchor(self):
        zero = ScalarField.constant(self.problem.geometry, 0.0, "cell")
        with self.assertRaises(DomainError):
            combine_weights(self.problem, zero, self.g, 1.0)


class ProfileTests(unittest.TestCase):
    def setUp(self):
        self.problem = unit_weight_problem(128)
        self.exhaustion = exhaustion(self.problem.geometry, 3)

    def test_bounded_domain_has_a_gap(self):
        profile = spectral_profile(self.problem, self.exhaustion, [[0.5]])
        self.assertTrue(profile.gap_verdict)
        self.assertEqual(profile.sigma_set, [])
        self.assertEqual(profile.local_trends["(0.5)"], "diverging")
        self.assertEqual(profile.S_star, math.inf)
        self.assertEqual(profile.S_overline_infty, math.inf)
        self.assertIsNone(profile.infinity.S_infty)
        self.assertAlmostEqual(profile.S_global / math.pi ** 2, 1.0, delta=1e-3)

    def test_attainment_reports_the_extremal(self):
        profile = attainment_run(self.problem, self.exhaustion, [[0.5]])
        self.assertIsNotNone(profile.extremal)
        self.assertTrue(any(note.startswith("gap detected") for note in profile.notes))

    def test_centers_are_required(self):
        with self.assertRaises(DomainError):
            spectral_profile(self.problem, self.exhaustion, [])

    def test_compactness_needs_nonnegative_potential(self):
        geo = self.problem.geometry
        problem = self.problem.with_potential(ScalarField.constant(geo, -1.0, "cell"))
        with self.assertRaises(HypothesisViolation):
            compactness_characterization(problem, [[0.5]], self.exhaustion)

    def test_compactness_on_a_bounded_interval(self):
        verdict = compactness_characterization(self.problem, [[0.5]], self.exhaustion)
        self.assertEqual(verdict["verdict"], "compactness-predicted")
        self.assertEqual(verdict["offenders"], [])
        self.assertTrue(verdict["converged"])


class InverseSquareWeightTests(unittest.TestCase):
    """g = 1/x^2 on (0, 1): the origin carries the whole constant."""

    def setUp(self):
        self.problem = hardy_problem(512)
        self.exhaustion = exhaustion(self.problem.geometry, 3)

    def test_no_gap_and_no_attainment(self):
        profile = attainment_run(self.problem, self.exhaustion, [[0.0], [0.5]])
        self.assertFalse(profile.gap_verdict)
        self.assertIsNone(profile.extremal)
        self.assertEqual(profile.local_trends, {"(0)": "saturated", "(0.5)": "diverging"})
        self.assertEqual(profile.sigma_set, ["(0)"])
        self.assertLessEqual(profile.S_global, profile.S_star * (1 + 1e-9))
        self.assertLess(profile.S_star, profile.S_global / 0.8)
        self.assertIn("no gap detected: attainment not predicted", profile.notes)

    def test_origin_is_the_compactness_offender(self):
        verdict = compactness_characterization(self.problem, [[0.0], [0.5]], self.exhaustion)
        self.assertEqual(verdict["verdict"], "not-predicted")
        self.assertIn("(0)", verdict["offenders"])
        self.assertNotIn("(0.5)", verdict["offenders"])


if __name__ == '__main__':
    unittest.main()
