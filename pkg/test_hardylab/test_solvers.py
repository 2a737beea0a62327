import unittest

import numpy as np

from hardylab.errors import ConfigurationError
from hardylab.solvers import SolverOptions, spectral_projected_gradient


class SolverOptionsTests(unittest.TestCase):
    def test_defaults(self):
        opts = SolverOptions.from_mapping(None)
        self.assertEqual(opts.max_iters, 50000)
        self.assertEqual(opts.tol_grad, 1e-8)
        self.assertEqual(opts.route, "direct")
        self.assertEqual(opts.precondition_refresh, 20)

    def test_seed_comes_from_the_scenario(self):
        self.assertEqual(SolverOptions.from_mapping({}, seed=42).seed, 42)
        self.assertEqual(SolverOptions.from_mapping({"seed": 3}, seed=42).seed, 3)

    def test_values_are_coerced(self):
        opts = SolverOptions.from_mapping({"max_iters": "100", "tol_energy": 1})
        self.assertEqual(opts.max_iters, 100)
        self.assertIsInstance(opts.tol_energy, float)

    def test_every_problem_is_reported(self):
        with self.assertRaises(ConfigurationError) as ctx:
            SolverOptions.from_mapping({"max_iters": "many", "colour": "red", "route": "sideways"})
        fields = [path for path, _, _ in ctx.exception.diagnostics]
        self.assertIn("solver.max_iters", fields)
        self.assertIn("solver.colour", fields)
        self.assertIn("solver.route", fields)

    def test_round_trip_through_dict(self):
        opts = SolverOptions(max_iters=10, route="simplified")
        self.assertEqual(SolverOptions.from_mapping(opts.to_dict()), opts)


class SpectralProjectedGradientTests(unittest.TestCase):
    """Shifted quadratics ``1 + (x - 1) D (x - 1) / 2`` with a diagonal D."""

    def quadratic(self, diag):
        def fun(x):
            return 1.0 + 0.5 * float((x - 1.0) @ (diag * (x - 1.0)))

        def grad(x):
            return diag * (x - 1.0)

        return fun, grad

    def residual_at(self, fun, grad, x):
        xnorm = float(np.linalg.norm(x))
        tau = min(xnorm ** 2 / fun(x), 1e100)
        return float(np.linalg.norm(tau * grad(x))) / xnorm

    def test_energy_stop_reports_the_residual_of_the_returned_iterate(self):
        fun, grad = self.quadratic(np.geomspace(1.0, 1e4, 50))
        opts = SolverOptions(tol_energy=1e6, tol_grad=1e-12)
        outcome = spectral_projected_gradient(fun, grad, np.full(50, 3.0), opts)
        self.assertEqual(outcome.stop_reason, "energy")
        self.assertEqual(outcome.iterations, 5)
        self.assertFalse(outcome.converged)
        self.assertGreater(outcome.residual, opts.tol_grad)
        self.assertAlmostEqual(outcome.residual / self.residual_at(fun, grad, outcome.x), 1.0, places=10)

    def test_converged_runs_meet_the_gradient_tolerance(self):
        fun, grad = self.quadratic(np.geomspace(1.0, 10.0, 20))
        opts = SolverOptions(tol_energy=0.0)
        outcome = spectral_projected_gradient(fun, grad, np.full(20, 3.0), opts)
        self.assertTrue(outcome.converged)
        self.assertLessEqual(outcome.residual, opts.tol_grad)
        np.testing.assert_allclose(outcome.x, 1.0, atol=1e-6)

    def test_box_constraints_hold(self):
        fun, grad = self.quadratic(np.ones(10))
        outcome = spectral_projected_gradient(fun, grad, np.zeros(10), SolverOptions(), lower=0.0, upper=0.5)
        self.assertTrue(outcome.converged)
        np.testing.assert_allclose(outcome.x, 0.5)


if __name__ == '__main__':
    unittest.main()
