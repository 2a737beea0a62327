import unittest

import numpy as np

from hardylab.errors import ConfigurationError
from hardylab.expressions import compile_expression
from hardylab.geometry import build_geometry


class ExpressionTests(unittest.TestCase):
    def setUp(self):
        self.interval = build_geometry({"kind": "interval", "bounds": [0, 1], "resolution": 4})
        self.radial = build_geometry({"kind": "radial", "dim": 3, "bounds": [0, 1], "resolution": 4})
        self.box = build_geometry({"kind": "box2d", "bounds": [[-1, 1], [-1, 1]], "resolution": 2})

    def test_singular_weight_at_midpoints(self):
        values = compile_expression("1/x^2").evaluate(self.interval, "cell")
        np.testing.assert_allclose(values, 1.0 / np.array([0.125, 0.375, 0.625, 0.875]) ** 2)

    def test_singular_weight_at_nodes_is_not_finite(self):
        values = compile_expression("1/x^2").evaluate(self.interval, "node")
        self.assertFalse(np.isfinite(values[0]))
        self.assertTrue(np.all(np.isfinite(values[1:])))

    def test_absolute_value_bars(self):
        values = compile_expression("|x - 0.5|").evaluate(self.interval, "node")
        np.testing.assert_allclose(values, [0.5, 0.25, 0.0, 0.25, 0.5])

    def test_constants_are_substituted(self):
        expr = compile_expression("((N-p)/p)^p", p=2, N=3)
        self.assertTrue(expr.is_constant)
        np.testing.assert_allclose(expr.evaluate(self.radial, "cell"), np.full(4, 0.25))

    def test_indicator_helper(self):
        values = compile_expression("chi(r, 0.25, 0.75)").evaluate(self.radial, "cell")
        np.testing.assert_array_equal(values, [0.0, 1.0, 1.0, 0.0])

    def test_radius_on_box(self):
        values = compile_expression("r^2").evaluate(self.box, "cell")
        np.testing.assert_allclose(values, np.full(4, 0.5))

    def test_distance_to_boundary(self):
        values = compile_expression("d").evaluate(self.interval, "node")
        np.testing.assert_allclose(values, [0.0, 0.25, 0.5, 0.25, 0.0])

    def test_unknown_name(self):
        with self.assertRaises(ConfigurationError) as ctx:
            compile_expression("foo * x")
        self.assertIn("foo", str(ctx.exception))

    def test_unbound_exponent(self):
        with self.assertRaises(ConfigurationError):
            compile_expression("x^p")

    def test_parse_error(self):
        with self.assertRaises(ConfigurationError):
            compile_expression("1/(x")


if __name__ == '__main__':
    unittest.main()
