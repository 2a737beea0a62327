import math
import unittest

import numpy as np

from hardylab.utils.serialization import dumps, format_cell, to_jsonable
from hardylab.utils.string_utils import slugify, to_snake_case


class StringUtilsTests(unittest.TestCase):
    def test_to_snake_case(self):
        self.assertEqual(to_snake_case("JSONReporter"), "json_reporter")
        self.assertEqual(to_snake_case("CSVReporter"), "csv_reporter")
        self.assertEqual(to_snake_case("TaskServer"), "task_server")
        self.assertEqual(to_snake_case("indent"), "indent")

    def test_slugify(self):
        self.assertEqual(slugify("hardy norm/alpha"), "hardy-norm-alpha")
        self.assertEqual(slugify("per_set.v2"), "per_set.v2")
        self.assertEqual(slugify("!!!"), "unnamed")


class SerializationTests(unittest.TestCase):
    def test_numbers_keep_twelve_digits(self):
        self.assertEqual(to_jsonable(1.0 / 3.0), 0.333333333333)
        self.assertEqual(to_jsonable(math.pi * 1e10), 31415926535.9)

    def test_non_finite_values(self):
        self.assertEqual(to_jsonable([math.inf, -math.inf, math.nan]), ["inf", "-inf", "nan"])

    def test_numpy_values(self):
        value = to_jsonable({"a": np.arange(3), "b": np.float64(0.5), "c": np.bool_(True), 4: (np.int64(2),)})
        self.assertEqual(value, {"a": [0, 1, 2], "b": 0.5, "c": True, "4": [2]})
        self.assertIsInstance(value["a"][0], int)
        self.assertIs(type(value["c"]), bool)

    def test_dumps_sorts_keys(self):
        self.assertEqual(dumps({"b": 1, "a": math.inf}, indent=None), '{"a": "inf", "b": 1}\n')

    def test_format_cell(self):
        self.assertEqual(format_cell(None), "")
        self.assertEqual(format_cell(0.1 + 0.2), "0.3")
        self.assertEqual(format_cell(math.inf), "inf")
        self.assertEqual(format_cell({"b": 1, "a": 2}), '{"a": 2, "b": 1}')
        self.assertEqual(format_cell("ball"), "ball")


if __name__ == '__main__':
    unittest.main()
