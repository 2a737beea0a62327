"""
Field expressions such as ``"1/x^2"`` or ``"|x|^((p-N)/p)"``.

Parsing goes through sympy (``^`` is power, ``|a|`` is ``abs(a)``); the result
is lambdified against numpy and evaluated at nodes or cell midpoints. Known
names: variables ``x``, ``y``, ``r`` (distance to the origin), ``d``
(distance to the boundary), constants ``p``, ``N``, ``pi``, ``E``, and the
helpers ``chi(t, a, b)`` (indicator of ``a <= t <= b``) and ``step(t)``.
"""

import logging
import re

import numpy as np
import sympy
from sympy.parsing.sympy_parser import convert_xor, parse_expr, standard_transformations

from hardylab.errors import ConfigurationError

logger = logging.getLogger("hardylab")

VARIABLES = ("x", "y", "r", "d")
_TRANSFORMS = standard_transformations + (convert_xor,)
_ABS_BARS = re.compile(r"\|([^|]+)\|")


def _chi(t, a, b):
    t = np.asarray(t, dtype=float)
    return ((t >= a) & (t <= b)).astype(float)


def _step(t):
    return (np.asarray(t, dtype=float) >= 0).astype(float)


_NUMPY_HELPERS = {"chi": _chi, "step": _step}


class Expression:
    """
    A parsed field expression bound to numeric ``p`` and ``N``.

    :param source: Expression text.
    :param constants: Values substituted for ``p`` and ``N``.
    """

    def __init__(self, source, constants=None):
        self.source = str(source)
        self.constants = dict(constants or {})
        symbols = {name: sympy.Symbol(name, real=True) for name in VARIABLES}
        local_dict = dict(symbols)
        local_dict.update({"p": sympy.Symbol("p"), "N": sympy.Symbol("N")})
        local_dict.update({"chi": sympy.Function("chi"), "step": sympy.Function("step"),
                           "pi": sympy.pi, "E": sympy.E})
        for name, value in self.constants.items():
            local_dict[name] = sympy.Float(value) if not float(value).is_integer() else sympy.Integer(int(value))

        text = self.source
        while _ABS_BARS.search(text):
            text = _ABS_BARS.sub(r"Abs(\1)", text)
        try:
            self.expr = parse_expr(text, local_dict=local_dict, transformations=_TRANSFORMS)
        except Exception as e:
            raise ConfigurationError(f"cannot parse expression {self.source!r}",
                                     [("expression", None, f"{type(e).__name__}: {e}")])

        unknown = {s.name for s in self.expr.free_symbols} - set(VARIABLES)
        if unknown:
            raise ConfigurationError(f"unknown names in expression {self.source!r}",
                                     [("expression", None, f"unknown: {', '.join(sorted(unknown))}")])
        self._symbols = [symbols[name] for name in VARIABLES]
        self._func = sympy.lambdify(self._symbols, self.expr, modules=[_NUMPY_HELPERS, "numpy"])

    @property
    def is_constant(self):
        return not self.expr.free_symbols

    def evaluate(self, geometry, location="cell"):
        """
        Evaluate at every node (``location="node"``) or cell midpoint.

        Singular points produce ``inf``/``nan`` which the caller decides on.
        """
        pts = geometry.cell_midpoints if location == "cell" else geometry.node_coords
        x = pts[:, 0]
        y = pts[:, 1] if pts.shape[1] > 1 else np.zeros_like(x)
        r = np.sqrt(np.sum(pts ** 2, axis=1))
        if location == "cell":
            d = geometry.avg_operator @ geometry.distance_to_boundary
        else:
            d = geometry.distance_to_boundary
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            values = self._func(x, y, r, d)
        values = np.broadcast_to(np.asarray(values, dtype=float), x.shape).copy()
        return values

    def __repr__(self):
        return f"Expression({self.source!r})"


def compile_expression(source, p=None, N=None):
    constants = {}
    if p is not None:
        constants["p"] = p
    if N is not None:
        constants["N"] = N
    return Expression(source, constants)
