"""
Closed-form reference values.

Each oracle is a plain function of its parameters. :func:`evaluate` wraps
them in :class:`OracleValue` records for the ``oracle`` subcommand.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

from scipy.integrate import quad

from hardylab.errors import DomainError, UsageError
from hardylab.geometry import unit_sphere_area


@dataclass
class OracleValue:
    name: str
    parameters: dict
    value: float
    formula_note: str = ""

    def to_dict(self):
        return {"name": self.name, "parameters": dict(self.parameters), "value": self.value,
                "formula_note": self.formula_note}


def _check_condenser(p, N, r, R):
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p}")
    if int(N) != N or not 1 <= N <= 4:
        raise DomainError(f"N must be an integer between 1 and 4, got {N}")
    if not 0 < r < R:
        raise DomainError(f"need 0 < r < R, got r={r}, R={R}")


def radial_condenser_capacity(p, N, r, R):
    """
    p-capacity of the closed ball ``B_r`` relative to ``B_R`` in ``R^N``.

    ``omega |alpha|^(p-1) |r^alpha - R^alpha|^(1-p)`` with
    ``alpha = (p-N)/(p-1)``, and ``omega ln(R/r)^(1-N)`` when p = N.

    :raises DomainError: If ``r >= R`` or the exponents are out of range.
    """
    _check_condenser(p, N, r, R)
    omega = unit_sphere_area(int(N))
    if p == N:
        return omega * math.log(R / r) ** (1 - N)
    alpha = (p - N) / (p - 1)
    return omega * abs(alpha) ** (p - 1) * abs(r ** alpha - R ** alpha) ** (1 - p)


def radial_condenser_capacity_quadrature(p, N, r, R):
    """
    The same capacity by quadrature of the radial minimizer.

    The minimizer has ``|phi'| = c rho^(-(N-1)/(p-1))``; normalizing the drop
    from 1 to 0 gives the capacity ``omega I^(1-p)`` with
    ``I = int_r^R rho^(-(N-1)/(p-1)) d rho``.
    """
    _check_condenser(p, N, r, R)
    exponent = -(N - 1) / (p - 1)
    integral, _ = quad(lambda rho: rho ** exponent, r, R, epsabs=0.0, epsrel=1e-12, limit=200)
    return unit_sphere_area(int(N)) * integral ** (1 - p)


def hardy_1d_constant(p):
    """``((p-1)/p)^p``, the sharp constant of the one-sided Hardy inequality."""
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p}")
    return ((p - 1) / p) ** p


def hardy_radial_constant(p, N):
    """``(|N-p|/p)^p``; the weight is ``|x|^(-p)`` on ``R^N`` minus the origin."""
    if not p > 1:
        raise DomainError(f"p must exceed 1, got {p}")
    if p == N:
        raise DomainError("the radial Hardy constant degenerates at p = N")
    return (abs(N - p) / p) ** p


def hardy_radial_potential(p, N):
    """
    Coefficient and profile exponent of the critical radial Hardy potential.

    :return: ``(c, e)`` with ``V = c |x|^(-p)`` critical and ``u = |x|^e`` its
        ground state, ``c = -((N-p)/p)^p`` and ``e = (p-N)/p``.
    """
    return -hardy_radial_constant(p, N), (p - N) / p


def _note_condenser(params):
    return "log branch" if params["p"] == params["N"] else f"alpha = {(params['p'] - params['N']) / (params['p'] - 1):g}"


ORACLES: Dict[str, Tuple[Callable, Tuple[str, ...], Callable]] = {
    "radial_condenser_capacity": (radial_condenser_capacity, ("p", "N", "r", "R"), _note_condenser),
    "radial_condenser_capacity_quadrature": (radial_condenser_capacity_quadrature, ("p", "N", "r", "R"),
                                             lambda params: "quadrature of the radial minimizer"),
    "hardy_1d_constant": (hardy_1d_constant, ("p",), lambda params: "((p-1)/p)^p"),
    "hardy_radial_constant": (hardy_radial_constant, ("p", "N"), lambda params: "(|N-p|/p)^p"),
}


def evaluate(name, parameters) -> OracleValue:
    """
    Evaluate a registered oracle.

    :raises UsageError: For an unknown oracle or missing/extra parameters.
    """
    if name not in ORACLES:
        raise UsageError(f"unknown oracle {name!r}; choose from {', '.join(sorted(ORACLES))}")
    func, names, note = ORACLES[name]
    missing = [n for n in names if n not in parameters]
    extra = [n for n in parameters if n not in names]
    if missing or extra:
        raise UsageError(f"oracle {name} takes {', '.join(names)}"
                         + (f"; missing {', '.join(missing)}" if missing else "")
                         + (f"; unexpected {', '.join(extra)}" if extra else ""))
    params = {n: float(parameters[n]) for n in names}
    return OracleValue(name=name, parameters=params, value=func(**params), formula_note=note(params))
