"""
Generalized capacity of compact node sets.

``Cap_u(F, Omega)`` is the infimum of Q over nodal fields with ``phi = u`` on
F, ``phi = 0`` off the free region and, in the default truncated class,
``0 <= phi <= u``. The minimizer is seeded by the frozen-coefficient iteration
at the nonnegative part of V and polished by spectral projected gradient.
Every reported value is the energy of a feasible field, hence an upper bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from hardylab.energy import (
    Problem,
    ScalarField,
    q_gradient,
    q_value,
    require_positive,
    simplified_energy,
    simplified_energy_gradient,
)
from hardylab.errors import DomainError
from hardylab.geometry import SubsetMask, require_compact
from hardylab.solvers import SolverOptions, frozen_coefficient_solve, spectral_projected_gradient

logger = logging.getLogger("hardylab")

FEASIBLE_CLASSES = ("truncated", "nonnegative")
SMALL_SET_NODES = 4


@dataclass
class VariationalResult:
    """
    Outcome of a constrained minimization.

    Attributes:
        value (float): Functional value at ``minimizer``.
        minimizer (ScalarField): The optimal field found.
        iterations (int): Gradient iterations of the best run.
        residual (float): Final relative projected-gradient norm.
        converged (bool): Whether a stopping test was met.
        multistart_spread (float): ``(max - min) / best`` over restarts.
        stop_reason (str): ``gradient``, ``energy``, ``stalled``, ``exact``,
            ``max-iters`` or ``no-descent``.
        warnings (list): Human-readable notes on discrete artifacts.
        constraint (float): Constraint value at the minimizer, where one applies.
    """

    value: float
    minimizer: ScalarField
    iterations: int
    residual: float
    converged: bool
    multistart_spread: float = 0.0
    stop_reason: str = "gradient"
    warnings: List[str] = field(default_factory=list)
    constraint: Optional[float] = None

    def to_dict(self):
        data = {
            "value": self.value,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "multistart_spread": self.multistart_spread,
            "stop_reason": self.stop_reason,
            "warnings": list(self.warnings),
        }
        if self.constraint is not None:
            data["constraint"] = self.constraint
        return data


def _free_region(problem, domain):
    if domain is None:
        return problem.geometry.interior_mask.copy()
    domain.geometry.check_same(problem.geometry)
    return domain.free_nodes()


def capacity(problem: Problem, u: ScalarField, F: SubsetMask, opts: Optional[SolverOptions] = None,
             domain: Optional[SubsetMask] = None, feasible_class: str = "truncated") -> VariationalResult:
    """
    Compute ``Cap_u(F, Omega)``.

    :param problem: The functional Q_{p,A,V}.
    :param u: Positive nodal field dominated on F.
    :param F: Compact set; must lie in the free region.
    :param opts: Solver options; ``opts.route`` selects direct or simplified minimization.
    :param domain: Optional truncated domain, Dirichlet on the edge of its mask.
    :param feasible_class: ``truncated`` (``0 <= phi <= u``) or ``nonnegative``.
    :raises DomainError: If F touches the boundary or u is not positive.
    """
    opts = opts or SolverOptions()
    geo = problem.geometry
    F.geometry.check_same(geo)
    u.geometry.check_same(geo)
    require_positive(u, "u")
    if feasible_class not in FEASIBLE_CLASSES:
        raise DomainError(f"unknown feasible class {feasible_class!r}")

    if F.is_empty:
        return VariationalResult(0.0, ScalarField.constant(geo, 0.0), 0, 0.0, True, stop_reason="exact")
    require_compact(F)
    region = _free_region(problem, domain)
    if np.any(F.flags & ~region):
        raise DomainError(f"F ({F.descriptor}) is not inside the free region of the domain")

    warnings = []
    if F.count < SMALL_SET_NODES:
        warnings.append(f"F has {F.count} nodes; small discrete sets do not resolve zero-capacity limits")
        logger.warning(warnings[-1])

    pinned = F.flags
    free = region & ~pinned
    x_full = np.zeros(geo.n_nodes)
    x_full[pinned] = u.values[pinned]

    if not free.any():
        value = q_value(problem, x_full)
        return VariationalResult(value, ScalarField(geo, x_full), 0, 0.0, True,
                                 stop_reason="exact", warnings=warnings)

    if opts.route == "simplified":
        result = _capacity_simplified(problem, u, pinned, free, opts, feasible_class)
        result.warnings = warnings + result.warnings
        return result

    upper = u.values[free] if feasible_class == "truncated" else None

    def embed(z):
        full = x_full.copy()
        full[free] = z
        return full

    def fun(z):
        return q_value(problem, embed(z))

    def grad(z):
        return q_gradient(problem, embed(z), eps_rel=opts.eps_regularization)[free]

    seed, picard_steps = frozen_coefficient_solve(problem, x_full, free, problem.V_plus,
                                                   max_iters=opts.picard_iters)
    starts = [seed[free]]
    if np.any(problem.V.values < 0) and opts.multistarts > 0:
        rng = np.random.default_rng(opts.seed)
        cap = upper if upper is not None else u.values[free]
        starts += [rng.random(int(free.sum())) * cap for _ in range(opts.multistarts)]

    runs = [spectral_projected_gradient(fun, grad, z0, opts, lower=0.0, upper=upper) for z0 in starts]
    best = min(runs, key=lambda r: r.value)
    spread = 0.0
    if len(runs) > 1:
        values = [r.value for r in runs]
        spread = (max(values) - min(values)) / max(abs(best.value), 1e-300)
        if spread > 1e-3:
            warnings.append(f"multistart spread {spread:.3e}: the functional may be nonconvex")
            logger.warning(warnings[-1])

    minimizer = embed(best.x)
    value = q_value(problem, minimizer)
    logger.debug(f"Capacity of {F.descriptor}: {value:.10g} after {picard_steps} frozen steps "
                 f"and {best.iterations} gradient steps ({best.stop_reason})")
    if not best.converged:
        logger.warning(f"Capacity of {F.descriptor} did not converge; reporting the upper bound {value:.6g}")
    return VariationalResult(value, ScalarField(geo, minimizer), best.iterations, best.residual,
                             best.converged, spread, best.stop_reason, warnings)


def _capacity_simplified(problem, u, pinned, free, opts, feasible_class):
    """Minimize the simplified energy over ``psi = phi / u``; report ``Q(u psi)``."""
    geo = problem.geometry
    psi_full = np.zeros(geo.n_nodes)
    psi_full[pinned] = 1.0
    upper = np.ones(int(free.sum())) if feasible_class == "truncated" else None

    def embed(z):
        full = psi_full.copy()
        full[free] = z
        return full

    def fun(z):
        return simplified_energy(problem, u, ScalarField(geo, embed(z)))

    def grad(z):
        return simplified_energy_gradient(problem, u.values, embed(z), opts.eps_regularization)[free]

    seed = np.where(free, 0.5, 0.0)[free]
    run = spectral_projected_gradient(fun, grad, seed, opts, lower=0.0, upper=upper)
    minimizer = u.values * embed(run.x)
    value = q_value(problem, minimizer)
    note = "value is Q(u psi) at the simplified-energy minimizer psi"
    return VariationalResult(value, ScalarField(geo, minimizer), run.iterations, run.residual,
                             run.converged, 0.0, run.stop_reason, [note])


def capacity_decay(problem: Problem, u: ScalarField, F: SubsetMask, exhaustion: Sequence[SubsetMask],
                   opts: Optional[SolverOptions] = None, return_results: bool = False):
    """
    ``Cap_u(F, Omega_k)`` along an exhaustion, each with Dirichlet data on the
    edge of ``Omega_k``.

    :return: The values, or the full :class:`VariationalResult` objects when
        ``return_results`` is set.
    :raises DomainError: If F is not inside the smallest element.
    """
    if not exhaustion:
        raise DomainError("capacity_decay needs a nonempty exhaustion")
    if np.any(F.flags & ~exhaustion[0].free_nodes()):
        raise DomainError(f"F ({F.descriptor}) is not inside {exhaustion[0].descriptor}")
    results = [capacity(problem, u, F, opts, domain=omega) for omega in exhaustion]
    values = [r.value for r in results]
    for k in range(1, len(values)):
        if values[k] > values[k - 1] * (1 + 1e-6):
            logger.warning(f"Capacity increased from {values[k - 1]:.6g} to {values[k]:.6g} "
                           f"along the exhaustion (solver tolerance)")
    return results if return_results else values


def isocapacitary_ratios(problem: Problem, family: Sequence[SubsetMask],
                         opts: Optional[SolverOptions] = None):
    """
    ``|F|^((N-p)/N) / Cap_1(F)`` over a family, for p < N and V = 0.

    Bounded ratios across the family are the discrete trace of the
    isocapacitary inequality.

    :return: List of ``{"set_descriptor", "measure", "capacity", "ratio", "converged"}`` rows.
    """
    N = problem.geometry.dim
    if not problem.p < N:
        raise DomainError(f"isocapacitary ratios need p < N, got p={problem.p}, N={N}")
    if np.any(problem.V.values != 0):
        raise DomainError("isocapacitary ratios are defined for V = 0")
    one = ScalarField.constant(problem.geometry, 1.0)
    rows = []
    for F in family:
        measure = F.measure()
        if measure <= 0:
            continue
        result = capacity(problem, one, F, opts)
        cap = result.value
        ratio = measure ** ((N - problem.p) / N) / cap if cap > 0 else math.inf
        rows.append({"set_descriptor": F.descriptor, "measure": measure, "capacity": cap, "ratio": ratio,
                     "converged": result.converged})
    return rows
