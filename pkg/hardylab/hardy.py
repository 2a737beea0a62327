"""
Hardy-weight diagnostics: the capacity-ratio norm, the best constant and the
two-sided comparison between them, plus the integral and embedding checks
that bound which weights can be Hardy weights at all.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from hardylab.capacity import VariationalResult, capacity
from hardylab.energy import (
    Problem,
    ScalarField,
    lebesgue_norm,
    q_gradient,
    q_value,
    require_positive,
    stiffness_matrix,
    weight_gradient,
    weight_value,
)
from hardylab.errors import ConfigurationError, DomainError, ResolutionError
from hardylab.geometry import SubsetMask, dedupe, level_sets
from hardylab.solvers import FrozenCoefficientPreconditioner, SolverOptions, spectral_projected_gradient

logger = logging.getLogger("hardylab")

DENSE_LIMIT = 400
EXTREMAL_LEVELS = tuple(np.linspace(0.0, 0.9, 10))
NECESSITY_SLACK = 1e-3


@dataclass
class HardyReport:
    """
    Norm, best constant and their comparison for one weight.

    ``mazya_norm`` is ``None`` when every set in the family has zero capacity.
    """

    mazya_norm: Optional[float]
    argmax_set: Optional[str]
    per_set_table: List[dict]
    zero_capacity: List[str] = field(default_factory=list)
    diagnostic: str = ""
    S_g: Optional[float] = None
    best_constant_B: Optional[float] = None
    sandwich_ratio: Optional[float] = None
    necessity_holds: Optional[bool] = None
    extremal: Optional[VariationalResult] = None

    @property
    def indeterminate(self):
        return self.mazya_norm is None

    def to_dict(self):
        data = {
            "mazya_norm": self.mazya_norm,
            "argmax_set": self.argmax_set,
            "zero_capacity": list(self.zero_capacity),
            "indeterminate": self.indeterminate,
            "diagnostic": self.diagnostic,
            "S_g": self.S_g,
            "best_constant_B": self.best_constant_B,
            "sandwich_ratio": self.sandwich_ratio,
            "necessity_holds": self.necessity_holds,
            "per_set_table": [dict(row) for row in self.per_set_table],
        }
        if self.extremal is not None:
            data["extremal"] = self.extremal.to_dict()
        return data


def _set_mass(problem, u, F):
    """``int_F |g| u^p`` over the cells inside F."""
    g = np.where(F.cells(), problem.abs_g, 0.0)
    return weight_value(problem, u.values, g)


def mazya_norm(problem: Problem, u: ScalarField, family: Sequence[SubsetMask],
               opts: Optional[SolverOptions] = None) -> HardyReport:
    """
    ``sup_F int_F |g| u^p / Cap_u(F)`` over a finite family.

    Sets whose capacity is at most ``tol_zero`` times the largest capacity of
    the family are listed as zero-capacity candidates and skipped. Ties keep
    the first set in family order.

    :raises ConfigurationError: If the family is empty.
    """
    opts = opts or SolverOptions()
    if not family:
        raise ConfigurationError("mazya_norm needs a nonempty family", [("family", None, "empty")])
    require_positive(u, "u")
    rows = []
    for F in family:
        mass = _set_mass(problem, u, F)
        cap = capacity(problem, u, F, opts)
        rows.append({"set_descriptor": F.descriptor, "weight_mass": mass, "capacity": cap.value,
                     "converged": cap.converged})

    top = max(row["capacity"] for row in rows)
    zero, best, argmax = [], None, None
    for row in rows:
        if top <= 0 or row["capacity"] <= opts.tol_zero * top:
            row["ratio"] = None
            zero.append(row["set_descriptor"])
            continue
        row["ratio"] = row["weight_mass"] / row["capacity"]
        if best is None or row["ratio"] > best:
            best, argmax = row["ratio"], row["set_descriptor"]

    diagnostic = ""
    if best is None:
        diagnostic = "every set has zero capacity: the functional is suspected critical"
        logger.warning(diagnostic)
    return HardyReport(mazya_norm=best, argmax_set=argmax, per_set_table=rows,
                       zero_capacity=zero, diagnostic=diagnostic)


def _check_reachable(problem, free, g):
    touching = (problem.geometry.incidence @ free.astype(np.int64)) > 0
    if not np.any(g[touching] > 0):
        raise DomainError("constraint unreachable: the weight vanishes on the domain")


def best_constant(problem: Problem, opts: Optional[SolverOptions] = None,
                  domain: Optional[SubsetMask] = None) -> VariationalResult:
    """
    ``S_g = inf Q(phi)`` subject to ``int |g| |phi|^p = 1``.

    For p = 2 and nonnegative V this is the smallest generalized eigenvalue of
    the stiffness matrix against the weighted mass matrix. Otherwise the
    scale-invariant quotient is minimized by preconditioned Barzilai-Borwein
    steps, rescaling onto the constraint after every step and starting from
    the p = 2 extremal raised to the power ``2 (p-1) / p``.

    :param domain: Restrict test functions to the free nodes of this mask.
    :raises DomainError: If ``g`` vanishes on every cell of the domain.
    :raises ResolutionError: If the domain has no free node.
    """
    opts = opts or SolverOptions()
    geo = problem.geometry
    free = geo.interior_mask.copy() if domain is None else domain.free_nodes()
    if not free.any():
        raise ResolutionError("the domain has no free nodes")
    g = problem.abs_g
    _check_reachable(problem, free, g)

    if problem.p == 2 and np.all(problem.V.values >= 0):
        try:
            return _linear_best_constant(problem, free, g)
        except (np.linalg.LinAlgError, ArpackError, ArpackNoConvergence, RuntimeError) as e:
            logger.warning(f"Generalized eigensolver failed ({e}); falling back to quotient descent")
    return _quotient_descent(problem, free, g, opts)


def _linear_best_constant(problem, free, g):
    n_free = int(free.sum())
    K = stiffness_matrix(problem, np.ones(problem.geometry.n_cells), problem.V.values)[free][:, free]
    D = stiffness_matrix(problem, np.zeros(problem.geometry.n_cells), g)[free][:, free]
    if n_free <= DENSE_LIMIT:
        mu, vec = scipy.linalg.eigh(D.toarray(), K.toarray(), subset_by_index=[n_free - 1, n_free - 1])
    else:
        mu, vec = eigsh(D.tocsc(), k=1, M=K.tocsc(), which="LA")
    if not mu[0] > 0:
        raise DomainError("constraint unreachable: the weighted mass matrix vanishes")
    values = np.zeros(problem.geometry.n_nodes)
    values[free] = vec[:, 0]
    return _finish(problem, free, g, values, iterations=0, converged=True, stop_reason="exact")


def _finish(problem, free, g, values, iterations, converged, stop_reason, residual=None, warnings=None):
    if values.sum() < 0:
        values = -values
    mass = weight_value(problem, values, g)
    values = values / mass ** (1.0 / problem.p)
    constraint = weight_value(problem, values, g)
    Q = q_value(problem, values)
    value = Q / constraint
    el = q_gradient(problem, values) - value * weight_gradient(problem, values, g)
    scale = float(np.linalg.norm(q_gradient(problem, values)[free]))
    el_residual = float(np.linalg.norm(el[free])) / max(scale, 1e-300)
    return VariationalResult(
        value=value, minimizer=ScalarField(problem.geometry, values), iterations=iterations,
        residual=el_residual if residual is None else residual, converged=converged,
        stop_reason=stop_reason, warnings=list(warnings or []), constraint=constraint,
    )


def _quotient_descent(problem, free, g, opts):
    p = problem.p
    geo = problem.geometry
    linear = replace(problem, p=2.0, V=problem.V.with_values(problem.V_plus))
    try:
        seed = _linear_best_constant(linear, free, g).minimizer.values
        seed = np.abs(seed) ** (2.0 * (p - 1.0) / p)
    except (np.linalg.LinAlgError, ArpackError, ArpackNoConvergence, RuntimeError, DomainError) as e:
        logger.warning(f"p = 2 seed unavailable ({e}); starting from a constant field")
        seed = np.where(free, 1.0, 0.0)

    def embed(z):
        full = np.zeros(geo.n_nodes)
        full[free] = z
        return full

    def fun(z):
        full = embed(z)
        mass = weight_value(problem, full, g)
        return q_value(problem, full) / mass if mass > 0 else math.inf

    def grad(z):
        full = embed(z)
        mass = weight_value(problem, full, g)
        ratio = q_value(problem, full) / mass
        gq = q_gradient(problem, full, eps_rel=opts.eps_regularization)
        return ((gq - ratio * weight_gradient(problem, full, g)) / mass)[free]

    def normalize(z):
        return z / weight_value(problem, embed(z), g) ** (1.0 / p)

    preconditioner = FrozenCoefficientPreconditioner(problem, free, problem.V_plus, embed)
    z0 = normalize(seed[free])
    preconditioner.update(z0)
    run = spectral_projected_gradient(fun, grad, z0, opts, preconditioner=preconditioner,
                                      normalize=normalize)
    logger.debug(f"Quotient descent p={p}: {run.value:.10g} after {run.iterations} steps ({run.stop_reason})")
    if not run.converged:
        logger.warning(f"Best-constant descent did not converge (residual {run.residual:.3e})")
    return _finish(problem, free, g, embed(run.x), run.iterations, run.converged, run.stop_reason,
                   residual=run.residual)


def sandwich_check(problem: Problem, u: ScalarField, family: Sequence[SubsetMask],
                   opts: Optional[SolverOptions] = None) -> HardyReport:
    """
    Compare the capacity-ratio norm with ``B_g = 1 / S_g``.

    The family is enlarged by superlevel sets of the extremal at 10
    quantiles. ``necessity_holds`` records ``norm <= B_g (1 + 1e-3)``;
    ``sandwich_ratio = B_g / norm`` is the observed comparison constant.
    """
    opts = opts or SolverOptions()
    geo = problem.geometry
    if not np.any(problem.abs_g[_touching(geo)] > 0):
        report = mazya_norm(problem, u, family, opts)
        report.S_g, report.best_constant_B = math.inf, 0.0
        report.necessity_holds = True
        report.diagnostic = (report.diagnostic + " g vanishes: both sides are 0").strip()
        return report

    extremal = best_constant(problem, opts)
    extended = dedupe(geo, list(family) + level_sets(extremal.minimizer.values, geo, EXTREMAL_LEVELS))
    report = mazya_norm(problem, u, extended, opts)
    report.S_g = extremal.value
    report.best_constant_B = 1.0 / extremal.value
    report.extremal = extremal
    if report.mazya_norm is not None and report.mazya_norm > 0:
        report.sandwich_ratio = report.best_constant_B / report.mazya_norm
        report.necessity_holds = report.mazya_norm <= report.best_constant_B * (1.0 + NECESSITY_SLACK)
    else:
        report.necessity_holds = True
    if not report.necessity_holds:
        logger.warning(f"Norm {report.mazya_norm:.6g} exceeds B_g {report.best_constant_B:.6g}")
    return report


def _touching(geo):
    return (geo.incidence @ geo.interior_mask.astype(np.int64)) > 0


@dataclass
class KPCheck:
    partials: List[float]
    verdict: str

    def to_dict(self):
        return {"partials": list(self.partials), "verdict": self.verdict}


def kp_necessary_check(problem: Problem, u: ScalarField, K1: SubsetMask,
                       exhaustion: Sequence[SubsetMask]) -> KPCheck:
    """
    Partial integrals ``int_{Omega_k \\ K1} |g| u^p`` along an exhaustion.

    ``bounded`` when the last increment is at most 5% of the last partial.
    """
    require_positive(u, "u")
    if K1.is_empty:
        raise DomainError("K1 must have nonempty interior")
    in_K1 = K1.cells()
    partials = []
    for omega in exhaustion:
        cells = omega.cells() & ~in_K1
        g = np.where(cells, problem.abs_g, 0.0)
        partials.append(weight_value(problem, u.values, g))
    total = partials[-1] if partials else 0.0
    increment = partials[-1] - partials[-2] if len(partials) > 1 else 0.0
    verdict = "bounded" if total <= 0 or increment <= 0.05 * total else "diverging"
    logger.debug(f"KP partial integrals {partials} -> {verdict}")
    return KPCheck(partials=partials, verdict=verdict)


def _conjugate(a):
    if math.isinf(a):
        return 1.0
    if a == 1.0:
        return math.inf
    return a / (a - 1.0)


def weighted_embedding_rows(u: ScalarField, alpha, beta, r, sets: Sequence[SubsetMask], p):
    """Per-set values of the weighted embedding condition."""
    geo = u.geometry
    N = geo.dim
    if not sets:
        raise ConfigurationError("weighted_embedding_check needs at least one set", [("sets", None, "empty")])
    if not (1.0 <= alpha <= N / p):
        raise ConfigurationError("alpha must lie in [1, N/p]", [("alpha", None, f"got {alpha}, N/p={N / p:g}")])
    if not beta >= 1.0 or not r > 1.0:
        raise ConfigurationError("need beta >= 1 and r > 1", [("beta", None, f"beta={beta}, r={r}")])
    a_c, b_c, p_c = _conjugate(alpha), _conjugate(beta), _conjugate(p)
    exponent = 1.0 / N + (0.0 if math.isinf(a_c) else 1.0 / (a_c * p)) - 1.0 / p

    rows = []
    for A in sets:
        cells = A.cells()
        w = geo.cell_measures[cells]
        U = u.on_cells()[cells]
        if w.size == 0:
            continue
        if np.any(U <= 0):
            raise DomainError(f"u vanishes on {A.descriptor}")
        size = float(w.sum())
        if math.isinf(a_c):
            first = float(np.max(U)) ** (0.0 if math.isinf(b_c) else 1.0 / b_c)
        elif math.isinf(b_c):
            first = 1.0
        else:
            e = a_c * p * r / b_c
            first = float(np.sum(w * U ** e) / size) ** (1.0 / (a_c * p * r))
        second = float(np.sum(w * U ** (-p_c * r)) / size) ** (1.0 / (p_c * r))
        rows.append({"set_descriptor": A.descriptor, "measure": size, "value": size ** exponent * first * second})
    return rows


def weighted_embedding_check(u: ScalarField, alpha, beta, r, sets: Sequence[SubsetMask], p=2.0) -> float:
    """
    Supremum over ``sets`` of
    ``|A|^(1/N + 1/(alpha' p) - 1/p) mean_A(u^(alpha' p r / beta'))^(1/(alpha' p r))
    mean_A(u^(-p' r))^(1/(p' r))``.

    :raises ConfigurationError: On an empty set list or parameters out of range.
    :raises DomainError: If u is not positive on a set.
    """
    rows = weighted_embedding_rows(u, alpha, beta, r, sets, p)
    return max(row["value"] for row in rows) if rows else 0.0


def lebesgue_embedding_bound(problem: Problem, u: ScalarField, family: Sequence[SubsetMask],
                             opts: Optional[SolverOptions] = None) -> float:
    """``mazya_norm / ||g||_{L^(N/p)}`` for p < N; bounded over weights when L^(N/p) embeds."""
    N = problem.geometry.dim
    if not problem.p < N:
        raise DomainError(f"the L^(N/p) bound needs p < N, got p={problem.p}, N={N}")
    norm = lebesgue_norm(problem.g, N / problem.p)
    report = mazya_norm(problem, u, family, opts)
    if norm == 0 or report.mazya_norm is None:
        return 0.0
    return report.mazya_norm / norm
