"""
Minimization kernels shared by the capacity and best-constant solvers.

- :func:`spectral_projected_gradient`: Barzilai-Borwein steps with a
  nonmonotone Armijo search over the last ``memory`` values, clamped to
  simple bounds and optionally preconditioned and renormalised.
- :func:`frozen_coefficient_solve`: the Kacanov (Picard) iteration for the
  Euler-Lagrange equation of Q, relaxed by the geometric mean of successive
  coefficients. Exact after one step when p = 2.
- :class:`FrozenCoefficientPreconditioner`: a factorised frozen-coefficient
  stiffness matrix used as a variable metric.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import Callable, Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve

from hardylab.energy import cell_terms, stiffness_matrix
from hardylab.errors import ConfigurationError

logger = logging.getLogger("hardylab")

ROUTES = ("direct", "simplified")
_TINY = 1e-300
_STALL_STREAK = 5


@dataclass(frozen=True)
class SolverOptions:
    """
    Solver configuration, read from the ``solver`` block of a scenario.

    Attributes:
        max_iters (int): Iteration cap for gradient methods.
        tol_energy (float): Relative energy change treated as a stall.
        tol_grad (float): Relative projected-gradient tolerance.
        multistarts (int): Random restarts when the potential changes sign.
        seed (int): Seed for restarts and random checks.
        memory (int): Window of the nonmonotone line search.
        picard_iters (int): Cap for the frozen-coefficient seed.
        route (str): ``direct`` or ``simplified`` capacity minimization.
        tol_zero (float): Capacities below ``tol_zero`` times the energy scale count as zero.
        eps_regularization (float): Relative regularisation of ``|grad|^(p-2)`` for p < 2.
        precondition_refresh (int): Iterations between preconditioner refreshes.
    """

    max_iters: int = 50000
    tol_energy: float = 1e-10
    tol_grad: float = 1e-8
    multistarts: int = 3
    seed: int = 0
    memory: int = 10
    picard_iters: int = 200
    route: str = "direct"
    tol_zero: float = 1e-12
    eps_regularization: float = 1e-10
    precondition_refresh: int = 20

    @classmethod
    def from_mapping(cls, data: Optional[Mapping], seed=None):
        data = dict(data or {})
        known = {f.name: f for f in fields(cls)}
        problems = [(f"solver.{k}", None, "unknown option") for k in data if k not in known]
        values = {}
        for name, value in data.items():
            if name not in known:
                continue
            target = type(known[name].default)
            try:
                values[name] = target(value) if target is not str else str(value)
            except (TypeError, ValueError):
                problems.append((f"solver.{name}", None, f"expected {target.__name__}, got {value!r}"))
        if "seed" not in values and seed is not None:
            values["seed"] = int(seed)
        if values.get("route", "direct") not in ROUTES:
            problems.append(("solver.route", None, f"expected one of {', '.join(ROUTES)}"))
        if problems:
            raise ConfigurationError("invalid solver options", problems)
        return cls(**values)

    def to_dict(self):
        return asdict(self)


@dataclass
class SolverOutcome:
    x: np.ndarray
    value: float
    iterations: int
    residual: float
    converged: bool
    stop_reason: str


def spectral_projected_gradient(fun: Callable, grad: Callable, x0: np.ndarray, options: SolverOptions,
                                lower=None, upper=None, preconditioner=None,
                                normalize: Optional[Callable] = None) -> SolverOutcome:
    """
    Minimize ``fun`` over the box ``[lower, upper]``.

    :param fun: Objective on the free variables.
    :param grad: Its gradient.
    :param x0: Starting point, projected before use.
    :param options: Tolerances and limits.
    :param preconditioner: Object with ``solve(g)``, ``apply(s)`` and
        ``update(x)``; only meaningful without bounds.
    :param normalize: Map applied after every step (for scale-invariant objectives).
    :return: The last iterate and its diagnostics. The residual is the
        projected gradient at step ``|x|^2 / (p f)``-like scale, relative to
        ``|x|``, measured at the returned iterate. ``converged`` holds exactly
        when that residual is within ``tol_grad``; the stall and energy stops
        keep their ``stop_reason`` either way.
    """
    bounded = lower is not None or upper is not None

    def project(v):
        return np.clip(v, lower, upper) if bounded else v

    def step_and_residual(x, f, g):
        xnorm = float(np.linalg.norm(x))
        tau = min(xnorm ** 2 / max(abs(f), _TINY), 1e100) if xnorm > 0 else 1.0
        return tau, float(np.linalg.norm(project(x - tau * g) - x)) / max(xnorm, _TINY)

    def stop(x, f, iterations, residual, reason):
        converged = residual <= options.tol_grad
        if not converged:
            logger.debug(f"Projected gradient stopped ({reason}) with residual {residual:.3e} "
                         f"above tol_grad={options.tol_grad:g}")
        return SolverOutcome(x, f, iterations, residual, converged, reason)

    x = project(np.asarray(x0, dtype=float))
    if normalize is not None:
        x = normalize(x)
    f = fun(x)
    g = grad(x)
    history = deque([f], maxlen=max(1, options.memory))
    alpha = 1.0 if preconditioner is not None else None
    streak = 0
    residual = math.inf

    for it in range(options.max_iters + 1):
        tau, residual = step_and_residual(x, f, g)
        if residual <= options.tol_grad:
            return SolverOutcome(x, f, it, residual, True, "gradient")
        if it == options.max_iters:
            break

        if alpha is None:
            alpha = tau
        direction = -g if preconditioner is None else -preconditioner.solve(g)
        d = project(x + alpha * direction) - x
        gd = float(g @ d)
        if gd >= 0 and preconditioner is not None:
            d = project(x - tau * g) - x
            gd = float(g @ d)
        if gd >= 0:
            return SolverOutcome(x, f, it, residual, False, "no-descent")

        f_ref = max(history)
        lam = 1.0
        while True:
            x_new = x + lam * d
            if normalize is not None:
                x_new = normalize(x_new)
            f_new = fun(x_new)
            if f_new <= f_ref + 1e-4 * lam * gd:
                break
            lam *= 0.5
            if lam < 1e-16:
                logger.debug(f"No decrease possible at iteration {it}")
                return stop(x, f, it, residual, "stalled")

        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 0:
            ss = float(s @ preconditioner.apply(s)) if preconditioner is not None else float(s @ s)
            alpha = min(max(ss / sy, 1e-20), 1e20)
        else:
            alpha = tau if preconditioner is None else 1.0

        change = abs(f - f_new) / max(abs(f_new), _TINY)
        x, f, g = x_new, f_new, g_new
        history.append(f)
        streak = streak + 1 if change < options.tol_energy else 0
        if streak >= _STALL_STREAK:
            return stop(x, f, it + 1, step_and_residual(x, f, g)[1], "energy")
        if preconditioner is not None and (it + 1) % options.precondition_refresh == 0:
            preconditioner.update(x)

    logger.warning(f"Projected gradient stopped at max_iters={options.max_iters}, residual {residual:.3e}")
    return SolverOutcome(x, f, options.max_iters, residual, False, "max-iters")


def _frozen_weights(problem, values, potential, eps_rel):
    p = problem.p
    _, _, t, m = cell_terms(problem, values)
    t_scale = float(np.max(t)) if t.size and np.max(t) > 0 else 1.0
    m_scale = float(np.max(m * m)) if m.size and np.max(m * m) > 0 else 1.0
    a = (t + eps_rel ** 2 * t_scale) ** (0.5 * p - 1.0)
    b = potential * (m * m + eps_rel ** 2 * m_scale) ** (0.5 * p - 1.0)
    return a, b


def frozen_coefficient_solve(problem, x_full: np.ndarray, free: np.ndarray, potential: np.ndarray,
                             max_iters=200, tol=1e-10, eps_rel=1e-6):
    """
    Kacanov iteration for ``Q'(phi) = 0`` on the free nodes.

    Non-free entries of ``x_full`` are Dirichlet data. ``potential`` must be
    nonnegative so every frozen system is positive definite.

    :return: ``(values, iterations)``.
    """
    p = problem.p
    n_cells = problem.geometry.n_cells
    a = np.ones(n_cells)
    b = np.asarray(potential, dtype=float).copy()
    x = np.asarray(x_full, dtype=float).copy()
    fixed = ~free
    for k in range(1, max_iters + 1):
        K = stiffness_matrix(problem, a, b)
        K_free = K[free][:, free].tocsc()
        rhs = -(K[free][:, fixed] @ x[fixed])
        x_new = x.copy()
        x_new[free] = spsolve(K_free, rhs)
        change = float(np.linalg.norm(x_new - x)) / max(float(np.linalg.norm(x_new)), _TINY)
        x = x_new
        if p == 2:
            return x, k
        a_new, b_new = _frozen_weights(problem, x, potential, eps_rel)
        a = np.sqrt(a * a_new)
        b = np.sqrt(b * b_new)
        if change < tol:
            logger.debug(f"Frozen-coefficient iteration converged in {k} steps")
            return x, k
    logger.debug(f"Frozen-coefficient iteration hit its cap of {max_iters} steps")
    return x, max_iters


class FrozenCoefficientPreconditioner:
    """
    ``p (p-1)`` times the frozen-coefficient stiffness on the free nodes.

    Approximates the Hessian of Q, so Barzilai-Borwein steps in this metric
    stay close to 1.
    """

    def __init__(self, problem, free, potential, embed, eps_rel=1e-3):
        self.problem = problem
        self.free = free
        self.potential = np.maximum(np.asarray(potential, dtype=float), 0.0)
        self.embed = embed
        self.eps_rel = eps_rel
        self.matrix = None
        self._lu = None

    def update(self, x):
        p = self.problem.p
        a, b = _frozen_weights(self.problem, self.embed(x), self.potential, self.eps_rel)
        K = stiffness_matrix(self.problem, p * (p - 1.0) * a, p * (p - 1.0) * b)
        self.matrix = K[self.free][:, self.free].tocsc()
        try:
            self._lu = splu(self.matrix)
        except RuntimeError as e:
            logger.warning(f"Preconditioner factorisation failed ({e}); using the identity")
            self._lu = None
            self.matrix = sp.identity(int(np.count_nonzero(self.free)), format="csc")

    def solve(self, g):
        if self._lu is None:
            return g
        return self._lu.solve(g)

    def apply(self, s):
        return self.matrix @ s
