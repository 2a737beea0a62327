"""
The functional Q_{p,A,V}, its first variation and related integrands.

On every cell the gradient is the sparse difference operator of the geometry
and the zeroth-order terms use the cell average of the nodal values, so

    Q(phi) = sum_c w_c (|grad phi|_A^p + V_c |avg phi|^p)

is exactly p-homogeneous. ``V``, ``g`` and ``A`` live on cells (evaluated at
midpoints), test functions and ``u`` live on nodes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from hardylab.errors import ConfigurationError, DomainError, UsageError
from hardylab.geometry import Geometry, SubsetMask

logger = logging.getLogger("hardylab")

LOCATIONS = ("node", "cell")


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    Real values on the nodes or the cells of a geometry.

    :raises DomainError: If a value is NaN or infinite.
    """

    geometry: Geometry
    values: np.ndarray
    location: str = "node"

    def __post_init__(self):
        if self.location not in LOCATIONS:
            raise UsageError(f"unknown field location {self.location!r}")
        values = np.asarray(self.values, dtype=float)
        expected = self.geometry.n_nodes if self.location == "node" else self.geometry.n_cells
        if values.shape != (expected,):
            raise UsageError(f"{self.location} field needs {expected} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, geometry, value, location="node"):
        n = geometry.n_nodes if location == "node" else geometry.n_cells
        return cls(geometry, np.full(n, float(value)), location)

    def with_values(self, values):
        return ScalarField(self.geometry, values, self.location)

    def on_cells(self):
        """Cell values; node fields are averaged."""
        if self.location == "cell":
            return self.values
        return self.geometry.avg_operator @ self.values

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other):
        self.geometry.check_same(other.geometry)
        if other.location != self.location:
            raise UsageError("cannot add node and cell fields")
        return self.with_values(self.values + other.values)


@dataclass(frozen=True, eq=False)
class CoefficientA:
    """
    Per-cell symmetric positive-definite coefficient.

    ``matrices`` has shape ``(n_cells,)`` on 1D grids and ``(n_cells, 2, 2)``
    on boxes. ``theta`` is the ellipticity function: ``|xi|/theta <= |xi|_A
    <= theta |xi|`` on every cell.
    """

    geometry: Geometry
    matrices: np.ndarray
    lam_min: np.ndarray = field(init=False)
    lam_max: np.ndarray = field(init=False)
    theta: np.ndarray = field(init=False)

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        sdim = self.geometry.spatial_dim
        n = self.geometry.n_cells
        if sdim == 1:
            if mats.shape != (n,):
                raise UsageError(f"1D coefficient needs {n} values, got {mats.shape}")
            lo = hi = mats
        else:
            if mats.shape != (n, 2, 2):
                raise UsageError(f"2D coefficient needs shape ({n}, 2, 2), got {mats.shape}")
            if not np.allclose(mats, np.transpose(mats, (0, 2, 1)), rtol=1e-12, atol=1e-14):
                raise DomainError("coefficient A must be symmetric on every cell")
            eig = np.linalg.eigvalsh(mats)
            lo, hi = eig[:, 0], eig[:, -1]
        if not np.all(np.isfinite(mats)) or np.any(lo <= 0):
            raise DomainError("coefficient A must be positive definite on every cell")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "lam_min", lo)
        object.__setattr__(self, "lam_max", hi)
        object.__setattr__(self, "theta", np.maximum(lo ** -0.5, hi ** 0.5))

    @classmethod
    def identity(cls, geometry):
        return cls.scalar(geometry, np.ones(geometry.n_cells))

    @classmethod
    def scalar(cls, geometry, values):
        values = np.broadcast_to(np.asarray(values, dtype=float), (geometry.n_cells,))
        if geometry.spatial_dim == 1:
            return cls(geometry, values.copy())
        return cls(geometry, values[:, None, None] * np.eye(2)[None, :, :])

    def apply(self, grads):
        """``A xi`` for per-cell vectors of shape ``(n_cells, spatial_dim)``."""
        if self.geometry.spatial_dim == 1:
            return grads * self.matrices[:, None]
        return np.einsum("cij,cj->ci", self.matrices, grads)

    def block_matrix(self, weights):
        """Sparse block diagonal of ``weights[c] * A_c``, acting on stacked gradients."""
        n = self.geometry.n_cells
        if self.geometry.spatial_dim == 1:
            return sp.diags(weights * self.matrices)
        c = np.arange(n)
        rows = np.concatenate([2 * c, 2 * c, 2 * c + 1, 2 * c + 1])
        cols = np.concatenate([2 * c, 2 * c + 1, 2 * c, 2 * c + 1])
        vals = np.concatenate([
            weights * self.matrices[:, 0, 0], weights * self.matrices[:, 0, 1],
            weights * self.matrices[:, 1, 0], weights * self.matrices[:, 1, 1],
        ])
        return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))


@dataclass(frozen=True, eq=False)
class Problem:
    """
    One instance of Q_{p,A,V} with its Hardy data.

    Attributes:
        p (float): Exponent, p > 1.
        geometry (Geometry): The domain.
        A (CoefficientA): Principal coefficient.
        V (ScalarField): Potential on cells, may change sign.
        g (ScalarField): Candidate Hardy weight on cells; only ``|g|`` is used.
        u (ScalarField): Optional positive nodal (super)solution.
    """

    p: float
    geometry: Geometry
    A: CoefficientA
    V: ScalarField
    g: ScalarField
    u: Optional[ScalarField] = None

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError(f"p must exceed 1, got {self.p}")
        for name in ("A", "V", "g"):
            getattr(self, name).geometry.check_same(self.geometry)
        for name in ("V", "g"):
            if getattr(self, name).location != "cell":
                raise UsageError(f"{name} must be a cell field")
        if self.u is not None:
            self.u.geometry.check_same(self.geometry)
            require_positive(self.u, "u")

    @classmethod
    def simple(cls, geometry, p, V=None, g=None, u=None, A=None):
        """Convenience constructor with identity A and zero V/g defaults."""
        V = ScalarField.constant(geometry, 0.0, "cell") if V is None else V
        g = ScalarField.constant(geometry, 0.0, "cell") if g is None else g
        A = CoefficientA.identity(geometry) if A is None else A
        return cls(p=float(p), geometry=geometry, A=A, V=V, g=g, u=u)

    def with_weight(self, g):
        return replace(self, g=g)

    def with_potential(self, V):
        return replace(self, V=V)

    @property
    def abs_g(self):
        return np.abs(self.g.values)

    @property
    def V_plus(self):
        return np.maximum(self.V.values, 0.0)

    def shifted(self, S):
        """The problem at potential ``V - S|g|``."""
        return self.with_potential(self.V.with_values(self.V.values - S * self.abs_g))


def require_positive(u, name="u"):
    if u.location != "node":
        raise UsageError(f"{name} must be a node field")
    inner = u.values[u.geometry.interior_mask]
    if inner.size and np.min(inner) <= 0:
        raise DomainError(f"{name} must be positive on every interior node")


def _values(problem, phi):
    if isinstance(phi, ScalarField):
        problem.geometry.check_same(phi.geometry)
        if phi.location != "node":
            raise UsageError("test functions are node fields")
        return phi.values
    return np.asarray(phi, dtype=float)


def cell_terms(problem, values):
    """Per-cell gradients, ``A grad``, ``|grad|_A^2`` and cell averages."""
    geo = problem.geometry
    grads = (geo.grad_operator @ values).reshape(geo.n_cells, geo.spatial_dim)
    a_grads = problem.A.apply(grads)
    t = np.maximum(np.sum(grads * a_grads, axis=1), 0.0)
    m = geo.avg_operator @ values
    return grads, a_grads, t, m


def _signed_power(m, e):
    return np.sign(m) * np.abs(m) ** e


def q_value(problem, values, potential=None):
    """Q on raw nodal values; ``potential`` overrides the cell values of V."""
    p = problem.p
    V = problem.V.values if potential is None else potential
    _, _, t, m = cell_terms(problem, values)
    w = problem.geometry.cell_measures
    return float(np.sum(w * (t ** (0.5 * p) + V * np.abs(m) ** p)))


def gradient_coefficient(t, p, eps_rel=1e-10):
    """``p |xi|_A^(p-2)``, regularised as ``(t + eps^2)^((p-2)/2)`` when p < 2."""
    if p >= 2:
        return p * t ** (0.5 * p - 1.0)
    scale = math.sqrt(float(np.max(t))) if t.size and np.max(t) > 0 else 1.0
    eps = eps_rel * scale
    return p * (t + eps * eps) ** (0.5 * p - 1.0)


def q_gradient(problem, values, potential=None, eps_rel=1e-10):
    p = problem.p
    geo = problem.geometry
    V = problem.V.values if potential is None else potential
    _, a_grads, t, m = cell_terms(problem, values)
    w = geo.cell_measures
    flux = (w * gradient_coefficient(t, p, eps_rel))[:, None] * a_grads
    return geo.grad_operator.T @ flux.ravel() + geo.avg_operator.T @ (w * V * p * _signed_power(m, p - 1.0))


def weight_value(problem, values, weight=None):
    """``sum_c w_c |g_c| |avg phi|^p``."""
    g = problem.abs_g if weight is None else np.abs(weight)
    m = problem.geometry.avg_operator @ values
    return float(np.sum(problem.geometry.cell_measures * g * np.abs(m) ** problem.p))


def weight_gradient(problem, values, weight=None):
    p = problem.p
    g = problem.abs_g if weight is None else np.abs(weight)
    geo = problem.geometry
    m = geo.avg_operator @ values
    return geo.avg_operator.T @ (geo.cell_measures * g * p * _signed_power(m, p - 1.0))


def stiffness_matrix(problem, grad_weights, mass_weights):
    """
    ``G^T diag(w a A) G + M^T diag(w b) M`` for per-cell weights ``a`` and ``b``.

    With ``a = 1`` and ``b = V`` this is the quadratic form of Q at p = 2.
    """
    geo = problem.geometry
    w = geo.cell_measures
    G, M = geo.grad_operator, geo.avg_operator
    K = G.T @ problem.A.block_matrix(w * grad_weights) @ G
    K = K + M.T @ sp.diags(w * mass_weights) @ M
    return sp.csr_matrix(K)


def energy_Q(problem: Problem, phi: ScalarField) -> float:
    """
    Midpoint-quadrature value of ``int |grad phi|_A^p + V |phi|^p``.

    :param problem: The functional.
    :param phi: Nodal test function.
    :raises UsageError: If ``phi`` lives on another geometry.
    """
    return q_value(problem, _values(problem, phi))


def energy_gradient(problem: Problem, phi: ScalarField, eps_rel=1e-10) -> ScalarField:
    """
    First variation of :func:`energy_Q` as a nodal field.

    Entries on boundary nodes are kept; callers restrict to the free nodes.
    """
    if problem.p < 1.1:
        raise DomainError(f"energy_gradient needs p >= 1.1, got {problem.p}")
    return ScalarField(problem.geometry, q_gradient(problem, _values(problem, phi), eps_rel=eps_rel))


def beppo_levi_norm(problem: Problem, phi: ScalarField) -> float:
    """``(int |grad phi|_A^p + V^+ |phi|^p)^(1/p)``."""
    value = q_value(problem, _values(problem, phi), potential=problem.V_plus)
    return value ** (1.0 / problem.p)


def weight_mass(problem: Problem, phi: ScalarField, weight: Optional[ScalarField] = None,
                mask: Optional[SubsetMask] = None) -> float:
    """
    ``int |g| |phi|^p``, restricted to the cells of ``mask`` when given.
    """
    values = _values(problem, phi)
    g = problem.abs_g if weight is None else np.abs(weight.values)
    if mask is not None:
        g = np.where(mask.cells(), g, 0.0)
    return weight_value(problem, values, g)


def lebesgue_norm(f: ScalarField, exponent: float, mask: Optional[SubsetMask] = None) -> float:
    geo = f.geometry
    values = np.abs(f.on_cells())
    w = geo.cell_measures
    if mask is not None:
        w = np.where(mask.cells(), w, 0.0)
    if math.isinf(exponent):
        return float(np.max(values[w > 0])) if np.any(w > 0) else 0.0
    return float(np.sum(w * values ** exponent)) ** (1.0 / exponent)


def simplified_energy(problem: Problem, u: ScalarField, phi: ScalarField) -> float:
    """
    ``int u^2 |grad phi|_A^2 (phi |grad u|_A + u |grad phi|_A)^(p-2)``.

    :raises DomainError: If ``u`` is not positive on the interior or ``phi``
        takes negative values.
    """
    require_positive(u, "u")
    values = _values(problem, phi)
    if np.any(values < 0):
        raise DomainError("simplified_energy expects a nonnegative phi")
    U, s, gu, psi_bar = _simplified_terms(problem, u.values, values)
    base = psi_bar * gu + U * s
    p = problem.p
    with np.errstate(divide="ignore", invalid="ignore"):
        density = np.where(base > 0, U ** 2 * s ** 2 * base ** (p - 2.0), 0.0)
    return float(np.sum(problem.geometry.cell_measures * density))


def _simplified_terms(problem, u_values, values):
    _, _, t_phi, psi_bar = cell_terms(problem, values)
    _, _, t_u, U = cell_terms(problem, u_values)
    return U, np.sqrt(t_phi), np.sqrt(t_u), psi_bar


def simplified_energy_gradient(problem, u_values, values, eps_rel=1e-10):
    """Gradient of the simplified energy with respect to the nodal values of phi."""
    p = problem.p
    geo = problem.geometry
    grads, a_grads, t_phi, psi_bar = cell_terms(problem, values)
    _, _, t_u, U = cell_terms(problem, u_values)
    s, gu = np.sqrt(t_phi), np.sqrt(t_u)
    base = psi_bar * gu + U * s
    scale = float(np.max(base)) if base.size and np.max(base) > 0 else 1.0
    base = np.sqrt(base ** 2 + (eps_rel * scale) ** 2)
    w = geo.cell_measures
    coef_grad = w * (2.0 * U ** 2 * base ** (p - 2.0) + (p - 2.0) * U ** 3 * s * base ** (p - 3.0))
    coef_avg = w * (p - 2.0) * U ** 2 * s ** 2 * base ** (p - 3.0) * gu
    flux = coef_grad[:, None] * a_grads
    return geo.grad_operator.T @ flux.ravel() + geo.avg_operator.T @ coef_avg


def picone_lagrangian(problem: Problem, phi: ScalarField, Phi: ScalarField) -> ScalarField:
    """
    Per-cell Picone Lagrangian of ``phi`` against a positive ``Phi``.

    ``L = |grad phi|_A^p + (p-1) (phi/Phi)^p |grad Phi|_A^p
    - p (phi/Phi)^(p-1) |grad Phi|_A^(p-2) grad Phi . A grad phi``,
    with cell averages standing for ``phi`` and ``Phi``.

    :raises DomainError: If ``Phi`` has a nonpositive average on a cell
        touching the interior, or ``phi`` is negative.
    """
    p = problem.p
    geo = problem.geometry
    phi_v = _values(problem, phi)
    Phi_v = _values(problem, Phi)
    if np.any(phi_v < 0):
        raise DomainError("picone_lagrangian expects a nonnegative phi")
    grads, a_grads, t_phi, m_phi = cell_terms(problem, phi_v)
    grads_P, _, t_P, m_P = cell_terms(problem, Phi_v)
    touching = (geo.incidence @ geo.interior_mask.astype(np.int64)) > 0
    if np.any(touching & (m_P <= 0)):
        raise DomainError("Phi must be positive on every cell touching the interior")

    ok = m_P > 0
    ratio = np.divide(m_phi, m_P, out=np.zeros_like(m_phi), where=ok)
    b = np.sqrt(t_P)
    dot = np.sum(grads_P * a_grads, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = np.where(b > 0, p * ratio ** (p - 1.0) * b ** (p - 2.0) * dot, 0.0)
    values = t_phi ** (0.5 * p) + (p - 1.0) * ratio ** p * b ** p - cross
    return ScalarField(geo, values, "cell")


def random_test_fields(geometry: Geometry, count: int, rng: np.random.Generator,
                       support=None, smoothing: int = 4, signed: bool = False) -> np.ndarray:
    """
    Smoothed random nodal fields vanishing off ``support``.

    :param support: Boolean node mask of free nodes; defaults to the interior.
    :param smoothing: Number of node-cell-node averaging sweeps.
    :param signed: Draw from ``[-1, 1]`` instead of ``[0, 1]``.
    :return: Array of shape ``(count, n_nodes)``.
    """
    free = geometry.interior_mask if support is None else np.asarray(support, dtype=bool)
    fields = rng.random((count, geometry.n_nodes))
    if signed:
        fields = 2.0 * fields - 1.0
    fields[:, ~free] = 0.0
    if smoothing:
        degree = np.asarray(geometry.incidence.sum(axis=0)).ravel()
        smoother = sp.diags(1.0 / degree) @ geometry.incidence.T @ geometry.avg_operator
        for _ in range(smoothing):
            fields = (smoother @ fields.T).T
            fields[:, ~free] = 0.0
    return fields


def nonnegativity_screen(problem: Problem, trials: int = 1000, seed: int = 0) -> float:
    """
    Smallest normalised energy ``Q(phi) / sum w (|grad phi|_A^p + |V| |phi|^p)``
    over random signed test fields; negative values refute ``Q >= 0``.
    """
    rng = np.random.default_rng(seed)
    fields = random_test_fields(problem.geometry, trials, rng, signed=True)
    abs_V = np.abs(problem.V.values)
    worst = math.inf
    for values in fields:
        scale = q_value(problem, values, potential=abs_V)
        if scale <= 0:
            continue
        worst = min(worst, q_value(problem, values) / scale)
    logger.debug(f"Nonnegativity screen over {trials} fields: min normalised energy {worst:.3e}")
    return worst


def _diameter(points):
    lo, hi = points.min(axis=0), points.max(axis=0)
    return float(np.sqrt(np.sum((hi - lo) ** 2)))


def morrey_norm(f: ScalarField, omega: SubsetMask, q: float, p: float, radii_count: int = 32) -> float:
    """
    Finite surrogate of the Morrey norm of ``f`` on ``omega``.

    ``sup m_q(r) int_{omega cap B_r(y)} |f|`` over all nodes ``y`` of omega and
    ``radii_count`` log-spaced radii from h to diam(omega), where
    ``m_q(r) = r^(-N/q')`` and, when ``p == N``, the logarithmic modulus
    ``log(diam/r)^(q/N')``. diam(omega) is the bounding-box diagonal of its nodes.

    :raises DomainError: If ``omega`` is empty.
    """
    if q < 1:
        raise ConfigurationError("Morrey exponent q must be at least 1", [("q", None, f"got {q}")])
    geo = f.geometry
    omega.geometry.check_same(geo)
    if omega.is_empty:
        raise DomainError("Morrey norm over an empty set")
    N = geo.dim
    cells_in = omega.cells()
    masses = geo.cell_measures * np.abs(f.on_cells())
    masses = masses[cells_in]
    mids = geo.cell_midpoints[cells_in]
    if not np.any(masses > 0):
        return 0.0

    centers = geo.node_coords[omega.flags]
    diam = max(_diameter(centers), geo.spacing)
    radii = np.geomspace(geo.spacing, diam, radii_count)
    if math.isclose(p, N):
        exponent = 0.0 if N == 1 else q * (N - 1.0) / N
        with np.errstate(divide="ignore"):
            modulus = np.log(diam / radii) ** exponent if exponent else np.ones_like(radii)
        logger.info("Morrey norm uses the logarithmic modulus (p == N)")
    else:
        inv_qprime = 1.0 - 1.0 / q
        modulus = radii ** (-N * inv_qprime)

    best = 0.0
    for y in centers:
        dist = np.sqrt(np.sum((mids - y) ** 2, axis=1))
        order = np.argsort(dist, kind="stable")
        cumulative = np.cumsum(masses[order])
        counts = np.searchsorted(dist[order], radii * (1.0 + 1e-12), side="right")
        inside = np.where(counts > 0, cumulative[np.maximum(counts - 1, 0)], 0.0)
        best = max(best, float(np.max(modulus * inside)))
    return best


@dataclass
class MorreyAdamsFit:
    """Empirical constants of the Morrey-Adams inequality."""

    table: list
    exponent: float
    prefactor: float
    morrey_norm: float

    def to_dict(self):
        return {
            "table": [{"delta": d, "K": k} for d, k in self.table],
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "morrey_norm": self.morrey_norm,
        }


def morrey_adams_fit(f: ScalarField, omega: SubsetMask, p: float, q: float,
                     deltas: Sequence[float], trials: int, seed: int = 0) -> MorreyAdamsFit:
    """
    Smallest ``K(delta)`` with ``int |f||phi|^p <= delta int |grad phi|^p +
    K(delta) int |phi|^p`` over ``trials`` random fields supported in omega.

    The same fields are used for every delta, so ``K`` is nonincreasing in
    delta. ``prefactor`` is the smallest ``C`` with ``K(delta) <= C
    delta^(-N/(pq-N)) ||f||^(pq/(pq-N))`` on the grid.

    :raises ConfigurationError: If ``p q <= N`` or the deltas/trials are invalid.
    """
    geo = f.geometry
    N = geo.dim
    if p * q <= N:
        raise ConfigurationError("Morrey-Adams needs p q > N",
                                 [("q", None, f"p={p}, q={q}, N={N}")])
    if trials < 1 or any(d <= 0 for d in deltas):
        raise ConfigurationError("Morrey-Adams needs positive deltas and trials >= 1",
                                 [("deltas", None, f"{list(deltas)}, trials={trials}")])
    problem = Problem.simple(geo, p)
    rng = np.random.default_rng(seed)
    fields = random_test_fields(geo, trials, rng, support=omega.free_nodes())
    cells_in = omega.cells()
    f_cells = np.where(cells_in, np.abs(f.on_cells()), 0.0)
    ones = np.where(cells_in, 1.0, 0.0)

    stats = []
    for values in fields:
        lhs = weight_value(problem, values, f_cells)
        grad = q_value(problem, values)
        mass = weight_value(problem, values, ones)
        if mass > 0:
            stats.append((lhs, grad, mass))

    table = []
    for delta in deltas:
        k = 0.0
        for lhs, grad, mass in stats:
            k = max(k, (lhs - delta * grad) / mass)
        table.append((float(delta), k))

    exponent = N / (p * q - N)
    norm = morrey_norm(f, omega, q, p)
    prefactor = 0.0
    if norm > 0:
        scale = norm ** (p * q / (p * q - N))
        prefactor = max(k * d ** exponent for d, k in table) / scale
    return MorreyAdamsFit(table=table, exponent=exponent, prefactor=prefactor, morrey_norm=norm)
