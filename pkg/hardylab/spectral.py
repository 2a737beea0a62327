"""
Localized best constants and the spectral-gap diagnostics built on them.

Constants restricted to smaller domains are best-constant solves with
Dirichlet data on the edge of the restricting mask. A weight that vanishes on
the restricted domain makes the constraint unreachable and the constant is
reported as ``math.inf``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from hardylab.capacity import VariationalResult, capacity_decay
from hardylab.energy import Problem, ScalarField, q_gradient, q_value, weight_value
from hardylab.errors import DomainError, HypothesisViolation, ResolutionError
from hardylab.geometry import SubsetMask, annulus_mask, ball_mask
from hardylab.hardy import best_constant
from hardylab.solvers import SolverOptions

logger = logging.getLogger("hardylab")

LOCAL_SLOPE_DIVERGING = -0.5
TAIL_GROWTH_DIVERGING = 1.2
CRITICAL_LIMIT_FRACTION = 0.05
SATURATION_TOLERANCE = 0.01
MIN_SIZE_GROWTH = 1.5
DEFAULT_GAP_TOLERANCE = 0.2
MIN_BALL_CELLS = 4


def center_label(center):
    c = np.atleast_1d(np.asarray(center, dtype=float))
    return "(" + ", ".join(f"{v:g}" for v in c) + ")"


def _restricted_constant(problem, mask, opts):
    """``(S, converged)`` on the free nodes of ``mask``."""
    try:
        result = best_constant(problem, opts, domain=mask)
    except DomainError as e:
        if "unreachable" not in str(e):
            raise
        return math.inf, True
    return result.value, result.converged


def default_radii(geometry, count=6):
    """Geometric radii from half the diameter down to just above ``4h``."""
    r_max = 0.5 * geometry.diameter
    r_min = MIN_BALL_CELLS * geometry.spacing * 1.05
    if r_min >= r_max:
        raise ResolutionError("grid too coarse for a local constant curve")
    return list(np.geomspace(r_max, r_min, count))


def local_constant(problem: Problem, center, radii: Sequence[float],
                   opts: Optional[SolverOptions] = None, return_flags: bool = False):
    """
    Best constant on ``Omega & B_r(center)`` for each radius.

    :param radii: Decreasing radii, the smallest at least ``4h``.
    :return: List of ``(radius, S)`` pairs; with ``return_flags`` also the
        list of per-radius convergence flags.
    :raises ResolutionError: If a ball is smaller than 4 cells or has no free node.
    """
    geo = problem.geometry
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise DomainError("radii must be strictly decreasing")
    h = geo.spacing
    curve, flags = [], []
    for r in radii:
        if r < MIN_BALL_CELLS * h * (1 - 1e-9):
            raise ResolutionError(f"ball of radius {r:g} is smaller than {MIN_BALL_CELLS} cells (h={h:g})")
        mask = ball_mask(geo, center, r)
        if not mask.free_nodes().any():
            raise ResolutionError(f"{mask.descriptor} has no free nodes")
        value, converged = _restricted_constant(problem, mask, opts)
        curve.append((r, value))
        flags.append(converged)
    for (r1, s1), (r2, s2) in zip(curve, curve[1:]):
        if s2 < s1 * (1 - 1e-6):
            logger.warning(f"Local constant decreased from {s1:.6g} (r={r1:g}) to {s2:.6g} (r={r2:g})")
    return (curve, flags) if return_flags else curve


def classify_local_trend(curve):
    """
    ``(trend, estimate)`` for a local curve.

    ``diverging`` when an entry is infinite or the log-log slope of S against
    r is at most -0.5; otherwise ``saturated`` with the smallest entry as the
    estimate of the limit.
    """
    values = np.array([s for _, s in curve], dtype=float)
    if np.any(np.isinf(values)):
        return "diverging", math.inf
    radii = np.array([r for r, _ in curve], dtype=float)
    if len(curve) < 2:
        return "saturated", float(values.min())
    slope = float(np.polyfit(np.log(radii), np.log(values), 1)[0])
    if slope <= LOCAL_SLOPE_DIVERGING:
        return "diverging", math.inf
    return "saturated", float(values.min())


def classify_tail_trend(values):
    if any(math.isinf(v) for v in values):
        return "increasing", math.inf
    if len(values) >= 2 and values[-1] >= TAIL_GROWTH_DIVERGING * values[-2]:
        return "increasing", math.inf
    return "saturated", float(values[-1])


@dataclass
class InfinityCurves:
    """
    Constants on the complements of an exhaustion.

    ``S_infty`` is the ball-complement variant; it is ``None`` where ball
    complements are not available and the exhaustion variant stands in.
    """

    S_overline_infty: float
    S_infty: Optional[float]
    trend: str
    complement_curve: List[float]
    ball_curve: Optional[List[float]] = None
    notes: List[str] = field(default_factory=list)
    complement_converged: List[bool] = field(default_factory=list)
    ball_converged: List[bool] = field(default_factory=list)

    @property
    def S_infty_effective(self):
        return self.S_overline_infty if self.S_infty is None else self.S_infty

    @property
    def converged(self):
        return all(self.complement_converged) and all(self.ball_converged)

    def to_dict(self):
        return {
            "S_overline_infty": self.S_overline_infty,
            "S_infty": self.S_infty,
            "trend": self.trend,
            "complement_curve": list(self.complement_curve),
            "ball_curve": None if self.ball_curve is None else list(self.ball_curve),
            "converged": self.converged,
            "notes": list(self.notes),
        }


def constant_at_infinity(problem: Problem, exhaustion: Sequence[SubsetMask],
                         opts: Optional[SolverOptions] = None) -> InfinityCurves:
    """
    Best constants on ``Omega \\ Omega_i`` and, on radial grids, on the
    complements of balls.

    :raises ResolutionError: If a complement has fewer than 3 free nodes or
        the exhaustion has fewer than 3 elements.
    """
    if len(exhaustion) < 3:
        raise ResolutionError("constant_at_infinity needs an exhaustion with at least 3 elements")
    geo = problem.geometry
    complements, complement_flags = [], []
    for omega in exhaustion:
        mask = SubsetMask(geo, ~omega.flags, f"complement of {omega.descriptor}")
        if mask.free_nodes().sum() < 3:
            raise ResolutionError(f"{mask.descriptor} has too few interior nodes")
        value, converged = _restricted_constant(problem, mask, opts)
        complements.append(value)
        complement_flags.append(converged)
    _check_monotone(complements, "complement")
    trend, estimate = classify_tail_trend(complements)

    notes, ball_curve, ball_flags, S_infty = [], None, [], None
    if geo.kind == "radial":
        ball_curve = []
        for omega in exhaustion:
            rho = float(np.max(geo.node_radius[omega.flags]))
            outside = annulus_mask(geo, rho, math.inf)
            if outside.free_nodes().sum() < 3:
                raise ResolutionError(f"{outside.descriptor} has too few interior nodes")
            value, converged = _restricted_constant(problem, outside, opts)
            ball_curve.append(value)
            ball_flags.append(converged)
        _check_monotone(ball_curve, "ball-complement")
        S_infty = classify_tail_trend(ball_curve)[1]
    else:
        notes.append("ball complements unavailable on this geometry; S_infty uses the exhaustion complements")
    return InfinityCurves(S_overline_infty=estimate, S_infty=S_infty, trend=trend,
                          complement_curve=complements, ball_curve=ball_curve, notes=notes,
                          complement_converged=complement_flags, ball_converged=ball_flags)


def _check_monotone(values, name):
    for a, b in zip(values, values[1:]):
        if b < a * (1 - 1e-6):
            logger.warning(f"{name} constants decreased from {a:.6g} to {b:.6g}")


@dataclass
class CriticalityVerdict:
    verdict: str
    curve: List[float]
    sizes: List[float]
    extrapolated_limit: Optional[float] = None
    model: Optional[str] = None
    curve_converged: List[bool] = field(default_factory=list)

    @property
    def converged(self):
        return all(self.curve_converged)

    def to_dict(self):
        return {"verdict": self.verdict, "curve": list(self.curve), "sizes": list(self.sizes),
                "extrapolated_limit": self.extrapolated_limit, "model": self.model,
                "converged": self.converged}


def _log_limit(sizes, values):
    """Least-squares ``L + c / ln(size)``."""
    x = 1.0 / np.log(sizes)
    design = np.column_stack([np.ones_like(x), x])
    (L, c), *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(L), float(c)


def _power_limit(sizes, values):
    def model(s, L, c, a):
        return L + c * s ** (-a)

    p0 = [values[-1], values[0] - values[-1], 1.0]
    try:
        params, _ = curve_fit(model, sizes, values, p0=p0,
                              bounds=([-np.inf, -np.inf, 1e-3], [np.inf, np.inf, 10.0]), maxfev=10000)
    except (RuntimeError, ValueError) as e:
        logger.debug(f"Power-law fit failed: {e}")
        return None
    return float(params[0])


def _geometric_tail_limit(values):
    """
    Limit of a decreasing curve whose last two decrements shrink by a
    constant ratio (Aitken extrapolation of the last three values).
    """
    if len(values) < 3:
        return None
    d1 = float(values[-2] - values[-3])
    d2 = float(values[-1] - values[-2])
    if not (d1 < 0 and d2 < 0 and d2 > d1):
        return None
    q = d2 / d1
    return float(values[-1] + d2 * q / (1.0 - q))


def criticality_test(problem: Problem, F: SubsetMask, exhaustion: Sequence[SubsetMask],
                     opts: Optional[SolverOptions] = None, u: Optional[ScalarField] = None) -> CriticalityVerdict:
    """
    Classify the capacity decay of F along an exhaustion.

    Sizes are ``(|Omega_k| / |F|)^(1/N)``. ``critical-suspected`` when the
    exhaustion is still growing geometrically (last size ratio at least 1.5)
    and a decreasing fit ``L + c / ln(size)`` (or, with at least 4 points,
    ``L + c size^(-a)``) extrapolates to at most 5% of the first value.
    ``subcritical-suspected`` when the last two values agree within 1%, or
    when the geometric tail of the curve extrapolates to a limit above 5% of
    the first value that the last value is within 1% of.
    """
    geo = problem.geometry
    u = u or problem.u or ScalarField.constant(geo, 1.0)
    results = capacity_decay(problem, u, F, exhaustion, opts, return_results=True)
    curve = [r.value for r in results]
    flags = [r.converged for r in results]
    measure = F.measure()
    if measure > 0:
        sizes = [(omega.measure() / measure) ** (1.0 / geo.dim) for omega in exhaustion]
    else:
        sizes = [2.0 ** (k + 1) for k in range(len(exhaustion))]
    values = np.asarray(curve, dtype=float)
    s = np.asarray(sizes, dtype=float)
    first = float(values[0])

    def verdict(name, limit=None, model=None):
        return CriticalityVerdict(name, list(curve), sizes, limit, model, flags)

    growing = len(s) >= 2 and s[-1] >= MIN_SIZE_GROWTH * s[-2]
    if growing and len(values) >= 3 and first > 0 and values[-1] < values[0] and np.all(s > 1):
        L, c = _log_limit(s, values)
        if c > 0 and L <= CRITICAL_LIMIT_FRACTION * first:
            return verdict("critical-suspected", max(L, 0.0), "log")
        if len(values) >= 4:
            L = _power_limit(s, values)
            if L is not None and L <= CRITICAL_LIMIT_FRACTION * first:
                return verdict("critical-suspected", max(L, 0.0), "power")

    if len(values) >= 2 and abs(values[-1] - values[-2]) <= SATURATION_TOLERANCE * abs(values[-1]):
        return verdict("subcritical-suspected", float(values[-1]), "saturation")
    L = _geometric_tail_limit(values)
    if L is not None and L > CRITICAL_LIMIT_FRACTION * first and values[-1] - L <= SATURATION_TOLERANCE * L:
        return verdict("subcritical-suspected", L, "geometric")
    return verdict("undetermined")


def ground_state(problem: Problem, opts: Optional[SolverOptions] = None,
                 reference: Optional[int] = None) -> VariationalResult:
    """
    Minimizer of ``Q`` at the shifted potential ``V - S_g |g|``, made
    nonnegative and normalized to 1 at ``reference`` (default: the largest
    interior value).

    The residual is the Euler-Lagrange residual of the returned field at the
    shifted potential, relative to the gradient of Q; the run counts as
    converged when the extremal solve converged and that residual is within
    ``tol_grad``.
    """
    opts = opts or SolverOptions()
    extremal = best_constant(problem, opts)
    geo = problem.geometry
    values = extremal.minimizer.values
    warnings = list(extremal.warnings)
    peak = float(np.max(np.abs(values)))
    if np.min(values[geo.interior_mask]) < -1e-8 * peak:
        warnings.append("extremal changes sign; returning its absolute value")
        logger.warning(warnings[-1])
    values = np.abs(values)
    if reference is None:
        inner = np.flatnonzero(geo.interior_mask)
        reference = int(inner[np.argmax(values[inner])])
    elif not geo.interior_mask[reference]:
        raise DomainError(f"reference node {reference} is not an interior node")
    if values[reference] <= 0:
        raise DomainError(f"ground state vanishes at reference node {reference}")
    values = values / values[reference]
    shifted = problem.shifted(extremal.value)
    inner = geo.interior_mask
    scale = float(np.linalg.norm(q_gradient(problem, values)[inner]))
    residual = float(np.linalg.norm(q_gradient(shifted, values)[inner])) / max(scale, 1e-300)
    converged = extremal.converged and residual <= opts.tol_grad
    if extremal.converged and not converged:
        logger.warning(f"Ground state Euler-Lagrange residual {residual:.3e} exceeds tol_grad={opts.tol_grad:g}")
    return VariationalResult(
        value=q_value(shifted, values), minimizer=ScalarField(geo, values),
        iterations=extremal.iterations, residual=residual, converged=converged,
        stop_reason=extremal.stop_reason, warnings=warnings, constraint=extremal.value,
    )


@dataclass
class SpectralProfile:
    """
    Global, local and at-infinity constants of one weight.

    Attributes:
        S_global (float): Best constant on the whole domain.
        local_curves (dict): Center label to ``[(radius, S), ...]``.
        local_trends (dict): Center label to ``diverging`` or ``saturated``.
        S_star (float): Smallest local limit estimate, ``inf`` if all diverge.
        S_infty (float): Ball-complement estimate (or the exhaustion one).
        S_overline_infty (float): Exhaustion-complement estimate.
        gap_verdict (bool): ``S_global < (1 - gap_tol) min(S_star, S_infty)``.
        sigma_set (list): Centers whose local curve stays bounded.
        global_converged (bool): Whether the whole-domain solve converged.
        local_converged (dict): Center label to per-radius convergence flags.
    """

    S_global: float
    local_curves: Dict[str, list]
    local_trends: Dict[str, str]
    S_star: float
    S_infty: float
    S_overline_infty: float
    gap_verdict: bool
    sigma_set: List[str]
    infinity: Optional[InfinityCurves] = None
    extremal: Optional[VariationalResult] = None
    notes: List[str] = field(default_factory=list)
    global_converged: bool = True
    local_converged: Dict[str, List[bool]] = field(default_factory=dict)

    @property
    def converged(self):
        flags = [self.global_converged] + [f for v in self.local_converged.values() for f in v]
        if self.infinity is not None:
            flags.append(self.infinity.converged)
        if self.extremal is not None:
            flags.append(self.extremal.converged)
        return all(flags)

    def to_dict(self):
        data = {
            "S_global": self.S_global,
            "local_curves": {k: [list(pair) for pair in v] for k, v in self.local_curves.items()},
            "local_trends": dict(self.local_trends),
            "S_star": self.S_star,
            "S_infty": self.S_infty,
            "S_overline_infty": self.S_overline_infty,
            "gap_verdict": self.gap_verdict,
            "sigma_set": list(self.sigma_set),
            "converged": self.converged,
            "notes": list(self.notes),
        }
        if self.infinity is not None:
            data["infinity"] = self.infinity.to_dict()
        if self.extremal is not None:
            data["extremal"] = self.extremal.to_dict()
        return data


def spectral_profile(problem: Problem, exhaustion: Sequence[SubsetMask], centers: Sequence,
                     radii: Optional[Sequence[float]] = None, opts: Optional[SolverOptions] = None,
                     gap_tol: float = DEFAULT_GAP_TOLERANCE) -> SpectralProfile:
    if not centers:
        raise DomainError("at least one center is required")
    geo = problem.geometry
    radii = list(radii) if radii is not None else default_radii(geo)
    whole = best_constant(problem, opts)
    S_global = whole.value

    curves, flags, trends, sigma, limits = {}, {}, {}, [], []
    for c in centers:
        label = center_label(c)
        curves[label], flags[label] = local_constant(problem, c, radii, opts, return_flags=True)
        trend, limit = classify_local_trend(curves[label])
        trends[label] = trend
        limits.append(limit)
        if trend == "saturated":
            sigma.append(label)
    S_star = min(limits)

    infinity = constant_at_infinity(problem, exhaustion, opts)
    S_infty = infinity.S_infty_effective
    threshold = min(S_star, S_infty)
    gap = S_global < (1.0 - gap_tol) * threshold
    if S_global > infinity.S_overline_infty * (1 + 1e-6):
        logger.warning(f"S_global {S_global:.6g} exceeds the at-infinity constant {infinity.S_overline_infty:.6g}")
    return SpectralProfile(S_global=S_global, local_curves=curves, local_trends=trends, S_star=S_star,
                           S_infty=S_infty, S_overline_infty=infinity.S_overline_infty,
                           gap_verdict=gap, sigma_set=sigma, infinity=infinity, notes=list(infinity.notes),
                           global_converged=whole.converged, local_converged=flags)


def attainment_run(problem: Problem, exhaustion: Sequence[SubsetMask], centers: Sequence,
                   radii: Optional[Sequence[float]] = None, opts: Optional[SolverOptions] = None,
                   gap_tol: float = DEFAULT_GAP_TOLERANCE) -> SpectralProfile:
    """
    Spectral profile plus, when a gap is detected, the candidate extremal as
    a numerical witness of attainment.
    """
    profile = spectral_profile(problem, exhaustion, centers, radii, opts, gap_tol)
    if profile.gap_verdict:
        profile.extremal = best_constant(problem, opts)
        profile.notes.append(f"gap detected: extremal residual {profile.extremal.residual:.3e}, "
                             f"constraint {profile.extremal.constraint:.6g}")
    else:
        profile.notes.append("no gap detected: attainment not predicted")
    if math.isclose(profile.S_global, profile.S_overline_infty, rel_tol=gap_tol):
        profile.notes.append("S_global matches the at-infinity constant: the weight is not in the "
                             "closure of compactly supported weights")
    logger.info(f"Attainment run: S={profile.S_global:.6g}, S*={profile.S_star:.6g}, "
                f"S_inf={profile.S_infty:.6g}, gap={profile.gap_verdict}")
    return profile


def combine_weights(problem: Problem, g0: ScalarField, g: ScalarField, epsilon: float,
                    opts: Optional[SolverOptions] = None):
    """
    Problem with weight ``g + epsilon g0`` and the comparison of ``epsilon``
    with the threshold ``S_{g0} / S_g``.

    :raises DomainError: If a weight is negative or identically zero, or
        ``epsilon`` is not positive.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    for name, w in (("g0", g0), ("g", g)):
        if np.any(w.values < 0):
            raise DomainError(f"{name} must be nonnegative")
        if not np.any(w.values > 0):
            raise DomainError(f"{name} is identically zero")

    base = best_constant(problem.with_weight(g), opts)
    anchor = best_constant(problem.with_weight(g0), opts)
    threshold = anchor.value / base.value
    combined = problem.with_weight(g + g0 * epsilon)
    result = best_constant(combined, opts)

    phi0 = anchor.minimizer.values
    upper = q_value(problem, phi0) / (weight_value(problem, phi0, g.values)
                                      + epsilon * weight_value(problem, phi0, g0.values))
    report = {
        "epsilon": epsilon,
        "threshold": threshold,
        "exceeds_threshold": epsilon > threshold,
        "S_g": base.value,
        "S_g0": anchor.value,
        "S_combined": result.value,
        "upper_bound": upper,
        "strict_decrease": result.value < base.value * (1 - 1e-6),
        "converged": base.converged and anchor.converged and result.converged,
    }
    if report["exceeds_threshold"] and not report["strict_decrease"]:
        logger.warning(f"epsilon above threshold {threshold:.6g} but S did not decrease "
                       f"({result.value:.6g} vs {base.value:.6g})")
    return combined, report


def compactness_characterization(problem: Problem, centers: Sequence, exhaustion: Sequence[SubsetMask],
                                 radii: Optional[Sequence[float]] = None,
                                 opts: Optional[SolverOptions] = None) -> dict:
    """
    ``compactness-predicted`` iff every local curve and the at-infinity curve diverge.

    :raises HypothesisViolation: If V is negative somewhere.
    """
    geo = problem.geometry
    touching = (geo.incidence @ geo.interior_mask.astype(np.int64)) > 0
    if np.any(problem.V.values[touching] < 0):
        raise HypothesisViolation("compactness characterization needs V >= 0")
    radii = list(radii) if radii is not None else default_radii(geo)
    offenders, trends, converged = [], {}, True
    for c in centers:
        label = center_label(c)
        curve, flags = local_constant(problem, c, radii, opts, return_flags=True)
        converged = converged and all(flags)
        trend, _ = classify_local_trend(curve)
        trends[label] = trend
        if trend != "diverging":
            offenders.append(label)
    infinity = constant_at_infinity(problem, exhaustion, opts)
    if infinity.trend != "increasing":
        offenders.append("infinity")
    verdict = "compactness-predicted" if not offenders else "not-predicted"
    return {"verdict": verdict, "offenders": offenders, "local_trends": trends,
            "infinity": infinity.to_dict(), "converged": converged and infinity.converged}
