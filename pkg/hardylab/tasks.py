"""
Task handlers: one function per scenario task, each turning a problem and
its options into a :class:`TaskOutcome`.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from hardylab import oracles
from hardylab.capacity import capacity, capacity_decay, isocapacitary_ratios
from hardylab.energy import ScalarField, morrey_adams_fit, morrey_norm
from hardylab.hardy import (
    best_constant,
    kp_necessary_check,
    mazya_norm,
    sandwich_check,
    weighted_embedding_rows,
)
from hardylab.scenario import (
    TASK_OPTIONS,
    Scenario,
    TaskSpec,
    build_problem,
    cell_field,
    resolve_exhaustion,
    resolve_family,
    resolve_point,
    resolve_set,
)
from hardylab.spectral import (
    attainment_run,
    combine_weights,
    compactness_characterization,
    criticality_test,
    ground_state,
    spectral_profile,
)

logger = logging.getLogger("hardylab")


@dataclass
class TaskOutcome:
    """
    Result of one task.

    Attributes:
        value (float): The headline number, used by studies; ``None`` for verdict-only tasks.
        payload (dict): JSON-ready report section.
        tables (dict): Table name to list of row dicts, written as CSV.
        converged (bool): Whether every solve behind the task converged.
    """

    task: str
    label: str
    value: Optional[float]
    payload: dict
    tables: Dict[str, list] = field(default_factory=dict)
    converged: bool = True

    def to_dict(self):
        return {"task": self.task, "label": self.label, "value": self.value, "converged": self.converged,
                "result": self.payload}


def _u(problem):
    return problem.u or ScalarField.constant(problem.geometry, 1.0)


def _radii(options):
    radii = options.get("radii")
    return None if radii is None else [float(r) for r in radii]


def _points(geometry, values):
    return [resolve_point(geometry, c) for c in values]


def run_capacity(problem, options, scenario):
    geo = problem.geometry
    F = resolve_set(geo, options["F"])
    domain = resolve_set(geo, options["domain"]) if "domain" in options else None
    result = capacity(problem, _u(problem), F, scenario.solver, domain=domain,
                      feasible_class=options.get("feasible_class", "truncated"))
    payload = dict(result.to_dict(), F=F.descriptor)
    if domain is not None:
        payload["domain"] = domain.descriptor
    return result.value, payload, {}, result.converged


def run_capacity_decay(problem, options, scenario):
    geo = problem.geometry
    F = resolve_set(geo, options["F"])
    masks = resolve_exhaustion(geo, options["exhaustion"])
    results = capacity_decay(problem, _u(problem), F, masks, scenario.solver, return_results=True)
    rows = [{"index": k, "set_descriptor": m.descriptor, "capacity": r.value, "converged": r.converged}
            for k, (m, r) in enumerate(zip(masks, results))]
    payload = {"F": F.descriptor, "curve": [r.value for r in results]}
    return results[-1].value, payload, {"decay": rows}, all(r.converged for r in results)


def run_hardy_norm(problem, options, scenario):
    family = resolve_family(problem.geometry, options["family"], problem.p)
    report = mazya_norm(problem, _u(problem), family, scenario.solver)
    converged = all(row["converged"] for row in report.per_set_table)
    return report.mazya_norm, report.to_dict(), {"per_set": report.per_set_table}, converged


def run_best_constant(problem, options, scenario):
    domain = resolve_set(problem.geometry, options["domain"]) if "domain" in options else None
    result = best_constant(problem, scenario.solver, domain=domain)
    payload = dict(result.to_dict(), B=1.0 / result.value)
    return result.value, payload, {}, result.converged


def run_sandwich(problem, options, scenario):
    family = resolve_family(problem.geometry, options["family"], problem.p)
    report = sandwich_check(problem, _u(problem), family, scenario.solver)
    converged = all(row["converged"] for row in report.per_set_table)
    if report.extremal is not None:
        converged = converged and report.extremal.converged
    return report.sandwich_ratio, report.to_dict(), {"per_set": report.per_set_table}, converged


def run_criticality(problem, options, scenario):
    geo = problem.geometry
    F = resolve_set(geo, options["F"])
    masks = resolve_exhaustion(geo, options["exhaustion"])
    verdict = criticality_test(problem, F, masks, scenario.solver, u=_u(problem))
    rows = [{"size": s, "capacity": c, "converged": ok}
            for s, c, ok in zip(verdict.sizes, verdict.curve, verdict.curve_converged)]
    return verdict.curve[-1], verdict.to_dict(), {"decay": rows}, verdict.converged


def _curve_rows(profile):
    rows = []
    for label, curve in profile.local_curves.items():
        flags = profile.local_converged.get(label, [True] * len(curve))
        rows += [{"scope": f"local{label}", "parameter": r, "S_value": s, "converged": ok}
                 for (r, s), ok in zip(curve, flags)]
    infinity = profile.infinity
    if infinity is not None:
        rows += [{"scope": "complement", "parameter": k, "S_value": s, "converged": ok}
                 for k, (s, ok) in enumerate(zip(infinity.complement_curve, infinity.complement_converged))]
        rows += [{"scope": "ball-complement", "parameter": k, "S_value": s, "converged": ok}
                 for k, (s, ok) in enumerate(zip(infinity.ball_curve or [], infinity.ball_converged))]
    return rows


def run_spectral_profile(problem, options, scenario):
    geo = problem.geometry
    profile = spectral_profile(problem, resolve_exhaustion(geo, options["exhaustion"]),
                               _points(geo, options["centers"]), _radii(options), scenario.solver,
                               float(options.get("gap_tol", 0.2)))
    return profile.S_global, profile.to_dict(), {"curves": _curve_rows(profile)}, profile.converged


def run_attainment(problem, options, scenario):
    geo = problem.geometry
    profile = attainment_run(problem, resolve_exhaustion(geo, options["exhaustion"]),
                             _points(geo, options["centers"]), _radii(options), scenario.solver,
                             float(options.get("gap_tol", 0.2)))
    return profile.S_global, profile.to_dict(), {"curves": _curve_rows(profile)}, profile.converged


def run_combine_weights(problem, options, scenario):
    geo = problem.geometry
    g0 = cell_field(options["g0"], geo, problem.p, "g0")
    g = problem.g.with_values(problem.abs_g)
    epsilon = options.get("epsilon")
    converged = True
    if epsilon is None:
        anchor = best_constant(problem.with_weight(g0), scenario.solver)
        base = best_constant(problem.with_weight(g), scenario.solver)
        converged = anchor.converged and base.converged
        epsilon = float(options["epsilon_factor"]) * anchor.value / base.value
    _, report = combine_weights(problem, g0, g, float(epsilon), scenario.solver)
    return report["S_combined"], report, {}, converged and report["converged"]


def _f_field(problem, options):
    if "f" in options:
        return cell_field(options["f"], problem.geometry, problem.p, "f")
    return problem.V


def run_morrey(problem, options, scenario):
    omega = resolve_set(problem.geometry, options.get("omega", "interior"))
    value = morrey_norm(_f_field(problem, options), omega, float(options["q"]), problem.p,
                        int(options.get("radii_count", 32)))
    return value, {"morrey_norm": value, "q": float(options["q"]), "omega": omega.descriptor}, {}, True


def run_morrey_adams(problem, options, scenario):
    omega = resolve_set(problem.geometry, options.get("omega", "interior"))
    fit = morrey_adams_fit(_f_field(problem, options), omega, problem.p, float(options["q"]),
                           [float(d) for d in options["deltas"]], int(options.get("trials", 200)),
                           seed=scenario.seed)
    data = fit.to_dict()
    return fit.prefactor, data, {"morrey_adams": data["table"]}, True


def run_oracle(problem, options, scenario):
    result = oracles.evaluate(options["name"], options["params"])
    return result.value, result.to_dict(), {}, True


def run_embedding_check(problem, options, scenario):
    geo = problem.geometry
    sets = [resolve_set(geo, d) for d in options["sets"]]
    rows = weighted_embedding_rows(_u(problem), float(options["alpha"]), float(options["beta"]),
                                   float(options["r"]), sets, problem.p)
    value = max((row["value"] for row in rows), default=0.0)
    return value, {"sup": value, "sets": rows}, {"embedding": rows}, True


def run_kp_check(problem, options, scenario):
    geo = problem.geometry
    check = kp_necessary_check(problem, _u(problem), resolve_set(geo, options["K1"]),
                               resolve_exhaustion(geo, options["exhaustion"]))
    rows = [{"index": k, "partial": v} for k, v in enumerate(check.partials)]
    return check.partials[-1], check.to_dict(), {"partials": rows}, True


def run_ground_state(problem, options, scenario):
    geo = problem.geometry
    reference = None
    if "reference" in options:
        point = resolve_point(geo, options["reference"])
        inner = np.flatnonzero(geo.interior_mask)
        reference = int(inner[np.argmin(np.sum((geo.node_coords[inner] - point) ** 2, axis=1))])
    result = ground_state(problem, scenario.solver, reference)
    coords = geo.node_coords
    rows = [dict({f"x{k}": float(c) for k, c in enumerate(coords[i])}, phi=float(result.minimizer.values[i]))
            for i in range(geo.n_nodes)]
    return result.value, result.to_dict(), {"ground_state": rows}, result.converged


def run_compactness(problem, options, scenario):
    geo = problem.geometry
    verdict = compactness_characterization(problem, _points(geo, options["centers"]),
                                           resolve_exhaustion(geo, options["exhaustion"]),
                                           _radii(options), scenario.solver)
    return None, verdict, {}, verdict["converged"]


def run_isocapacitary(problem, options, scenario):
    family = resolve_family(problem.geometry, options["family"], problem.p)
    rows = isocapacitary_ratios(problem, family, scenario.solver)
    value = max((row["ratio"] for row in rows), default=math.nan)
    converged = all(row["converged"] for row in rows)
    return value, {"max_ratio": value, "rows": rows}, {"isocapacitary": rows}, converged


TASKS: Dict[str, Callable] = {
    "capacity": run_capacity,
    "capacity-decay": run_capacity_decay,
    "hardy-norm": run_hardy_norm,
    "best-constant": run_best_constant,
    "sandwich": run_sandwich,
    "criticality": run_criticality,
    "spectral-profile": run_spectral_profile,
    "attainment": run_attainment,
    "combine-weights": run_combine_weights,
    "morrey": run_morrey,
    "morrey-adams": run_morrey_adams,
    "oracle": run_oracle,
    "embedding-check": run_embedding_check,
    "kp-check": run_kp_check,
    "ground-state": run_ground_state,
    "compactness": run_compactness,
    "isocapacitary": run_isocapacitary,
}

assert set(TASKS) == set(TASK_OPTIONS)


def run_task(spec: TaskSpec, scenario: Scenario, problem=None) -> TaskOutcome:
    """
    Run one task of a scenario.

    :param problem: Prebuilt problem; built from the scenario when omitted.
    """
    if spec.task != "oracle" and problem is None:
        problem = build_problem(scenario)
    value, payload, tables, converged = TASKS[spec.task](problem, spec.options, scenario)
    return TaskOutcome(task=spec.task, label=spec.label, value=value, payload=payload,
                       tables=tables, converged=converged)
