"""
Scenario files.

A scenario is a YAML document describing one problem and the tasks to run on
it. Loading validates the whole document up front and reports every problem
with the line of the offending key.
"""

from __future__ import annotations

import copy
import hashlib
import logging
import numbers
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from hardylab.energy import CoefficientA, Problem, ScalarField
from hardylab.errors import ConfigurationError, DomainError
from hardylab.expressions import compile_expression
from hardylab.geometry import (
    Geometry,
    SubsetMask,
    build_geometry,
    exhaustion,
    mask_from_descriptor,
    set_family,
)
from hardylab.solvers import SolverOptions

logger = logging.getLogger("hardylab")

# task -> (required options, optional options)
TASK_OPTIONS: Dict[str, tuple] = {
    "capacity": (("F",), ("domain", "feasible_class")),
    "capacity-decay": (("F", "exhaustion"), ()),
    "hardy-norm": (("family",), ()),
    "best-constant": ((), ("domain",)),
    "sandwich": (("family",), ()),
    "criticality": (("F", "exhaustion"), ()),
    "spectral-profile": (("exhaustion", "centers"), ("radii", "gap_tol")),
    "attainment": (("exhaustion", "centers"), ("radii", "gap_tol")),
    "combine-weights": (("g0",), ("epsilon", "epsilon_factor")),
    "morrey": (("q",), ("f", "omega", "radii_count")),
    "morrey-adams": (("q", "deltas"), ("f", "omega", "trials")),
    "oracle": (("name", "params"), ()),
    "embedding-check": (("alpha", "beta", "r", "sets"), ()),
    "kp-check": (("K1", "exhaustion"), ()),
    "ground-state": ((), ("reference",)),
    "compactness": (("centers", "exhaustion"), ("radii",)),
    "isocapacitary": (("family",), ()),
}

STUDY_MODELS = ("power", "log")

SCENARIO_SCHEMA = {
    "name": {"type": "string", "required": True},
    "seed": {"type": "integer", "default": 0},
    "geometry": {"type": "mapping", "required": "unless every task is oracle",
                 "keys": ["kind", "bounds", "resolution", "dim", "exclude_origin"]},
    "p": {"type": "number", "required": "unless every task is oracle", "constraint": "p > 1"},
    "A": {"type": "identity | expression | {scalar: expression} | {matrix: [[e, e], [e, e]]}",
          "default": "identity"},
    "V": {"type": "expression | number", "default": 0},
    "g": {"type": "expression | number", "default": 0},
    "u": {"type": "expression | number", "default": None},
    "task": {"type": "string", "choices": sorted(TASK_OPTIONS)},
    "options": {"type": "mapping", "per_task": {k: {"required": list(v[0]), "optional": list(v[1])}
                                                 for k, v in TASK_OPTIONS.items()}},
    "tasks": {"type": "list of {task, options, name}"},
    "solver": {"type": "mapping", "keys": sorted(SolverOptions.__dataclass_fields__)},
    "study": {"type": "mapping", "keys": ["resolutions", "model", "task"]},
    "declared_assumptions": {"type": "list of strings", "default": []},
}

TOP_LEVEL_KEYS = tuple(SCENARIO_SCHEMA)


@dataclass
class TaskSpec:
    task: str
    options: dict = field(default_factory=dict)
    name: Optional[str] = None

    @property
    def label(self):
        return self.name or self.task


@dataclass
class Scenario:
    """
    A validated scenario.

    Attributes:
        name (str): Base name of report files.
        seed (int): Seed for every randomized step.
        geometry (dict): Geometry descriptor, ``None`` for oracle-only scenarios.
        tasks (list): :class:`TaskSpec` entries in file order.
        solver (SolverOptions): Solver configuration.
        config_hash (str): sha256 of the source bytes.
    """

    name: str
    seed: int
    geometry: Optional[dict]
    p: Optional[float]
    A: Any
    V: Any
    g: Any
    u: Any
    tasks: List[TaskSpec]
    solver: SolverOptions
    study: dict = field(default_factory=dict)
    declared_assumptions: List[str] = field(default_factory=list)
    source: str = "<string>"
    config_hash: str = ""
    lines: Dict[str, int] = field(default_factory=dict)

    def with_resolution(self, resolution):
        geometry = copy.deepcopy(self.geometry)
        geometry["resolution"] = resolution
        return replace(self, geometry=geometry)

    def provenance(self):
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "solver": self.solver.to_dict(),
            "declared_assumptions": list(self.declared_assumptions),
        }


def _line_index(node, prefix="", index=None):
    index = {} if index is None else index
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            index[path] = key_node.start_mark.line + 1
            _line_index(value_node, path, index)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            index[path] = item.start_mark.line + 1
            _line_index(item, path, index)
    return index


def _is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def load_scenario(path) -> Scenario:
    """
    Read and validate a scenario file.

    :raises ConfigurationError: With one diagnostic per problem found.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigurationError(f"cannot read scenario {path}", [("config", None, str(e))])
    return parse_scenario(raw.decode("utf-8"), source=str(path), raw=raw)


def parse_scenario(text: str, source: str = "<string>", raw: Optional[bytes] = None) -> Scenario:
    raw = text.encode("utf-8") if raw is None else raw
    try:
        data = yaml.safe_load(text)
        lines = _line_index(yaml.compose(text))
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigurationError(f"{source} is not valid YAML",
                                 [("config", mark.line + 1 if mark else None, str(e))])
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source} must contain a mapping", [("config", 1, "expected key: value pairs")])

    problems = []

    def problem(path, message):
        line = lines.get(path)
        if line is None and "." in path:
            line = lines.get(path.rsplit(".", 1)[0])
        problems.append((path, line, message))

    for key in data:
        if key not in TOP_LEVEL_KEYS:
            problem(str(key), "unknown key")

    name = data.get("name")
    if not isinstance(name, str) or not name.strip():
        problem("name", "missing or empty")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        problem("seed", f"expected an integer, got {seed!r}")
        seed = 0

    tasks = _parse_tasks(data, problem)
    oracle_only = bool(tasks) and all(t.task == "oracle" for t in tasks)

    geometry = data.get("geometry")
    if geometry is None:
        if not oracle_only:
            problem("geometry", "missing")
    elif not isinstance(geometry, dict):
        problem("geometry", "expected a mapping")
        geometry = None
    else:
        try:
            build_geometry(geometry)
        except ConfigurationError as e:
            for path, _, message in e.diagnostics or [("geometry", None, str(e))]:
                problem(path, message)

    p = data.get("p")
    if p is None:
        if not oracle_only:
            problem("p", "missing")
    elif not _is_number(p) or not p > 1:
        problem("p", f"expected a number > 1, got {p!r}")
        p = None

    N = _ambient_dim(geometry)
    for key in ("V", "g", "u"):
        value = data.get(key)
        if value is None or _is_number(value):
            continue
        _check_expression(value, key, p, N, problem)
    _check_coefficient(data.get("A"), p, N, problem)

    solver = SolverOptions(seed=seed)
    try:
        solver = SolverOptions.from_mapping(data.get("solver"), seed=seed)
    except ConfigurationError as e:
        for path, _, message in e.diagnostics:
            problem(path, message)

    study = data.get("study") or {}
    if study:
        _check_study(study, problem)

    assumptions = data.get("declared_assumptions") or []
    if not isinstance(assumptions, list) or not all(isinstance(a, str) for a in assumptions):
        problem("declared_assumptions", "expected a list of strings")
        assumptions = []

    if problems:
        raise ConfigurationError(f"{source}: {len(problems)} problem(s) found", problems)

    return Scenario(
        name=name.strip(), seed=seed, geometry=geometry, p=None if p is None else float(p),
        A=data.get("A"), V=data.get("V"), g=data.get("g"), u=data.get("u"), tasks=tasks,
        solver=solver, study=study, declared_assumptions=assumptions, source=source,
        config_hash=hashlib.sha256(raw).hexdigest(), lines=lines,
    )


def _parse_tasks(data, problem):
    if "task" in data and "tasks" in data:
        problem("tasks", "use either task/options or tasks, not both")
        return []
    if "task" in data:
        entries = [({"task": data["task"], "options": data.get("options") or {}}, "")]
    elif "tasks" in data:
        if not isinstance(data["tasks"], list) or not data["tasks"]:
            problem("tasks", "expected a nonempty list")
            return []
        entries = [(entry, f"tasks[{i}].") for i, entry in enumerate(data["tasks"])]
    else:
        problem("task", "missing (give task or tasks)")
        return []

    specs, labels = [], set()
    for entry, prefix in entries:
        if not isinstance(entry, dict):
            problem(prefix.rstrip(".") or "task", "expected a mapping with task and options")
            continue
        task = entry.get("task")
        if task not in TASK_OPTIONS:
            problem(f"{prefix}task", f"unknown task {task!r}; expected one of {', '.join(sorted(TASK_OPTIONS))}")
            continue
        options = entry.get("options") or {}
        if not isinstance(options, dict):
            problem(f"{prefix}options", "expected a mapping")
            continue
        required, optional = TASK_OPTIONS[task]
        for key in required:
            if key not in options:
                problem(f"{prefix}options", f"task {task} needs option {key!r}")
        for key in options:
            if key not in required and key not in optional:
                problem(f"{prefix}options.{key}", f"not an option of task {task}")
        if task == "combine-weights" and ("epsilon" in options) == ("epsilon_factor" in options):
            problem(f"{prefix}options", "combine-weights needs exactly one of epsilon, epsilon_factor")
        spec = TaskSpec(task=task, options=options, name=entry.get("name"))
        if spec.label in labels:
            problem(f"{prefix}name", f"duplicate task label {spec.label!r}")
        labels.add(spec.label)
        specs.append(spec)
    return specs


def _ambient_dim(geometry):
    if not isinstance(geometry, dict):
        return None
    if geometry.get("kind") == "box2d":
        return 2
    if geometry.get("kind") == "radial":
        return geometry.get("dim")
    return 1


def _check_expression(value, path, p, N, problem):
    try:
        compile_expression(value, p=p, N=N)
    except ConfigurationError as e:
        problem(path, "; ".join(message for _, _, message in e.diagnostics) or str(e))


def _check_coefficient(value, p, N, problem):
    if value is None or value == "identity" or _is_number(value):
        return
    if isinstance(value, str):
        _check_expression(value, "A", p, N, problem)
    elif isinstance(value, dict) and set(value) == {"scalar"}:
        _check_expression(value["scalar"], "A.scalar", p, N, problem)
    elif isinstance(value, dict) and set(value) == {"matrix"}:
        rows = value["matrix"]
        if not (isinstance(rows, list) and len(rows) == 2 and all(isinstance(r, list) and len(r) == 2 for r in rows)):
            problem("A.matrix", "expected [[a11, a12], [a21, a22]]")
            return
        for i, row in enumerate(rows):
            for j, entry in enumerate(row):
                if not _is_number(entry):
                    _check_expression(entry, f"A.matrix[{i}][{j}]", p, N, problem)
    else:
        problem("A", "expected identity, an expression, {scalar: ...} or {matrix: ...}")


def _check_study(study, problem):
    if not isinstance(study, dict):
        problem("study", "expected a mapping")
        return
    resolutions = study.get("resolutions")
    if not isinstance(resolutions, list) or len(resolutions) < 3:
        problem("study.resolutions", "need at least 3 resolutions")
    elif not all(_is_number(r) and r > 0 for r in resolutions) or any(
            b <= a for a, b in zip(resolutions, resolutions[1:])):
        problem("study.resolutions", "resolutions must be increasing positive integers")
    if study.get("model", "power") not in STUDY_MODELS:
        problem("study.model", f"expected one of {', '.join(STUDY_MODELS)}")
    for key in study:
        if key not in ("resolutions", "model", "task"):
            problem(f"study.{key}", "unknown key")


def _field_values(value, geometry, p, location, name):
    if value is None:
        return None
    if _is_number(value):
        n = geometry.n_cells if location == "cell" else geometry.n_nodes
        return np.full(n, float(value))
    return compile_expression(value, p=p, N=geometry.dim).evaluate(geometry, location)


def cell_field(value, geometry: Geometry, p, name, default=0.0) -> ScalarField:
    """Evaluate an expression at cell midpoints; non-finite values are rejected."""
    values = _field_values(default if value is None else value, geometry, p, "cell", name)
    bad = ~np.isfinite(values)
    if np.any(bad):
        where = geometry.cell_midpoints[np.argmax(bad)]
        raise DomainError(f"{name} is not finite at the cell midpoint {where.tolist()}")
    return ScalarField(geometry, values, "cell")


def node_field(value, geometry: Geometry, p, name) -> Optional[ScalarField]:
    """
    Evaluate an expression at nodes.

    Non-finite values on boundary nodes are replaced by 0 (test functions
    vanish there); on interior nodes they are an error.
    """
    values = _field_values(value, geometry, p, "node", name)
    if values is None:
        return None
    bad = ~np.isfinite(values)
    if np.any(bad & geometry.interior_mask):
        where = geometry.node_coords[np.argmax(bad & geometry.interior_mask)]
        raise DomainError(f"{name} is not finite at the interior node {where.tolist()}")
    if np.any(bad):
        logger.warning(f"{name} is singular on {int(bad.sum())} boundary node(s); using 0 there")
        values = np.where(bad, 0.0, values)
    return ScalarField(geometry, values, "node")


def coefficient(value, geometry: Geometry, p) -> CoefficientA:
    if value is None or value == "identity":
        return CoefficientA.identity(geometry)
    if _is_number(value) or isinstance(value, str):
        return CoefficientA.scalar(geometry, cell_field(value, geometry, p, "A").values)
    if "scalar" in value:
        return CoefficientA.scalar(geometry, cell_field(value["scalar"], geometry, p, "A").values)
    if geometry.spatial_dim != 2:
        raise ConfigurationError("matrix coefficients need a 2D geometry",
                                 [("A.matrix", None, f"geometry kind is {geometry.kind}")])
    mats = np.empty((geometry.n_cells, 2, 2))
    for i in range(2):
        for j in range(2):
            mats[:, i, j] = cell_field(value["matrix"][i][j], geometry, p, f"A[{i}][{j}]").values
    return CoefficientA(geometry, mats)


def build_problem(scenario: Scenario, geometry: Optional[Geometry] = None) -> Problem:
    """Assemble the :class:`Problem` a scenario describes."""
    geometry = geometry or build_geometry(scenario.geometry)
    p = scenario.p
    return Problem(
        p=p, geometry=geometry, A=coefficient(scenario.A, geometry, p),
        V=cell_field(scenario.V, geometry, p, "V"), g=cell_field(scenario.g, geometry, p, "g"),
        u=node_field(scenario.u, geometry, p, "u"),
    )


def resolve_set(geometry: Geometry, descriptor) -> SubsetMask:
    return mask_from_descriptor(geometry, descriptor)


def resolve_family(geometry: Geometry, value, p=None) -> list:
    """
    A family option: a list of set descriptors, or a strategy mapping. A
    ``sublevel`` field given as an expression is evaluated at the nodes.
    """
    if isinstance(value, list):
        return set_family(geometry, {"strategy": "explicit", "sets": value})
    if not isinstance(value, dict):
        raise ConfigurationError("family must be a list of sets or a strategy mapping",
                                 [("options.family", None, f"got {value!r}")])
    strategy = dict(value)
    field_value = strategy.get("field")
    if isinstance(field_value, str) and field_value != "distance":
        strategy["field"] = node_field(field_value, geometry, p, "family.field").values
    return set_family(geometry, strategy)


def resolve_exhaustion(geometry: Geometry, value) -> list:
    """An exhaustion option: a count, ``{count: k}``, or an explicit list of sets."""
    if isinstance(value, dict) and "count" in value:
        value = value["count"]
    if _is_number(value):
        return exhaustion(geometry, int(value))
    if not isinstance(value, list) or len(value) < 2:
        raise ConfigurationError("exhaustion needs a count or at least 2 sets",
                                 [("options.exhaustion", None, f"got {value!r}")])
    masks = []
    for desc in value:
        m = resolve_set(geometry, desc)
        masks.append(SubsetMask(geometry, m.flags & geometry.interior_mask, m.descriptor))
    for a, b in zip(masks, masks[1:]):
        if not a.issubset(b):
            raise ConfigurationError("exhaustion sets must be nested",
                                     [("options.exhaustion", None, f"{a.descriptor} is not inside {b.descriptor}")])
    return masks


def resolve_point(geometry: Geometry, value):
    point = np.atleast_1d(np.asarray(value, dtype=float))
    if point.shape != (geometry.spatial_dim,):
        raise ConfigurationError("point has the wrong dimension",
                                 [("options", None, f"expected {geometry.spatial_dim} coordinates, got {value!r}")])
    return point
