"""
Refinement studies: rerun a scenario task at increasing resolution and
extrapolate the sequence of values.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from hardylab.errors import ConfigurationError
from hardylab.scenario import STUDY_MODELS, Scenario

logger = logging.getLogger("hardylab")


@dataclass
class Extrapolation:
    """
    Attributes:
        limit (float): Extrapolated value at infinite resolution.
        order (float): Observed order; ``nan`` for the log model or when the
            differences do not shrink.
        model (str): ``power`` or ``log``.
    """

    limit: float
    order: float
    model: str

    def to_dict(self):
        return {"limit": self.limit, "order": self.order, "model": self.model}


def richardson_extrapolate(resolutions: Sequence[float], values: Sequence[float], model="power") -> Extrapolation:
    """
    Extrapolate ``values[k]`` observed at ``resolutions[k]``.

    ``power`` takes the observed order from the last three values,
    ``log`` fits ``L + c / (ln n + b)^2``, the form singular weights
    converge with.

    :raises ConfigurationError: With fewer than 3 points or an unknown model.
    """
    n = np.asarray(resolutions, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(v) < 3 or len(n) != len(v):
        raise ConfigurationError("extrapolation needs at least 3 (resolution, value) pairs",
                                 [("study.resolutions", None, f"got {len(v)}")])
    if model not in STUDY_MODELS:
        raise ConfigurationError(f"unknown extrapolation model {model!r}",
                                 [("study.model", None, f"expected one of {', '.join(STUDY_MODELS)}")])
    if model == "log":
        return _log_extrapolate(n, v)

    d1 = v[-2] - v[-3]
    d2 = v[-1] - v[-2]
    if d2 == 0:
        return Extrapolation(float(v[-1]), math.inf, "power")
    q = d1 / d2
    if not q > 1:
        logger.warning("Differences do not shrink; reporting the finest value")
        return Extrapolation(float(v[-1]), math.nan, "power")
    ratio = n[-1] / n[-2]
    order = math.log(q) / math.log(ratio)
    return Extrapolation(float(v[-1] + d2 / (q - 1.0)), order, "power")


def _log_extrapolate(n, v):
    ln = np.log(n)

    def model(x, L, c, b):
        return L + c / (x + b) ** 2

    b_lo = -0.5 * ln[0]
    p0 = [float(v[-1]) - (float(v[0]) - float(v[-1])), float(v[0] - v[-1]) * ln[0] ** 2, 0.0]
    try:
        params, _ = curve_fit(model, ln, v, p0=p0, bounds=([-np.inf, -np.inf, b_lo], [np.inf, np.inf, 10 * ln[-1]]),
                              maxfev=20000)
        return Extrapolation(float(params[0]), math.nan, "log")
    except (RuntimeError, ValueError) as e:
        logger.warning(f"Log-model fit failed ({e}); using a linear fit in 1/ln(n)^2")
    slope, intercept = np.polyfit(1.0 / ln ** 2, v, 1)
    return Extrapolation(float(intercept), math.nan, "log")


@dataclass
class StudyResult:
    task: str
    rows: List[dict]
    extrapolation: Extrapolation
    monotone: bool
    notes: List[str] = field(default_factory=list)

    def to_dict(self):
        return {"task": self.task, "rows": [dict(r) for r in self.rows],
                "extrapolation": self.extrapolation.to_dict(), "monotone": self.monotone,
                "notes": list(self.notes)}


def convergence_study(scenario: Scenario, resolutions: Optional[Sequence[int]] = None,
                      model: Optional[str] = None, task: Optional[str] = None) -> StudyResult:
    """
    Run one task of ``scenario`` at each resolution.

    :param resolutions: Cells per axis, increasing; defaults to ``study.resolutions``.
    :param model: Extrapolation model; defaults to ``study.model`` or ``power``.
    :param task: Task label; defaults to ``study.task`` or the first task.
    """
    from hardylab.tasks import run_task

    resolutions = list(resolutions or scenario.study.get("resolutions") or [])
    if len(resolutions) < 3 or any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise ConfigurationError("a study needs at least 3 increasing resolutions",
                                 [("study.resolutions", scenario.lines.get("study.resolutions"),
                                   f"got {resolutions!r}")])
    model = model or scenario.study.get("model", "power")
    label = task or scenario.study.get("task") or scenario.tasks[0].label
    specs = [t for t in scenario.tasks if t.label == label]
    if not specs:
        raise ConfigurationError(f"no task labelled {label!r}", [("study.task", scenario.lines.get("study.task"),
                                                                  "unknown task label")])

    rows = []
    for n in resolutions:
        outcome = run_task(specs[0], scenario.with_resolution(int(n)))
        if outcome.value is None:
            raise ConfigurationError(f"task {label} has no scalar value to study",
                                     [("study.task", None, f"task kind {specs[0].task}")])
        rows.append({"resolution": int(n), "value": outcome.value, "converged": outcome.converged})
        logger.info(f"Study {scenario.name}: n={n} value={outcome.value:.10g}")

    values = [r["value"] for r in rows]
    extrapolation = richardson_extrapolate(resolutions, values, model)
    diffs = np.diff(values)
    monotone = bool(np.all(diffs <= 1e-12 * np.abs(values[1:])) or np.all(diffs >= -1e-12 * np.abs(values[1:])))
    notes = [] if monotone else ["sequence is not monotone"]
    for r in rows:
        r["error_vs_limit"] = abs(r["value"] - extrapolation.limit)
    return StudyResult(task=label, rows=rows, extrapolation=extrapolation, monotone=monotone, notes=notes)
