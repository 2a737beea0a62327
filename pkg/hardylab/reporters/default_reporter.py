import logging

from hardylab.reporters.base_reporter import BaseReporter

logger = logging.getLogger("hardylab")


def _format_value(value):
    if value is None:
        return "-"
    if isinstance(value, float):
        if value != 0 and not 1e-3 <= abs(value) < 1e6:
            return f"{value:.6e}"
        return f"{value:.6f}"
    return str(value)


class DefaultReporter(BaseReporter):
    """
    DefaultReporter prints one line per task and a closing count.

    Attributes:
        total_tasks (int): Tasks finished so far.
        converged_tasks (int): Tasks whose solves all converged.
        unconverged_tasks (int): Tasks that completed without converging.
        error_tasks (int): Tasks that raised.
    """

    def __init__(self):
        self.total_tasks = 0
        self.converged_tasks = 0
        self.unconverged_tasks = 0
        self.error_tasks = 0

    def on_run_start(self, correlation_id, scenario=None, **kwargs):
        print(f"Scenario {scenario} started")

    def on_task_converged(self, correlation_id, label, outcome, **kwargs):
        self.total_tasks += 1
        self.converged_tasks += 1
        print(f"{label}: converged value={_format_value(outcome.get('value'))}")

    def on_task_unconverged(self, correlation_id, label, outcome, **kwargs):
        self.total_tasks += 1
        self.unconverged_tasks += 1
        print(f"{label}: UNCONVERGED value={_format_value(outcome.get('value'))}")

    def on_task_error(self, correlation_id, label, category, error, **kwargs):
        self.total_tasks += 1
        self.error_tasks += 1
        print(f"{label}: ERROR {category}: {error.splitlines()[0] if error else ''}")

    def on_study_result(self, correlation_id, study, **kwargs):
        extrapolation = study["extrapolation"]
        print(f"study {study['task']}: limit={_format_value(extrapolation['limit'])} "
              f"({extrapolation['model']} model, {len(study['rows'])} resolutions)")

    def on_run_end(self, correlation_id, exit_code=0, **kwargs):
        print(f"Tasks: {self.total_tasks}  converged: {self.converged_tasks}  "
              f"unconverged: {self.unconverged_tasks}  errors: {self.error_tasks}  exit code: {exit_code}")
