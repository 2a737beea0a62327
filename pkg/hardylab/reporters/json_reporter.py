import os
import logging
from datetime import datetime, timezone

from hardylab.reporters.base_reporter import BaseReporter
from hardylab.utils.serialization import dumps

logger = logging.getLogger("hardylab")

REPORT_VERSION = 1


def default_output_dir():
    return os.environ.get("HARDYLAB_OUT", "hardylab_reports")


class JSONReporter(BaseReporter):
    """
    JSONReporter writes ``<name>.report.json`` and ``<name>.meta.json`` at the end of a run.

    The report holds only what the scenario determines: provenance and one
    entry per task, in task order, with sorted keys and 12 significant
    digits, so repeated runs give byte-identical files. Wall-clock
    timestamps and task timings go to the metadata file.

    Attributes:
        output_dir (str): Directory for the files; taken from ``run_start`` when not given.
        indent (int): JSON indentation.
        tasks (list): Task entries collected so far.
        studies (list): Study results collected so far.
        timings (dict): Task label to elapsed seconds.
    """

    def __init__(self, output_dir=None, indent=2):
        """
        :param output_dir: Where to write. Defaults to the run's output directory.
        :param indent: JSON indentation. Defaults to 2.
        :raises TypeError: If output_dir is not a string or path-like object.
        """
        if output_dir is not None and not isinstance(output_dir, (str, bytes, os.PathLike)):
            raise TypeError("output_dir must be a string or path-like object")
        self.output_dir = None if output_dir is None else os.fsdecode(output_dir)
        self.indent = int(indent)
        self._reset()

    def _reset(self):
        self.name = None
        self.provenance = {}
        self.tasks = []
        self.studies = []
        self.timings = {}
        self.started_at = None

    def on_run_start(self, correlation_id, scenario=None, provenance=None, output_dir=None, **kwargs):
        self._reset()
        self.name = scenario
        self.provenance = provenance or {}
        self.started_at = datetime.now(timezone.utc).isoformat()
        if self.output_dir is None:
            self.output_dir = output_dir or default_output_dir()

    def on_task_converged(self, correlation_id, label, outcome, **kwargs):
        self._record(label, "converged", outcome)

    def on_task_unconverged(self, correlation_id, label, outcome, **kwargs):
        self._record(label, "unconverged", outcome)

    def on_task_error(self, correlation_id, label, category, error, **kwargs):
        # first line only; tracebacks carry paths and would break determinism
        message = error.splitlines()[0] if error else ""
        self.tasks.append({"label": label, "status": "error",
                           "error": {"category": category, "message": message}})

    def _record(self, label, status, outcome):
        entry = {k: v for k, v in outcome.items() if k != "tables"}
        entry["status"] = status
        entry["label"] = label
        self.tasks.append(entry)

    def on_task_end(self, correlation_id, label, elapsed=0.0, **kwargs):
        self.timings[label] = elapsed

    def on_study_result(self, correlation_id, study, **kwargs):
        self.studies.append(study)

    def on_run_end(self, correlation_id, exit_code=0, **kwargs):
        if self.name is None:
            logger.warning("JSONReporter got run_end without run_start; nothing written")
            return
        os.makedirs(self.output_dir, exist_ok=True)
        report = {
            "report_version": REPORT_VERSION,
            "scenario": self.name,
            "provenance": self.provenance,
            "tasks": self.tasks,
            "exit_code": exit_code,
        }
        if self.studies:
            report["studies"] = self.studies
        meta = {
            "scenario": self.name,
            "started_at": self.started_at,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "timings": self.timings,
        }
        report_path = os.path.join(self.output_dir, f"{self.name}.report.json")
        meta_path = os.path.join(self.output_dir, f"{self.name}.meta.json")
        with open(report_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps(report, indent=self.indent))
        with open(meta_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps(meta, indent=self.indent))
        logger.info(f"Report written to {report_path}")
