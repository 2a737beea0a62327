import csv
import logging
import os

from hardylab.reporters.base_reporter import BaseReporter
from hardylab.reporters.json_reporter import default_output_dir
from hardylab.utils.serialization import format_cell
from hardylab.utils.string_utils import slugify

logger = logging.getLogger("hardylab")


def write_table(path, rows):
    """
    Write a list of row dicts as CSV. Columns follow the first row's key order,
    then any keys that only appear later.
    """
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(row.get(c)) for c in columns])


class CSVReporter(BaseReporter):
    """
    CSVReporter writes each task table to ``<name>.<label>.<table>.csv`` and each
    study to ``<name>.study.<label>.csv``. Tables are written as soon as the
    task finishes.
    """

    def __init__(self, output_dir=None):
        self.output_dir = None if output_dir is None else os.fsdecode(output_dir)
        self.name = None
        self.written = []

    def on_run_start(self, correlation_id, scenario=None, output_dir=None, **kwargs):
        self.name = scenario
        self.written = []
        if self.output_dir is None:
            self.output_dir = output_dir or default_output_dir()

    def _path(self, *parts):
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.join(self.output_dir, ".".join([self.name] + [slugify(p) for p in parts]) + ".csv")

    def _write_tables(self, label, outcome):
        for table, rows in sorted((outcome.get("tables") or {}).items()):
            if not rows:
                continue
            path = self._path(label, table)
            write_table(path, rows)
            self.written.append(path)
            logger.debug(f"CSV table written to {path}")

    def on_task_converged(self, correlation_id, label, outcome, **kwargs):
        self._write_tables(label, outcome)

    def on_task_unconverged(self, correlation_id, label, outcome, **kwargs):
        self._write_tables(label, outcome)

    def on_study_result(self, correlation_id, study, **kwargs):
        path = self._path("study", study["task"])
        write_table(path, study["rows"])
        self.written.append(path)
