import csv as csv_module
import json
import math
import os
import tempfile
import textwrap
import unittest
from pathlib import Path

from hardylab.errors import ConfigurationError
from hardylab.report_schema import validate_report
from hardylab.reporters import BaseReporter, CSVReporter, JSONReporter
from hardylab.runner import ScenarioRunner
from hardylab.task_servers import TaskServer

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
ORACLES = SCENARIO_DIR / "oracles.yaml"

SMALL = textwrap.dedent("""\
    name: small
    geometry: {kind: interval, bounds: [0, 1], resolution: 16}
    p: 2
    g: 1
    tasks:
      - task: best-constant
      - task: hardy-norm
        name: norm
        options:
          family: [{interval: [0.25, 0.75]}, {interval: [0.125, 0.875]}]
    study:
      resolutions: [16, 32, 64]
      task: best-constant
""")

BROKEN = textwrap.dedent("""\
    name: broken
    geometry: {kind: interval, bounds: [0, 1], resolution: 16}
    p: 2
    tasks:
      - task: capacity
        options:
          F: {interval: [0.0, 0.5]}
      - task: oracle
        options: {name: hardy_1d_constant, params: {p: 2}}
""")

CAPPED = textwrap.dedent("""\
    name: capped
    geometry: {kind: interval, bounds: [0, 1], resolution: 64}
    p: 3
    g: 1
    solver: {max_iters: 1}
    task: spectral-profile
    options:
      exhaustion: 3
      centers: [[0.5]]
      radii: [0.25, 0.125]
""")


class RecordingReporter(BaseReporter):
    def __init__(self):
        self.events = []

    def on_run_start(self, correlation_id, **kwargs):
        self.events.append(("run_start", kwargs["scenario"]))

    def on_task_start(self, correlation_id, label, **kwargs):
        self.events.append(("task_start", label))

    def on_task_converged(self, correlation_id, label, **kwargs):
        self.events.append(("task_converged", label))

    def on_task_error(self, correlation_id, label, category, **kwargs):
        self.events.append(("task_error", category))

    def on_task_end(self, correlation_id, label, status, **kwargs):
        self.events.append(("task_end", status))

    def on_study_result(self, correlation_id, study, **kwargs):
        self.events.append(("study_result", study["task"]))

    def on_run_end(self, correlation_id, exit_code, **kwargs):
        self.events.append(("run_end", exit_code))


class RunnerTestCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding="utf-8")
        return path

    def read_report(self, directory, name):
        with open(Path(directory) / f"{name}.report.json", encoding="utf-8") as f:
            return json.load(f)


class ScenarioRunnerTests(RunnerTestCase):
    def test_events_in_task_order(self):
        reporter = RecordingReporter()
        result = ScenarioRunner(reporters=[reporter]).run(ORACLES)
        self.assertEqual(result.exit_code, 0)
        expected = [("run_start", "oracles")]
        for label in ("newtonian", "hardy-1d", "hardy-radial"):
            expected += [("task_start", label), ("task_converged", label), ("task_end", "converged")]
        expected.append(("run_end", 0))
        self.assertEqual(reporter.events, expected)

    def test_records_carry_outcomes(self):
        result = ScenarioRunner().run(ORACLES)
        self.assertEqual([r.message.task_label for r in result.records], ["newtonian", "hardy-1d", "hardy-radial"])
        self.assertAlmostEqual(result.records[0].outcome["value"], 4 * math.pi, places=10)
        self.assertEqual(result.records[1].outcome["value"], 0.25)
        self.assertEqual(result.errors, [])
        self.assertEqual(result.unconverged, [])

    def test_report_is_deterministic(self):
        outputs = []
        for jobs in (1, 1, 2):
            out = self.tmp / f"run{len(outputs)}"
            ScenarioRunner(jobs=jobs, reporters=[JSONReporter(output_dir=out)]).run(ORACLES)
            outputs.append((out / "oracles.report.json").read_bytes())
            self.assertTrue((out / "oracles.meta.json").exists())
        self.assertEqual(outputs[0], outputs[1])
        self.assertEqual(outputs[0], outputs[2])

    def test_report_follows_the_schema(self):
        ScenarioRunner(reporters=[JSONReporter(output_dir=self.tmp)]).run(ORACLES)
        report = self.read_report(self.tmp, "oracles")
        validate_report(report)
        self.assertEqual(report["exit_code"], 0)
        self.assertEqual(len(report["provenance"]["config_hash"]), 64)
        self.assertEqual([t["label"] for t in report["tasks"]], ["newtonian", "hardy-1d", "hardy-radial"])
        self.assertAlmostEqual(report["tasks"][0]["value"], 4 * math.pi, places=9)
        with open(self.tmp / "oracles.meta.json", encoding="utf-8") as f:
            meta = json.load(f)
        self.assertEqual(set(meta["timings"]), {"newtonian", "hardy-1d", "hardy-radial"})

    def test_task_error_gives_exit_code_one(self):
        path = self.write("broken.yaml", BROKEN)
        reporter = RecordingReporter()
        result = ScenarioRunner(reporters=[reporter, JSONReporter(output_dir=self.tmp)]).run(path)
        self.assertEqual(result.exit_code, 1)
        self.assertEqual(len(result.errors), 1)
        self.assertIn(("task_error", "DomainError"), reporter.events)
        self.assertIn(("task_converged", "oracle"), reporter.events)

        report = self.read_report(self.tmp, "broken")
        validate_report(report)
        self.assertEqual(report["exit_code"], 1)
        self.assertEqual(report["tasks"][0]["status"], "error")
        self.assertEqual(report["tasks"][0]["error"]["category"], "DomainError")
        self.assertEqual(report["tasks"][1]["status"], "converged")

    def test_capped_iterations_give_exit_code_two(self):
        path = self.write("capped.yaml", CAPPED)
        csv = CSVReporter(output_dir=self.tmp)
        result = ScenarioRunner(reporters=[csv, JSONReporter(output_dir=self.tmp)]).run(path)
        self.assertEqual(result.exit_code, 2)
        self.assertEqual(result.errors, [])
        self.assertEqual(len(result.unconverged), 1)

        report = self.read_report(self.tmp, "capped")
        validate_report(report)
        self.assertEqual(report["exit_code"], 2)
        self.assertEqual(report["tasks"][0]["status"], "unconverged")
        self.assertFalse(report["tasks"][0]["result"]["converged"])

        with open(self.tmp / "capped.spectral-profile.curves.csv", encoding="utf-8", newline="") as f:
            rows = list(csv_module.DictReader(f))
        self.assertEqual(set(rows[0]), {"scope", "parameter", "S_value", "converged"})
        self.assertIn("False", {row["converged"] for row in rows})

    def test_invalid_scenario_publishes_nothing(self):
        path = self.write("bad.yaml", "name: bad\np: 2\ntask: capacity\n")
        reporter = RecordingReporter()
        with self.assertRaises(ConfigurationError):
            ScenarioRunner(reporters=[reporter]).run(path)
        self.assertEqual(reporter.events, [])

    def test_csv_tables(self):
        path = self.write("small.yaml", SMALL)
        csv = CSVReporter(output_dir=self.tmp)
        result = ScenarioRunner(reporters=[csv]).run(path)
        self.assertEqual(result.exit_code, 0)
        self.assertEqual([os.path.basename(p) for p in csv.written], ["small.norm.per_set.csv"])
        lines = (self.tmp / "small.norm.per_set.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(lines), 3)

    def test_study(self):
        path = self.write("small.yaml", SMALL)
        reporter = RecordingReporter()
        csv = CSVReporter(output_dir=self.tmp)
        runner = ScenarioRunner(reporters=[reporter, csv, JSONReporter(output_dir=self.tmp)])
        study, exit_code = runner.study(path)
        self.assertEqual(exit_code, 0)
        self.assertEqual(study.task, "best-constant")
        self.assertIn(("study_result", "best-constant"), reporter.events)
        self.assertTrue((self.tmp / "small.study.best-constant.csv").exists())
        report = self.read_report(self.tmp, "small")
        validate_report(report)
        self.assertEqual(report["tasks"], [])
        self.assertEqual(len(report["studies"][0]["rows"]), 3)


class TaskServerSelectionTests(unittest.TestCase):
    def test_default_server(self):
        self.assertIsInstance(ScenarioRunner().task_server, TaskServer)

    def test_server_class(self):
        class QuietServer(TaskServer):
            pass

        self.assertIsInstance(ScenarioRunner(server=QuietServer).task_server, QuietServer)

    def test_unknown_servers(self):
        for name in ("NoSuchServer", "some_module.Server", "hardylab_task_server_missing.Server"):
            with self.subTest(name=name):
                with self.assertRaises(ValueError):
                    ScenarioRunner(server=name)
        with self.assertRaises(ValueError):
            ScenarioRunner(server=42)


class HookTests(unittest.TestCase):
    def test_hooks_run_in_order(self):
        runner = ScenarioRunner()
        calls = []
        for name in ("before_load", "after_load", "before_task", "after_task"):
            runner.hook_manager.register(name)(lambda context, name=name: calls.append(name))
        runner.run(ORACLES)
        self.assertEqual(calls[:4], ["before_load", "after_load", "before_task", "after_task"])
        self.assertEqual(len(calls), 12)

    def test_problem_hooks_and_context(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "small.yaml"
            path.write_text(SMALL, encoding="utf-8")
            runner = ScenarioRunner()
            seen = []

            @runner.hook_manager.register('after_build_problem')
            def problem_built(context):
                seen.append(context['problem'].geometry.n_cells)

            @runner.hook_manager.register('after_task')
            def task_done(context):
                seen.append((context['task_message'].task_label, context['outcome'].value > 0))

            runner.run(path)
        self.assertEqual(seen, [16, ("best-constant", True), 16, ("norm", True)])

    def test_failing_hook_does_not_stop_the_task(self):
        runner = ScenarioRunner()

        @runner.hook_manager.register('before_task')
        def broken(context):
            raise RuntimeError("hook failed")

        with self.assertLogs("hardylab", level="ERROR"):
            result = runner.run(ORACLES)
        self.assertEqual(result.exit_code, 0)

    def test_unknown_hook(self):
        with self.assertRaises(ValueError):
            ScenarioRunner().hook_manager.register('after_everything')(lambda context: None)


if __name__ == '__main__':
    unittest.main()
