import importlib
import logging
import uuid

from hardylab.events import EventBus, TaskMessage
from hardylab.scenario import load_scenario
from hardylab.study import convergence_study
from hardylab.task_servers import TaskServer
from hardylab.utils import to_snake_case

logger = logging.getLogger("hardylab")


class ScenarioRunner:
    """
    Runs the tasks of a scenario file and publishes events throughout the process.

    Attributes:
        jobs (int): Worker processes; 1 runs every task in this process.
        output_dir (str): Directory announced to reporters in ``run_start``.
        event_bus (EventBus): Dispatches events to the reporters.
        task_server (TaskServer): Executes the tasks.
        run_correlation_id (str): Identifier of the current run.
    """

    def __init__(self, jobs=1, reporters=None, output_dir=None, server='TaskServer'):
        """
        :param jobs: Number of worker processes.
        :param reporters: Reporter names or instances.
        :param output_dir: Where reporters write files; ``None`` lets each reporter decide.
        :param server: Name of the TaskServer class to use, or the class itself.
        """
        self.jobs = max(1, int(jobs or 1))
        self.output_dir = output_dir
        self.event_bus = EventBus()
        self.task_server = self._create_task_server(server)
        self.run_correlation_id = None

        for reporter in reporters or []:
            self.event_bus.load_reporter(reporter)

    @property
    def hook_manager(self):
        return self.task_server.hook_manager

    def run(self, path):
        """
        Run every task of the scenario at ``path``.

        :return: The :class:`EventDrivenTaskResult`; its ``exit_code`` is the process exit code.
        :raises ConfigurationError: If the scenario does not validate. No event is published then.
        """
        scenario = load_scenario(path)
        publisher = self.event_bus.get_event_publisher()
        self.run_correlation_id = str(uuid.uuid4())
        publisher.publish('run_start', self.run_correlation_id, scenario=scenario.name,
                          provenance=scenario.provenance(), output_dir=self.output_dir,
                          task_count=len(scenario.tasks))

        for index, spec in enumerate(scenario.tasks):
            self.task_server.add_task(TaskMessage(
                scenario_path=str(path),
                task_label=spec.label,
                index=index,
                correlation_id=str(uuid.uuid4()),
            ))
        result = self.task_server.start()

        publisher.publish('run_end', self.run_correlation_id, exit_code=result.exit_code)
        logger.info(f"Scenario {scenario.name} finished with exit code {result.exit_code}")
        return result

    def study(self, path, resolutions=None, model=None, task=None):
        """
        Run a refinement study of one task of the scenario at ``path``.

        :return: ``(StudyResult, exit_code)``; the exit code is 2 when a resolution did not converge.
        """
        scenario = load_scenario(path)
        publisher = self.event_bus.get_event_publisher()
        self.run_correlation_id = str(uuid.uuid4())
        publisher.publish('run_start', self.run_correlation_id, scenario=scenario.name,
                          provenance=scenario.provenance(), output_dir=self.output_dir, task_count=0)

        study = convergence_study(scenario, resolutions=resolutions, model=model, task=task)
        exit_code = 0 if all(row["converged"] for row in study.rows) else 2
        publisher.publish('study_result', self.run_correlation_id, study=study.to_dict())
        publisher.publish('run_end', self.run_correlation_id, exit_code=exit_code)
        return study, exit_code

    def _create_task_server(self, server_name):
        """
        Create and return an instance of the specified TaskServer.

        Names are looked up in ``hardylab.task_servers``, then as
        ``hardylab_task_server_<name>.Class`` in an installed package.

        :raises ValueError: If the specified TaskServer cannot be found.
        """
        publisher = self.event_bus.get_event_publisher()
        if isinstance(server_name, type) and issubclass(server_name, TaskServer):
            return server_name(self.jobs, publisher)
        if not isinstance(server_name, str):
            raise ValueError("Server must be a string name or a TaskServer subclass")

        try:
            module = importlib.import_module(f'hardylab.task_servers.{to_snake_case(server_name)}')
            server_class = getattr(module, server_name)
        except (ImportError, AttributeError):
            if '.' not in server_name:
                raise ValueError(f"Task server '{server_name}' not found")
            module_name, class_name = server_name.rsplit('.', 1)
            if not module_name.startswith('hardylab_task_server_'):
                raise ValueError(f"Third-party task server '{module_name}' does not follow "
                                 f"the hardylab_task_server_* naming convention")
            try:
                server_class = getattr(importlib.import_module(module_name), class_name)
            except (ImportError, AttributeError) as e:
                raise ValueError(f"Task server '{server_name}' not found or invalid: {e}")
        return server_class(self.jobs, publisher)
