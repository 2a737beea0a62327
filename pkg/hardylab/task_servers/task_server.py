import logging
import sys
import time
import traceback
from functools import wraps
from multiprocessing import Pool

from hardylab.errors import HardylabError
from hardylab.events import TaskMessage
from hardylab.scenario import build_problem, load_scenario
from hardylab.task_result import CONVERGED, ERROR, UNCONVERGED, EventDrivenTaskResult, TaskRecord
from hardylab.tasks import run_task

logger = logging.getLogger("hardylab")


class HookManager:
    """
    HookManager is responsible for managing and executing hooks at various points
    during task execution.

    Hooks receive a context dictionary with ``task_message``, ``scenario``,
    ``problem``, ``outcome`` and ``error`` entries, filled in as the task
    progresses. With more than one job they run inside the worker process, so
    they must be picklable (module-level functions).

    Attributes:
        hooks (dict): A dictionary containing lists of hook functions for each hook point.
    """

    def __init__(self):
        self.hooks = {
            'before_load': [],
            'after_load': [],
            'before_build_problem': [],
            'after_build_problem': [],
            'before_task': [],
            'after_task': [],
        }

    def register(self, hook_name):
        """
        Decorator for registering a function as a hook.

        :param hook_name: The name of the hook point to register the function for.
        :return: A decorator function.
        :raises ValueError: If an unknown hook name is provided.
        """
        def decorator(func):
            @wraps(func)
            def wrapper(*args, **kwargs):
                return func(*args, **kwargs)
            if hook_name not in self.hooks:
                raise ValueError(f"Unknown hook: {hook_name}")
            self.hooks[hook_name].append(func)
            return wrapper
        return decorator

    def run_hooks(self, hook_name, context):
        """
        Execute all registered hooks for a given hook point. A failing hook is
        logged and does not stop the task.

        :raises ValueError: If an unknown hook name is provided.
        """
        if hook_name not in self.hooks:
            raise ValueError(f"Unknown hook: {hook_name}")
        for hook in self.hooks[hook_name]:
            try:
                hook(context)
            except Exception as e:
                logger.error(f"Error in {hook_name} hook: {str(e)}")


class TaskWorker:
    """Runs one task message to a :class:`TaskRecord`; picklable for pool workers."""

    def __init__(self, hook_manager):
        self.hook_manager = hook_manager

    def __call__(self, message_json):
        message = TaskMessage.from_json(message_json)
        context = {
            'task_message': message,
            'scenario': None,
            'problem': None,
            'outcome': None,
            'error': None,
        }
        started = time.perf_counter()
        try:
            self.hook_manager.run_hooks('before_load', context)
            context['scenario'] = load_scenario(message.scenario_path)
            self.hook_manager.run_hooks('after_load', context)
            spec = next(t for t in context['scenario'].tasks if t.label == message.task_label)

            if spec.task != 'oracle':
                self.hook_manager.run_hooks('before_build_problem', context)
                context['problem'] = build_problem(context['scenario'])
                self.hook_manager.run_hooks('after_build_problem', context)

            self.hook_manager.run_hooks('before_task', context)
            outcome = run_task(spec, context['scenario'], context['problem'])
            context['outcome'] = outcome
            self.hook_manager.run_hooks('after_task', context)
            data = dict(outcome.to_dict(), tables=outcome.tables)
            status = CONVERGED if outcome.converged else UNCONVERGED
            return TaskRecord(message, status, outcome=data, elapsed=time.perf_counter() - started)
        except HardylabError as e:
            context['error'] = e
            self.hook_manager.run_hooks('after_task', context)
            logger.error(f"Task {message.task_label} failed: {e}")
            return TaskRecord(message, ERROR, error=str(e), error_category=type(e).__name__,
                              elapsed=time.perf_counter() - started)
        except Exception as e:
            context['error'] = e
            self.hook_manager.run_hooks('after_task', context)
            error_type, error_value, error_traceback = sys.exc_info()
            formatted_traceback = ''.join(traceback.format_exception(error_type, error_value, error_traceback))
            logger.error(f"Task {message.task_label} raised {type(e).__name__}: {e}")
            return TaskRecord(message, ERROR, error=f"{str(e)}\n{formatted_traceback}",
                              error_category=type(e).__name__, elapsed=time.perf_counter() - started)


class TaskServer:
    """
    TaskServer executes the tasks of a scenario, inline or in a process pool.

    Records come back in the order tasks were added, whatever the number of
    processes, and are published through an :class:`EventDrivenTaskResult`.

    Attributes:
        processes (int): Number of worker processes; 1 runs inline.
        event_publisher (EventPublisher): Where task events go.
        task_queue (list): Serialized :class:`TaskMessage` objects awaiting execution.
        hook_manager (HookManager): Hooks run around each task.
    """

    def __init__(self, processes, event_publisher):
        self.processes = max(1, int(processes or 1))
        self.event_publisher = event_publisher
        self.task_queue = []
        self.hook_manager = HookManager()

    def add_task(self, task_message):
        self.task_queue.append(task_message.to_json())

    def start(self):
        """
        Run every queued task.

        :return: The :class:`EventDrivenTaskResult` holding all records.
        """
        result = EventDrivenTaskResult(self.event_publisher)
        worker = TaskWorker(self.hook_manager)
        queue, self.task_queue = self.task_queue, []
        if self.processes == 1 or len(queue) <= 1:
            for message_json in queue:
                result.startTask(TaskMessage.from_json(message_json))
                self._finish(result, worker(message_json))
            return result

        with Pool(processes=min(self.processes, len(queue))) as pool:
            for record in pool.imap(worker, queue):
                result.startTask(record.message)
                self._finish(result, record)
        return result

    def _finish(self, result, record):
        result.addRecord(record)
        result.stopTask(record)
