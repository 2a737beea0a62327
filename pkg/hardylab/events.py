import json
import logging
import traceback
from typing import List

from hardylab.utils.reporter_loader import load_reporter

logger = logging.getLogger("hardylab")


class TaskMessage:
    """
    Identifies one task of one scenario file.

    Messages travel to worker processes as JSON, so they carry the scenario
    path rather than the parsed scenario.

    Attributes:
        scenario_path (str): Path of the scenario file.
        task_label (str): Label of the task inside the scenario.
        index (int): Position of the task in the scenario.
        correlation_id (str): Identifier shared by every event of this task.
        additional_data (dict): Optional extra data for hooks.
    """

    def __init__(self, scenario_path, task_label, index, correlation_id, additional_data=None):
        self.scenario_path = scenario_path
        self.task_label = task_label
        self.index = index
        self.correlation_id = correlation_id
        self.additional_data = additional_data or {}

    def to_json(self):
        """
        Convert the TaskMessage to a JSON string.

        :return: A JSON string representation of the TaskMessage.
        """
        return json.dumps({
            'scenario_path': self.scenario_path,
            'task_label': self.task_label,
            'index': self.index,
            'correlation_id': self.correlation_id,
            'additional_data': self.additional_data
        })

    @classmethod
    def from_json(cls, json_str):
        data = json.loads(json_str)
        return cls(
            data['scenario_path'],
            data['task_label'],
            data['index'],
            data['correlation_id'],
            data.get('additional_data')
        )


class EventBus:
    """
    Dispatches events to every registered reporter.

    An event ``task_start`` is delivered by calling ``on_task_start`` on each
    reporter that defines it. Reporter exceptions are logged and never
    interrupt the run. Dispatch is synchronous and happens in the parent
    process, so reporters see events in task order.
    """

    def __init__(self):
        self.reporters: List[object] = []
        self.event_publisher = EventPublisher(self)
        logger.debug("EventBus initialized")

    def load_reporter(self, reporter_name_or_instance, **kwargs):
        reporter = load_reporter(reporter_name_or_instance, **kwargs)
        self.reporters.append(reporter)
        logger.debug(f"Reporter loaded: {reporter.__class__.__name__}")
        return reporter

    def dispatch(self, event_type, correlation_id, **kwargs):
        method_name = f"on_{event_type}"
        for reporter in self.reporters:
            handler = getattr(reporter, method_name, None)
            if handler is None:
                logger.debug(f"Reporter {reporter.__class__.__name__} has no method {method_name}")
                continue
            try:
                handler(correlation_id=correlation_id, **kwargs)
            except Exception as e:
                logger.error(f"Error in reporter {reporter.__class__.__name__}.{method_name}: {e}")
                logger.error(traceback.format_exc())

    def get_event_publisher(self):
        return self.event_publisher


class EventPublisher:
    def __init__(self, bus):
        self.bus = bus

    def publish(self, event_type: str, correlation_id: str, **kwargs):
        logger.debug(f"Published event: {event_type}, {correlation_id}")
        self.bus.dispatch(event_type, correlation_id, **kwargs)
