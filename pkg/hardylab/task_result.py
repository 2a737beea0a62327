import logging

logger = logging.getLogger("hardylab")

CONVERGED = "converged"
UNCONVERGED = "unconverged"
ERROR = "error"


class TaskRecord:
    """
    What a worker sends back for one task.

    Attributes:
        message (TaskMessage): The task that ran.
        status (str): ``converged``, ``unconverged`` or ``error``.
        outcome (dict): ``TaskOutcome.to_dict()`` plus ``tables``; ``None`` on error.
        error (str): Error text, with traceback for unexpected exceptions.
        error_category (str): Exception class name on error.
        elapsed (float): Wall time of the task in seconds.
    """

    def __init__(self, message, status, outcome=None, error=None, error_category=None, elapsed=0.0):
        self.message = message
        self.status = status
        self.outcome = outcome
        self.error = error
        self.error_category = error_category
        self.elapsed = elapsed


class EventDrivenTaskResult:
    """
    Collects task records and publishes one event per outcome.

    Mirrors the ``startTest``/``stopTest``/``add*`` protocol of
    ``unittest.TestResult`` for scenario tasks.

    Attributes:
        event_publisher (EventPublisher): Where events go.
        records (list): Every record added so far, in task order.
    """

    def __init__(self, event_publisher):
        self.event_publisher = event_publisher
        self.records = []

    def startTask(self, message):
        self.event_publisher.publish('task_start', message.correlation_id,
                                     label=message.task_label, index=message.index)

    def stopTask(self, record):
        self.event_publisher.publish('task_end', record.message.correlation_id,
                                     label=record.message.task_label, status=record.status,
                                     elapsed=record.elapsed)

    def addRecord(self, record):
        """
        Store a record and publish ``task_converged``, ``task_unconverged`` or ``task_error``.

        :param record: The :class:`TaskRecord` returned by a worker.
        """
        self.records.append(record)
        message = record.message
        if record.status == ERROR:
            self.event_publisher.publish('task_error', message.correlation_id,
                                         label=message.task_label, category=record.error_category,
                                         error=record.error)
        else:
            self.event_publisher.publish(f'task_{record.status}', message.correlation_id,
                                         label=message.task_label, outcome=record.outcome)

    @property
    def errors(self):
        return [r for r in self.records if r.status == ERROR]

    @property
    def unconverged(self):
        return [r for r in self.records if r.status == UNCONVERGED]

    @property
    def exit_code(self):
        """1 on any error, 2 when every task completed but one did not converge, else 0."""
        if self.errors:
            return 1
        if self.unconverged:
            return 2
        return 0
