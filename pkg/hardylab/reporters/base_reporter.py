class BaseReporter:
    """
    BaseReporter is the base class for hardylab reporters.

    The event bus calls ``on_<event>`` for each event; subclasses override the
    ones they care about. Every method receives the ``correlation_id`` of the
    run or task the event belongs to. Extra keyword arguments may be added to
    events over time, so overrides should accept ``**kwargs``.
    """

    def on_run_start(self, correlation_id, **kwargs):
        """
        Called once before any task runs.

        :param correlation_id: Unique identifier for the run
        :param kwargs: ``scenario`` (name), ``provenance``, ``output_dir``, ``task_count``
        """
        pass

    def on_run_end(self, correlation_id, **kwargs):
        """
        Called after every task has finished.

        :param correlation_id: Unique identifier for the run
        :param kwargs: ``exit_code``
        """
        pass

    def on_task_start(self, correlation_id, **kwargs):
        """
        :param correlation_id: Unique identifier for the task
        :param kwargs: ``label``, ``index``
        """
        pass

    def on_task_end(self, correlation_id, **kwargs):
        """
        :param correlation_id: Unique identifier for the task
        :param kwargs: ``label``, ``status``, ``elapsed`` (seconds)
        """
        pass

    def on_task_converged(self, correlation_id, **kwargs):
        """
        Called when a task completed and every solve converged.

        :param correlation_id: Unique identifier for the task
        :param kwargs: ``label``, ``outcome`` (task report with ``tables``)
        """
        pass

    def on_task_unconverged(self, correlation_id, **kwargs):
        """
        Called when a task completed but a solve hit its limits.

        :param correlation_id: Unique identifier for the task
        :param kwargs: ``label``, ``outcome``
        """
        pass

    def on_task_error(self, correlation_id, **kwargs):
        """
        Called when a task raised.

        :param correlation_id: Unique identifier for the task
        :param kwargs: ``label``, ``category`` (exception class name), ``error``
        """
        pass

    def on_study_result(self, correlation_id, **kwargs):
        """
        Called when a refinement study finishes.

        :param correlation_id: Unique identifier for the run
        :param kwargs: ``study`` (``StudyResult.to_dict()``)
        """
        pass
