import importlib
import logging

from hardylab.utils.string_utils import to_snake_case

logger = logging.getLogger("hardylab")


def load_reporter(reporter_name_or_instance, **kwargs):
    """
    Load a reporter by name and initialize it with the given kwargs,
    or return the reporter instance if already configured.

    Names are looked up in ``hardylab.reporters``, then as a fully qualified
    ``module.Class`` path, then in an installed ``hardylab_reporter_<snake_name>``
    package.

    :param reporter_name_or_instance: Name of the reporter to load or an already configured reporter instance
    :param kwargs: Keyword arguments to pass to the reporter's constructor
    :return: Initialized reporter instance
    :raises ValueError: If the reporter cannot be found.
    """
    if not isinstance(reporter_name_or_instance, str):
        return reporter_name_or_instance

    reporter_name = reporter_name_or_instance
    module = importlib.import_module('hardylab.reporters')
    reporter_class = getattr(module, reporter_name, None)
    if reporter_class is None and '.' in reporter_name:
        module_name, class_name = reporter_name.rsplit('.', 1)
        try:
            reporter_class = getattr(importlib.import_module(module_name), class_name)
        except (ImportError, AttributeError):
            reporter_class = None
    if reporter_class is None:
        try:
            module = importlib.import_module(f'hardylab_reporter_{to_snake_case(reporter_name)}')
            reporter_class = getattr(module, reporter_name)
        except (ImportError, AttributeError):
            raise ValueError(f"Reporter '{reporter_name}' not found or invalid")
    logger.debug(f"Loading reporter {reporter_name} with {kwargs}")
    return reporter_class(**kwargs)
