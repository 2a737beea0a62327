import re
import logging

logger = logging.getLogger("hardylab")


def to_snake_case(name):
    """
    Convert a string from CamelCase or PascalCase to snake_case.

    Runs of capitals are kept together except for the last one when it starts
    a new word.

    Examples:
        >>> to_snake_case("JSONReporter")
        'json_reporter'
        >>> to_snake_case("CSVReporter")
        'csv_reporter'
        >>> to_snake_case("TaskServer")
        'task_server'

    :param name: The string to convert to snake_case.
    :type name: str
    :return: The input string converted to snake_case.
    :rtype: str
    """
    s1 = re.sub('(.)([A-Z][a-z]+)', r'\1_\2', name)
    return re.sub('([a-z0-9])([A-Z])', r'\1_\2', s1).lower()


def slugify(text):
    """File-name safe form of a task label or scenario name."""
    return re.sub(r'[^A-Za-z0-9_.-]+', '-', str(text)).strip('-') or 'unnamed'
