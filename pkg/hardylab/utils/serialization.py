import json
import math
import numbers

import numpy as np

SIGNIFICANT_DIGITS = 12


def to_jsonable(value):
    """
    Convert reports to plain JSON types.

    Floats keep 12 significant digits; infinities and NaN become the strings
    ``"inf"``, ``"-inf"`` and ``"nan"``; numpy scalars and arrays become
    Python numbers and lists.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{SIGNIFICANT_DIGITS}g}")
    return value


def dumps(value, indent=2):
    return json.dumps(to_jsonable(value), indent=indent, sort_keys=True) + "\n"


def format_cell(value):
    """CSV cell text with the same number formatting as the JSON reports."""
    value = to_jsonable(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    return "" if value is None else str(value)
