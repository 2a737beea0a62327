"""JSON Schema of ``<name>.report.json`` files and a validator for them."""

import jsonschema

_NUMBER = {"oneOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "hardylab scenario report",
    "type": "object",
    "required": ["report_version", "scenario", "provenance", "tasks", "exit_code"],
    "additionalProperties": False,
    "properties": {
        "report_version": {"const": 1},
        "scenario": {"type": "string"},
        "exit_code": {"enum": [0, 1, 2]},
        "provenance": {
            "type": "object",
            "required": ["config_hash", "seed", "solver", "declared_assumptions"],
            "properties": {
                "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                "seed": {"type": "integer"},
                "solver": {"type": "object"},
                "declared_assumptions": {"type": "array", "items": {"type": "string"}},
            },
        },
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "status"],
                "properties": {
                    "label": {"type": "string"},
                    "task": {"type": "string"},
                    "status": {"enum": ["converged", "unconverged", "error"]},
                    "value": {"oneOf": [_NUMBER, {"type": "null"}]},
                    "converged": {"type": "boolean"},
                    "result": {"type": "object"},
                    "error": {
                        "type": "object",
                        "required": ["category", "message"],
                        "properties": {"category": {"type": "string"}, "message": {"type": "string"}},
                    },
                },
            },
        },
        "studies": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["task", "rows", "extrapolation", "monotone", "notes"],
                "properties": {
                    "rows": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["resolution", "value", "converged"],
                            "properties": {"resolution": {"type": "integer"}, "value": _NUMBER},
                        },
                    },
                    "extrapolation": {
                        "type": "object",
                        "required": ["limit", "order", "model"],
                        "properties": {"limit": _NUMBER, "model": {"enum": ["power", "log"]}},
                    },
                },
            },
        },
    },
}


def validate_report(report):
    """
    Check a loaded report against :data:`REPORT_SCHEMA`.

    :raises jsonschema.ValidationError: On the first violation found.
    """
    jsonschema.validate(instance=report, schema=REPORT_SCHEMA)
