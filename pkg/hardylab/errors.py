"""Error categories raised by hardylab operations.

Every class derives from :class:`ValueError` so callers that only care about
"bad input" can keep catching that.
"""


class HardylabError(ValueError):
    """Base class for all hardylab errors."""


class ConfigurationError(HardylabError):
    """
    Invalid scenario, descriptor or option.

    :param message: Summary line.
    :param diagnostics: Optional list of ``(field_path, line, message)`` tuples,
        ``line`` is ``None`` when the source position is unknown.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        lines = [base]
        for field, line, message in self.diagnostics:
            where = f"line {line}: " if line is not None else ""
            lines.append(f"  {where}{field}: {message}")
        return "\n".join(lines)


class DomainError(HardylabError):
    """Input outside the mathematical domain of an operation."""


class UsageError(HardylabError):
    """API misuse, e.g. fields living on different geometries."""


class ResolutionError(HardylabError):
    """The grid is too coarse for the requested localisation."""


class HypothesisViolation(HardylabError):
    """A standing hypothesis of a characterization does not hold."""
