"""Exception hierarchy shared by every module.

The CLI maps each family to an exit code (see ``midclass.cli``).
"""


class MidclassError(Exception):
    """Base class for all toolkit errors."""


class DomainError(MidclassError, ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedOperationError(MidclassError):
    """The data lacks what an operation needs (e.g. mean incomes)."""


class DegenerateDesignError(MidclassError):
    """A regression design is rank deficient or a regressor is absorbed."""


class ConfigurationError(MidclassError, ValueError):
    """A configuration is internally inconsistent or infeasible."""


class InputError(MidclassError):
    """Malformed input file; ``problems`` collects row-level messages."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])

    def __str__(self):
        base = super().__str__()
        if not self.problems:
            return base
        shown = "\n  ".join(self.problems[:20])
        more = "" if len(self.problems) <= 20 else f"\n  ... {len(self.problems) - 20} more"
        return f"{base}\n  {shown}{more}"


class IntegrityError(MidclassError):
    """A cache file is corrupted or carries the wrong version tag."""
