"""Exception hierarchy shared across the package."""


class Patch3DError(Exception):
    """Base class for all package errors."""


class EmptyInput(Patch3DError):
    """An operation received an empty point cloud or empty sequence."""


class InvalidArgument(Patch3DError):
    """An argument violates an operation precondition."""


class DegenerateInput(Patch3DError):
    """Input has no usable extent (identical points, zero-variance axis)."""


class PreconditionFailed(Patch3DError):
    """A required piece of state (e.g. normals) is missing."""


class InfeasibleBalance(Patch3DError):
    """No assignment can satisfy the requested cluster-size ratio.

    Carries the minimal feasible ratio for the given (n, k).
    """

    def __init__(self, delta: float, min_feasible: float):
        self.delta = delta
        self.min_feasible = min_feasible
        super().__init__(
            f"delta={delta!r} infeasible; minimal feasible delta is {min_feasible!r}"
        )


class EmptyBank(Patch3DError):
    """A semantic memory bank has no stored features."""

    def __init__(self, bank_id: int, msg: str | None = None):
        self.bank_id = bank_id
        super().__init__(msg or f"memory bank {bank_id} is empty")


class ParseError(Patch3DError):
    """Malformed file. ``offset`` is the byte position of the problem."""

    def __init__(self, msg: str, offset: int):
        self.offset = offset
        super().__init__(f"{msg} (byte offset {offset})")


class UndefinedMetric(Patch3DError):
    """Metric is undefined for the given labels (e.g. single class)."""


class ConfigError(Patch3DError):
    """Run configuration failed validation; ``fields`` lists every violation."""

    def __init__(self, fields: list[str]):
        self.fields = list(fields)
        super().__init__("invalid config: " + "; ".join(self.fields))
