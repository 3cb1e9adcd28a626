"""Shared exception types.

The CLI maps these onto exit codes (usage 2, numeric fault 3, singular
actuation 4), so library code should raise them rather than bare ValueError
wherever a caller might want to distinguish the failure class.
"""


class ContractError(ValueError):
    """A precondition was violated (shape mismatch, bad argument)."""


class NumericFaultError(ArithmeticError):
    """A non-finite value appeared during computation.

    ``context`` carries whatever identifies the failure site (node index,
    RK4 stage, rollout step, training epoch/batch).
    """

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = dict(context)

    def __str__(self):
        base = super().__str__()
        if self.context:
            extra = ", ".join(f"{k}={v}" for k, v in sorted(self.context.items()))
            return f"{base} ({extra})"
        return base


class UnsupportedQueryError(TypeError):
    """The model variant cannot answer this query (e.g. energy of a baseline)."""


class SingularActuationError(RuntimeError):
    """The input matrix g(q) is (numerically) rank deficient at the query point."""
