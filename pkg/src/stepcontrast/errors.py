"""Exception types shared across the package.

The CLI maps these onto exit codes (usage 1, data 2, numeric abort 3), so
library code should raise the most specific type that applies.
"""


class DataError(Exception):
    """Bad input data: missing file, unparseable cell, shape or label problems."""


class CheckpointError(DataError):
    """Corrupt, truncated, or incompatible checkpoint file."""


class NonFiniteGradientError(RuntimeError):
    """A gradient (or the loss itself) became NaN/Inf during optimization.

    Carries the iteration index and, when known, the loss value so the
    failure is diagnosable instead of silently propagating NaNs.
    """

    def __init__(self, iteration: int, loss_value: float | None = None,
                 detail: str = ""):
        self.iteration = iteration
        self.loss_value = loss_value
        msg = f"non-finite gradient at iteration {iteration}"
        if loss_value is not None:
            msg += f" (loss={loss_value!r})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
