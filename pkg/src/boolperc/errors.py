class InputError(ValueError):
    """Bad argument to a library call."""


class ConfigError(ValueError):
    """Run configuration that cannot be honoured."""


class InvariantViolation(RuntimeError):
    """A structural check failed during a run."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)
