"""Exception types shared across the package."""


class DagflowError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ContractError(DagflowError, ValueError):
    """A precondition on shapes, ranges or arguments was violated."""


class ConfigError(ContractError):
    pass


class NumericalError(DagflowError, ArithmeticError):
    exit_code = 2

    def __init__(self, message: str, node: str | None = None):
        super().__init__(message)
        self.node = node


class RolloutDivergenceError(NumericalError):
    def __init__(self, message: str, prefix=None):
        super().__init__(message)
        self.prefix = prefix


class StaleBatchError(ContractError):
    """A transition batch was sampled under a different policy snapshot."""


class DegenerateKernelError(ContractError):
    pass


class CompatibilityError(ContractError):
    pass
