"""Exception types shared across the package."""


class FlowsynthError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FlowsynthError):
    """A config value or gate-set declaration is unusable (unknown gate, bad dims, ...)."""


class ValidationError(FlowsynthError):
    """An input value violates a documented precondition (non-unitary, bad index, ...)."""


class ContractViolation(FlowsynthError):
    """An operation was called in a state its contract forbids (e.g. step on a terminal state)."""


class BudgetExceeded(FlowsynthError):
    """An exhaustive search would exceed its configured node budget."""


class TrainingDiverged(FlowsynthError):
    """Loss or gradients became non-finite; diagnostics were dumped before raising."""
