"""Exception types raised across the simulator."""


class TDCDError(Exception):
    """Base class for all simulator errors."""


class ConfigError(TDCDError, ValueError):
    """Invalid configuration, shapes, or dimensions."""


class NumericError(TDCDError, ArithmeticError):
    """Non-finite value encountered in a loss or gradient computation."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


class DivergenceError(TDCDError, ArithmeticError):
    """A client's parameters became non-finite during a local step."""

    def __init__(self, client, silo, iteration, trace=None):
        super().__init__(
            f"non-finite parameters at client k={client}, silo j={silo}, iteration t={iteration}"
        )
        self.client = client
        self.silo = silo
        self.iteration = iteration
        # partial TrainingTrace, filled in by run_training
        self.trace = trace
