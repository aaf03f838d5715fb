"""Exception types shared across the library.

Plain argument validation raises ``ValueError`` directly; the classes here
carry extra payload (offending coordinate, partial trajectory, residual,
config field path) that callers need for diagnosis.
"""

from __future__ import annotations


class EvaluationError(RuntimeError):
    """A function or gradient evaluation produced a non-finite value.

    ``coordinate`` is the index of the offending coordinate when the failure
    happened inside a per-coordinate sweep (finite differences), else None.
    """

    def __init__(self, message: str, *, coordinate: int | None = None):
        super().__init__(message)
        self.coordinate = coordinate


class DivergenceError(RuntimeError):
    """An optimizer iterate became non-finite.

    Carries the iteration index (and stage for stagewise runs) plus the
    partial trajectory accumulated before the blow-up.
    """

    def __init__(self, message: str, *, iteration: int, stage: int | None = None,
                 trajectory=None):
        super().__init__(message)
        self.iteration = iteration
        self.stage = stage
        self.trajectory = trajectory


class ConvergenceError(RuntimeError):
    """An inner solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, *, residual: float, tol: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.tol = tol
        self.iterations = iterations


class ConfigError(ValueError):
    """An experiment config file is missing, malformed, or violates an invariant.

    ``field`` is the dotted path of the offending entry (e.g. "algorithm.c").
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
