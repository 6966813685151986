"""Exception hierarchy.

Every error carries a short ``code`` so the pipeline can turn it into a
structured report cell instead of aborting the grid.
"""
from __future__ import annotations


class DeferCausalError(Exception):
    code = "error"


class DataError(DeferCausalError, ValueError):
    code = "invalid_data"

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ConfigError(DeferCausalError, ValueError):
    code = "invalid_config"


class ScenarioError(DeferCausalError):
    """Scenario-1 quantity requested on data without model predictions."""

    code = "unavailable_scenario"


class PolicyError(DeferCausalError):
    """Re-flagging would leave a record without the prediction it needs."""

    code = "orphaned_records"


class InsufficientDataError(DeferCausalError):
    code = "insufficient_data"


class InsufficientSupportError(DeferCausalError):
    code = "insufficient_support"


class SingularFitError(DeferCausalError):
    code = "singular_fit"


class CalibrationError(DeferCausalError):
    code = "calibration_failed"


class DivergenceError(DeferCausalError):
    code = "diverged"
