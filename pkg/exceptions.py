#!/usr/bin/env python3
"""
Custom Exception Classes for the Entropy Estimation Tool

Every error the numerical modules can raise is a subclass of
EntropyToolError. Each class carries an ``error_kind`` tag (the short name
reported in errors.json) and groups under one of the module families below.
"""

from typing import Any, Dict, List, Optional

import config


class EntropyToolError(Exception):
    """Base exception class for all entropy tool errors."""

    error_kind = "EntropyToolError"

    def __init__(self, message: str, details: Optional[str] = None):
        self.message = message
        self.details = details
        super().__init__(self.message)

    def __str__(self):
        if self.details:
            return f"{self.message}\nDetails: {self.details}"
        return self.message

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used for errors.json."""
        return {
            'error_kind': self.error_kind,
            'error_class': type(self).__name__,
            'message': self.message,
            'details': self.details,
        }


# =============================================================================
# metric_core
# =============================================================================

class MetricError(EntropyToolError):
    """Raised when a distance matrix or metric space is invalid."""

    error_kind = "MetricError"


class NonSquareMatrixError(MetricError):
    error_kind = "NonSquare"

    def __init__(self, shape):
        self.shape = tuple(shape)
        super().__init__("Distance matrix is not square", f"shape={self.shape}")


class NegativeEntryError(MetricError):
    error_kind = "NegativeEntry"

    def __init__(self, row: int, column: int, value: float):
        self.row = row
        self.column = column
        self.value = value
        super().__init__("Distance matrix has a negative entry",
                         f"dist[{row}][{column}] = {value!r}")


class NonFiniteEntryError(MetricError):
    error_kind = "NonFiniteEntry"

    def __init__(self, row: int, column: int):
        self.row = row
        self.column = column
        super().__init__("Distance matrix has a non-finite entry", f"dist[{row}][{column}]")


class EmptySpaceError(MetricError):
    error_kind = "EmptySpace"

    def __init__(self, operation: str):
        super().__init__(f"{operation} needs at least one point")


class EmptySubsetError(MetricError):
    error_kind = "EmptySubset"

    def __init__(self):
        super().__init__("Cannot restrict a space to an empty subset")


class TooLargeError(MetricError):
    error_kind = "TooLarge"

    def __init__(self, size: int, size_limit: int):
        self.size = size
        self.size_limit = size_limit
        super().__init__("Space is too large for exhaustive search",
                         f"n={size} exceeds size_limit={size_limit}")


class MetricValidationError(MetricError):
    """Raised when a matrix that must be a metric fails validation."""

    error_kind = "MetricValidation"

    def __init__(self, context: str, violations: List[Any]):
        self.context = context
        self.violations = list(violations)
        shown = "; ".join(str(v) for v in self.violations[:3])
        super().__init__(f"Metric validation failed for {context}",
                         f"{len(self.violations)} violation(s): {shown}")


# =============================================================================
# families
# =============================================================================

class FamilyError(EntropyToolError):
    """Raised when a distance family cannot be built."""

    error_kind = "FamilyError"


class IndexOutOfRangeError(FamilyError):
    error_kind = "IndexOutOfRange"

    def __init__(self, what: str, index: int, size: int):
        super().__init__(f"{what} maps outside the sample", f"index {index} not in [0, {size})")


class MissingIdentityError(FamilyError):
    error_kind = "MissingIdentity"

    def __init__(self):
        super().__init__("Pseudogroup generators must include the identity")


class MissingInverseError(FamilyError):
    error_kind = "MissingInverse"

    def __init__(self, generator: str):
        super().__init__("Pseudogroup generator has no listed inverse", f"generator '{generator}'")


class BlowUpError(FamilyError):
    error_kind = "BlowUp"

    def __init__(self, where: str, time: float):
        super().__init__(f"Trajectory left the chart during {where}", f"t={time:.6g}")


class GridMismatchError(FamilyError):
    error_kind = "GridMismatch"

    def __init__(self, reason: str):
        super().__init__("Time or parameter grids do not match", reason)


class MissingConstantCurveError(FamilyError):
    error_kind = "MissingConstantCurve"

    def __init__(self, base_index: int, radius: float):
        super().__init__("Curve bundle does not start with the constant curve",
                         f"base point {base_index}, r={radius:g}")


class NonNestedBundlesError(FamilyError):
    error_kind = "NonNestedBundles"

    def __init__(self, base_index: int, reason: str):
        super().__init__(f"Curve bundles of base point {base_index} are not nested", reason)


class NonPositiveScaleError(FamilyError):
    error_kind = "NonPositiveScale"

    def __init__(self, scale: float):
        super().__init__("Reindexing scale must be positive", f"c={scale!r}")


# =============================================================================
# curves
# =============================================================================

class CurveError(EntropyToolError):
    """Raised when curve sampling or manipulation fails."""

    error_kind = "CurveError"


class NegativeRadiusError(CurveError):
    error_kind = "NegativeRadius"

    def __init__(self, radius: float):
        super().__init__("Speed bound must be nonnegative", f"r={radius!r}")


class UnresolvableVelocityError(CurveError):
    error_kind = "UnresolvableVelocity"

    def __init__(self, sample: int, residual: float):
        super().__init__("Curve velocity is not generated by the anchor",
                         f"sample {sample}, residual {residual:.3e}")


class ZeroLengthError(CurveError):
    error_kind = "ZeroLength"

    def __init__(self):
        super().__init__("Curve has zero length and cannot be reparametrized by arc length")


class EndpointMismatchError(CurveError):
    error_kind = "EndpointMismatch"

    def __init__(self, gap: float):
        super().__init__("Curves do not meet", f"gap {gap:.3e} exceeds snapping tolerance")


class BadIntervalError(CurveError):
    error_kind = "BadInterval"

    def __init__(self, t0: float, t1: float):
        super().__init__("Sub-interval must satisfy 0 <= t0 < t1 <= 1", f"t0={t0!r}, t1={t1!r}")


class NotInRangeError(CurveError):
    error_kind = "NotInRange"

    def __init__(self, residual: float):
        self.residual = residual
        super().__init__("Vector is not in the image of the anchor", f"residual {residual:.3e}")


class DegenerateDirectionError(CurveError):
    error_kind = "DegenerateDirection"

    def __init__(self, direction):
        super().__init__("Norm vanishes on a nonzero direction", f"u={list(direction)}")


class InvalidNormError(CurveError):
    error_kind = "InvalidNorm"

    def __init__(self, label: str, reason: str):
        super().__init__(f"Control norm '{label}' is not a valid norm", reason)


class AsymmetricControlsError(CurveError):
    error_kind = "AsymmetricControls"

    def __init__(self):
        super().__init__("Accessibility needs symmetric control sets (symmetric_controls=True)")


# =============================================================================
# scenarios / estimator / configuration
# =============================================================================

class ScenarioError(EntropyToolError):
    error_kind = "ScenarioError"


class UnknownScenarioError(ScenarioError):
    error_kind = "UnknownScenario"

    def __init__(self, name: str, known: List[str]):
        super().__init__(f"Unknown scenario '{name}'", "known: " + ", ".join(known))


class BadOverrideError(ScenarioError):
    error_kind = "BadOverride"

    def __init__(self, scenario: str, key: str, reason: str):
        self.key = key
        super().__init__(f"Invalid override '{key}' for scenario '{scenario}'", reason)


class EstimatorError(EntropyToolError):
    error_kind = "EstimatorError"


class WindowTooSmallError(EstimatorError):
    error_kind = "WindowTooSmall"

    def __init__(self, points: int, required: int):
        super().__init__("Fit window has too few grid points",
                         f"{points} point(s), need at least {required}")


class NegativeInputError(EstimatorError):
    error_kind = "NegativeInput"

    def __init__(self, name: str, value: float):
        super().__init__(f"'{name}' must be nonnegative", f"{name}={value!r}")


class NotControllableError(EstimatorError):
    error_kind = "NotControllable"

    def __init__(self, n_classes: int):
        super().__init__("Plateau check needs a single accessibility class",
                         f"partition has {n_classes} classes")


class ConfigurationError(EntropyToolError):
    """Raised when configuration is invalid or missing."""

    error_kind = "ConfigurationError"

    def __init__(self, config_item: str, reason: str):
        self.config_item = config_item
        message = f"Configuration error for '{config_item}'"
        super().__init__(message, reason)


class UsageError(ConfigurationError):
    """Raised for command-line usage errors (unknown flags, bad argument types)."""

    error_kind = "Usage"

    def __init__(self, prog: str, reason: str):
        super().__init__(prog, reason)


class UnknownParameterError(ConfigurationError):
    error_kind = "UnknownParameter"

    def __init__(self, parameter: str, allowed: List[str]):
        super().__init__(parameter, "not sweepable; choose one of " + ", ".join(allowed))


# Utility functions for error handling
CONFIG_ERROR_TYPES = (ConfigurationError, UnknownScenarioError, BadOverrideError)


def exit_code_for(error: Exception) -> int:
    """Map an exception to the CLI exit-code contract."""
    if isinstance(error, CONFIG_ERROR_TYPES):
        return config.EXIT_CONFIG_ERROR
    return config.EXIT_NUMERIC_ERROR


def error_payload(error: Exception, operation: str) -> Dict[str, Any]:
    """Build the errors.json payload for any exception."""
    if isinstance(error, EntropyToolError):
        payload = error.to_dict()
    else:
        payload = {
            'error_kind': 'Unexpected',
            'error_class': type(error).__name__,
            'message': str(error),
            'details': None,
        }
    payload['operation'] = operation
    payload['exit_code'] = exit_code_for(error)
    return payload


def create_user_friendly_message(error: Exception) -> str:
    """Create user-friendly error messages from exceptions."""

    if isinstance(error, UnknownScenarioError):
        return f"{error.message}. Run 'list-scenarios' to see the registry ({error.details})."

    elif isinstance(error, ConfigurationError):
        return f"{error.message}: {error.details}"

    elif isinstance(error, MetricValidationError):
        return f"{error.message}. {error.details}"

    elif isinstance(error, EntropyToolError):
        if error.details:
            return f"{error.message} ({error.details})"
        return error.message

    else:
        return f"An unexpected error occurred: {str(error)}"
