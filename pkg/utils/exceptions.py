"""
Exception classes for the toolkit.

This module defines custom exception classes used throughout the toolkit
for error handling. All exceptions inherit from `LabnnException` so the
command line can map every expected failure to one exit code.
"""

from typing import Optional


class LabnnException(Exception):
    """
    Base exception for all toolkit errors.

    All custom exceptions in this toolkit should inherit from this class.
    """
    pass


class ShapeMismatchError(LabnnException):
    """
    Raised when tensor shapes are incompatible with an operation.

    Covers convolution channel mismatches, kernel layout errors, batch sizes
    a layer cannot handle and any shape that violates Shape4.
    """
    pass


class GraphError(LabnnException):
    """
    Raised when the autodiff graph is misused.

    Occurs for non-scalar loss nodes, nodes recorded on a different tape
    or a backward pass requested twice on the same tape.
    """
    pass


class CheckpointFormatError(LabnnException):
    """
    Raised when a checkpoint file cannot be written or decoded.

    Wraps bad magic bytes, unsupported versions, unknown dtype codes and
    truncated payloads.
    """
    pass


class DatasetFormatError(LabnnException):
    """
    Raised when dataset files are missing or malformed.

    Covers bad IDX magic numbers, truncated files, record count mismatches
    and labels outside the class range.
    """
    pass


class ConfigError(LabnnException):
    """
    Raised when a run config is invalid.

    Carries the offending key (section.key) when one can be named, so the
    command line can report it.
    """

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class UniquenessLimitError(LabnnException):
    """
    Raised when kernel enumeration would explode.

    The uniqueness analysis enumerates 2^(k*k) kernels and refuses k > 4.
    """
    pass


class DivergenceError(LabnnException):
    """
    Raised when training produces a non-finite loss.
    """
    pass


class QuantizationError(LabnnException):
    """
    Raised for unsupported quantization bit widths.
    """
    pass


class ModelBuildError(LabnnException):
    """
    Raised when a ModelSpec cannot be turned into a consistent model.
    """
    pass
