"""Exception hierarchy shared by every graphllava module."""

from __future__ import annotations


class GraphLlavaError(Exception):
    """Base class for all package errors."""


# graph_core
class MalformedHeader(GraphLlavaError, ValueError):
    pass


class EdgeOutOfRange(GraphLlavaError, ValueError):
    pass


class MalformedEdge(GraphLlavaError, ValueError):
    pass


class HamiltonTooLarge(GraphLlavaError, ValueError):
    pass


# tokenizer
class EmptyCorpus(GraphLlavaError, ValueError):
    pass


class IdOutOfRange(GraphLlavaError, IndexError):
    pass


# autodiff
class ShapeMismatch(GraphLlavaError, ValueError):
    pass


class EmptyMask(GraphLlavaError, ValueError):
    pass


class NonScalarLoss(GraphLlavaError, ValueError):
    pass


# model
class SequenceTooLong(GraphLlavaError, ValueError):
    pass


# datasets
class SchemaError(GraphLlavaError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# pipeline
class DatasetStageMismatch(GraphLlavaError, ValueError):
    pass


class NonFiniteLoss(GraphLlavaError, FloatingPointError):
    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"non-finite loss {value!r} at step {step}")


class VersionMismatch(GraphLlavaError, ValueError):
    pass


class ChecksumMismatch(GraphLlavaError, ValueError):
    pass


class CensusMismatch(GraphLlavaError, ValueError):
    pass


# eval
class AllInvalid(GraphLlavaError, ValueError):
    pass


# cli
class UsageError(GraphLlavaError, ValueError):
    """Unknown subcommand, flag or config key, or an inconsistent combination of them."""
