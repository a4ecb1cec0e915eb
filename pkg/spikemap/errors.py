"""Exceptions raised by spikemap and the exit codes the CLI maps them to.

=====================  =========
Error class            Exit code
=====================  =========
(success)              0
UsageError             2
ParseError             3
ShapeError             4
UnsupportedKind        4
BlobError              5
PartitionError         6
NoFeasiblePartition    6
InfeasibleNetwork      6
CapacityError          7
MapError               8
IntegrityError         8
VersionError           9
DegenerateWeights      10
EmptyCalibration       10
DeadLayer              10
RangeError             10
=====================  =========
"""

from __future__ import annotations


class SpikemapError(ValueError):
    """Base class for all errors raised by spikemap."""

    exit_code: int = 1


class UsageError(SpikemapError):
    """Raised when the command line or a run config is used incorrectly."""

    exit_code = 2


class InvalidConfigError(UsageError):
    """Raised when an invalid YAML run configuration is encountered."""


class ParseError(SpikemapError):
    """Raised when a model manifest is malformed."""

    exit_code = 3


class ShapeError(SpikemapError):
    """Raised when layer shapes are inconsistent."""

    exit_code = 4


class UnsupportedKind(SpikemapError):  # noqa: N818
    """Raised when a layer kind cannot take part in an operation."""

    exit_code = 4


class BlobError(SpikemapError):
    """Raised when a weight reference points outside the weight blob."""

    exit_code = 5


class PartitionError(SpikemapError):
    """Raised when partitions do not tile their layers."""

    exit_code = 6


class NoFeasiblePartition(PartitionError):  # noqa: N818
    """Raised when no grid split of a layer satisfies the neuron bound."""


class InfeasibleNetwork(PartitionError):  # noqa: N818
    """Raised when every candidate at some layer violates a hard constraint."""


class CapacityError(SpikemapError):
    """Raised when a network does not fit on the configured chips."""

    exit_code = 7


class MapError(SpikemapError):
    """Raised when a layer cannot be mapped onto its cores."""

    exit_code = 8


class IntegrityError(MapError):
    """Raised when a deployment image contains a dangling reference."""


class VersionError(SpikemapError):
    """Raised when a deployment image has an unknown format version."""

    exit_code = 9


class NormalizationError(SpikemapError):
    """Base class for parameter normalization errors."""

    exit_code = 10


class DegenerateWeights(NormalizationError):  # noqa: N818
    """Raised when a weight tensor has zero scale."""


class EmptyCalibration(NormalizationError):  # noqa: N818
    """Raised when the calibration batch holds no samples."""


class DeadLayer(NormalizationError):  # noqa: N818
    """Raised when a layer never receives positive net input during calibration."""


class RangeError(NormalizationError):
    """Raised when an integer cannot be expressed as mantissa and exponent."""
