"""Exception and warning types shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class UninitializedField(EngineError):
    """A field was evaluated before weights/tables/scene were attached."""


class NonUnitDirection(EngineError, ValueError):
    """A direction argument was not unit length within tolerance."""


class DimensionMismatch(EngineError, ValueError):
    """Operands disagree on D, shape, or image dimensions."""


class ParseError(EngineError, ValueError):
    """A file or message failed structural validation."""


class MissingField(ParseError):
    """A required key is absent from a manifest or config."""


class VersionMismatch(ParseError):
    """A container declares an unsupported format version."""


class DegenerateAabb(EngineError, ValueError):
    """Bounding box with min >= max on some axis."""


class SizeGuardExceeded(EngineError, ValueError):
    """Problem size exceeds a guard meant to keep dense math tractable."""

class InvalidSparsity(EngineError, ValueError):
    """Sparsity fraction outside [0, 1] or non-positive size inputs."""


class TooSmall(EngineError, ValueError):
    """Volume too small for the requested downsampling."""


class EmptyMesh(EngineError, ValueError):
    """BVH construction over a mesh with no triangles."""


class OutOfImage(EngineError, ValueError):
    """Pixel coordinates outside the camera's image rectangle."""


class RankDeficiencyWarning(UserWarning):
    """A normal-equations solve was near singular; ridge damping took over."""


class CameraWarning(UserWarning):
    """Camera rotation block deviates from orthonormality."""
