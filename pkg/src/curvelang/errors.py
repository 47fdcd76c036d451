"""Exception hierarchy shared across the package."""


class CurvelangError(Exception):
    """Base class for all package-specific errors."""


class DegreeTooHigh(CurvelangError):
    """Spline degree exceeds what the control-point count admits."""


class OutOfRange(CurvelangError):
    """Curve index outside [0, 1]."""


class LengthTooShort(CurvelangError):
    """Sequence length below the minimum of 2."""


class LengthOutOfRange(CurvelangError):
    """Sequence length outside the cached range."""


class NumericalFailure(CurvelangError):
    """A numerical routine (SVD, eigensolver) failed to converge."""


class ShapeMismatch(CurvelangError):
    """Operands do not conform."""


class NonFinite(CurvelangError):
    """A NaN or infinity appeared where finite values are required."""


class NotScalar(CurvelangError):
    """Backward pass requested from a non-scalar tensor."""


class StepOutOfRange(CurvelangError):
    """Diffusion step index outside {1..T} (or reverse-step count invalid)."""


class NotUnitNorm(CurvelangError):
    """Embedding columns must lie on the unit sphere."""


class DegenerateDistribution(CurvelangError):
    """A probability table has zero mass where positive mass is required."""


class TooFewSamples(CurvelangError):
    """Statistic needs at least two samples."""


class IoError(CurvelangError):
    """File could not be read or written."""


class EmptyCorpus(CurvelangError):
    """Corpus file yielded no usable sequences."""


class CheckpointVersionMismatch(CurvelangError):
    """Checkpoint container has an unknown magic or format version."""


class ConfigError(CurvelangError):
    """Run configuration is malformed or inconsistent."""
