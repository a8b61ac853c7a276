"""Exception types shared across the package."""


class FaceQAError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(FaceQAError, ValueError):
    """An argument value is outside its documented range."""


class DomainError(FaceQAError, ValueError):
    """An image is in the wrong value domain for the operation."""


class ShapeError(FaceQAError, ValueError):
    """Spatially incompatible inputs."""


class ConfigError(FaceQAError, ValueError):
    """An invalid configuration object or file."""


class DatasetError(FaceQAError, RuntimeError):
    """Dataset-level failure (empty corpus, unusable root)."""


class CheckpointError(FaceQAError, RuntimeError):
    """Checkpoint missing, corrupt, or incompatible."""


class UnsupportedHeadError(FaceQAError, RuntimeError):
    """Operation requires a per-pixel discriminator head."""


class UndefinedCorrelationError(FaceQAError, ArithmeticError):
    """Rank correlation undefined (constant input vector)."""


class TrainingDiverged(FaceQAError, RuntimeError):
    """Non-finite loss encountered; carries the offending batch ids."""

    def __init__(self, message: str, batch_ids=()):
        super().__init__(message)
        self.batch_ids = tuple(batch_ids)
