"""Exception hierarchy shared across the pipeline."""


class ForgeError(Exception):
    """Base class for all rsforge errors."""


# --- raster / georeferencing ---

class UnreadableImageError(ForgeError):
    """Image file missing or not decodable."""


class MalformedWorldFileError(ForgeError):
    """World file does not consist of 6 numeric lines."""


class SingularTransformError(ForgeError):
    """Affine geotransform has zero determinant and cannot be inverted."""


class WindowOutOfBoundsError(ForgeError):
    """Requested pixel window does not lie inside the raster."""


class UnknownClassIdError(ForgeError):
    """Land-cover pixel id outside the configured class range."""


class CrsMismatchError(ForgeError):
    """Rasters carry different crs tags and cannot be aligned."""


class NoOverlapError(ForgeError):
    """Rasters do not overlap spatially."""


# --- segmentation / proposals ---

class EmptyPatchError(ForgeError):
    """Operation requires a non-empty pixel patch."""


class NonPositiveParameterError(ForgeError):
    """Segmentation parameter outside its valid range."""


class DimensionMismatchError(ForgeError):
    """Label map and patch dimensions disagree."""


# --- sampling ---

class InvalidHistogramError(ForgeError):
    """Class histogram entries invalid or do not sum to 1."""


class MalformedXmlError(ForgeError):
    """OSM document is not well-formed XML."""


class UnsupportedVersionError(ForgeError):
    """OSM document declares an unsupported schema version."""


class RuleTableError(ForgeError):
    """Rule table file malformed or names an unknown category."""


# --- manifests ---

class TaxonomyOverlapError(ForgeError):
    """Two manifests share category ids and cannot be merged."""


class EmptyNaturalClassError(ForgeError):
    """A natural class in the manifest taxonomy has no samples."""


class ManifestFormatError(ForgeError):
    """Manifest file missing header or has malformed records."""


# --- training ---

class ImageTooSmallError(ForgeError):
    """Image smaller than the output side at the minimum crop scale."""


class ShapeMismatchError(ForgeError):
    """Tensor shape incompatible with the operation."""


class NonFiniteActivationError(ForgeError):
    """NaN or Inf encountered at an op boundary."""


class ZeroNormEmbeddingError(ForgeError):
    """Projection row with vanishing norm; cosine similarity undefined."""


class InsufficientDataError(ForgeError):
    """Training corpus smaller than one batch."""


class InvalidFreezeSpecError(ForgeError):
    """Freeze specification does not select a prefix of encoder layers."""


# --- evaluation ---

class InsufficientShotsError(ForgeError):
    """A class has fewer labeled samples than the requested shot count."""


class LengthMismatchError(ForgeError):
    """Prediction and label vectors differ in length."""


class EmptyEvaluationError(ForgeError):
    """Evaluation called on an empty prediction set."""


class MissingCheckpointError(ForgeError):
    """Referenced checkpoint file does not exist."""


class CheckpointFormatError(ForgeError):
    """Checkpoint bytes do not match the expected layout."""


class ConfigError(ForgeError):
    """Configuration file or override is malformed or out of range."""
