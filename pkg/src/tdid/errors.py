"""Exception hierarchy shared by all tdid modules."""


class TdidError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateVector(TdidError):
    """A vector with (near-)zero norm cannot be normalized or compared."""


class EmptyPrototype(TdidError):
    """An object prototype must keep at least one raw embedding."""


class DimensionMismatch(TdidError):
    """Embedding/matrix dimensions are inconsistent."""


class NoDetection(TdidError):
    """The detector returned nothing above the confidence floor."""


class EmptyCrop(TdidError):
    """A crop box clamped to the image has zero area."""


class TooManyClasses(TdidError):
    """Mock world cannot host more orthonormal class latents than dims."""


class FormatError(TdidError):
    """A file does not conform to its declared format or invariants."""


class VersionError(FormatError):
    """A file declares an unsupported format version."""


class IoError(TdidError):
    """Underlying I/O failure while reading or writing an artifact."""


class InsufficientSamples(TdidError):
    """Too few rows to estimate statistics."""


class EigenFailure(TdidError):
    """Symmetric eigendecomposition did not converge."""


class BackendFailure(TdidError):
    """A backend call failed (missing export file, bad response, ...)."""


class EmptyStore(TdidError):
    """Operation requires a prototype store with at least one object."""


class UnknownObject(TdidError):
    """Referenced object id is not present in the store."""


class EmptyTrainSet(TdidError):
    """A label has no eligible training images after filtering."""


class InsufficientExamples(TdidError):
    """An episode asks for more examples than a label provides."""


class EmptyTestSet(TdidError):
    """An episode has no test images to evaluate."""


class DegenerateClustering(TdidError):
    """Silhouette needs at least two clusters."""
