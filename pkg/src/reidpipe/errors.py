"""Exception hierarchy shared across the pipeline.

Every pipeline failure raises a subclass of :class:`ReidError`, so batch
callers (the CLI in particular) can catch one base class and report the
error name.
"""


class ReidError(Exception):
    """Base class for all pipeline errors."""


class NotFound(ReidError):
    """A dataset root or required directory does not exist."""


class MalformedSequence(ReidError):
    """A sequence directory violates the frame-sequence invariants."""

    def __init__(self, person, camera, reason=""):
        self.person = person
        self.camera = camera
        msg = f"sequence (person={person!r}, camera={camera!r})"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DecodeError(ReidError):
    """An image file could not be decoded."""

    def __init__(self, path, reason=""):
        self.path = str(path)
        super().__init__(f"{path}: {reason}" if reason else str(path))


class SignalTooShort(ReidError):
    """The motion-energy signal is too short to regularize."""


class NoCycleFound(ReidError):
    """No max/min extrema pair exists in the regulated signal."""


class InsufficientFrames(ReidError):
    """A sampling strategy asked for more frames than are available."""


class EmptyPool(ReidError):
    """Pooling was attempted over an empty feature list."""


class DimMismatch(ReidError):
    """Vector or matrix dimensions do not agree."""


class FormatError(ReidError):
    """A binary file does not match its declared on-disk format."""


class CrcMismatch(FormatError):
    """A stored checksum does not match the file contents."""


class InsufficientPairs(ReidError):
    """Metric learning requires nonempty similar and dissimilar pair sets."""


class SingularCovariance(ReidError):
    """A pair covariance matrix is singular even after regularization."""


class EmptySet(ReidError):
    """A set-to-set distance was requested for an empty descriptor set."""


class TooFewIdentities(ReidError):
    """Fewer than two identities are available for splitting."""


class MissingGalleryEntry(ReidError):
    """A query identity has no descriptors in the gallery camera."""


class RankReducedWarning(UserWarning):
    """PCA target dimension was reduced to the data rank."""

    def __init__(self, p_effective):
        self.p_effective = p_effective
        super().__init__(f"target dimension reduced to data rank {p_effective}")
