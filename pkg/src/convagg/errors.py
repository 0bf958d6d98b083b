"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Array shape or dimension does not match what an operation expects."""


class ContainerError(ValueError):
    """Malformed tensor container stream."""


class ChecksumMismatchError(ContainerError):
    """Container payload does not match its trailing CRC-32."""


class ContainerVersionError(ContainerError):
    """Container declares a format version this reader does not implement."""


class ManifestError(ValueError):
    """Malformed dataset manifest."""


class MissingArtifactError(RuntimeError):
    """A pipeline stage needs upstream artifacts that are not in the cache."""


class StaleCacheError(RuntimeError):
    """Cached artifact metadata does not match the current configuration."""


class DegenerateClassWarning(UserWarning):
    """A one-vs-all class had only one label value and was skipped."""
