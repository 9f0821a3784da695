"""Exception and warning types shared across the package."""


class PbrgenError(Exception):
    """Base class for all pbrgen errors."""


class SceneFormatError(PbrgenError):
    """Scene file failed to parse or violates the documented schema."""


class DanglingReferenceError(SceneFormatError):
    """A node/mesh/material reference does not resolve. Names the entity."""


class InvalidTransformError(SceneFormatError):
    """A node transform is non-invertible or malformed. Names the node."""


class ConfigError(PbrgenError):
    """Invalid configuration value."""


class MissingUpstreamError(PbrgenError):
    """A pipeline stage was run before its inputs exist."""


class BundleError(PbrgenError):
    """A frame bundle directory is missing channels or inconsistent."""


class EvalError(PbrgenError):
    """Invalid input to an evaluation metric."""


class SceneWarning(UserWarning):
    """Non-fatal scene issue (e.g. unknown category mapped to 'unknown')."""
