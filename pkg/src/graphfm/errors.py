"""Exception types shared across the package."""


class GraphFMError(Exception):
    """Base class for all package errors."""


class ShapeError(GraphFMError):
    """Operands have incompatible shapes or widths."""


class DegenerateMaskError(GraphFMError):
    """An attention mask row permits no keys."""


class InvalidValueError(GraphFMError):
    """A non-finite value was fed into an operation that requires finite input."""


class DeterminismError(GraphFMError):
    """A function expected to be deterministic returned different values."""


class DataError(GraphFMError):
    """A dataset file is malformed, out of range, or inconsistent."""


class ConfigError(GraphFMError):
    """A run configuration is invalid."""


class PlanError(GraphFMError):
    """A bucket plan cannot be constructed from the given inputs."""


class AdapterMismatchError(GraphFMError):
    """Data routed through an adapter belonging to a different dataset."""


class GraphMismatchError(GraphFMError):
    """Latent tokens paired with nodes from a different graph."""


class NumericError(GraphFMError):
    """A numerical routine failed to converge or produced invalid output."""
