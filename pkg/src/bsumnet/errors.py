"""Exception types shared across the package."""


class SpecError(ValueError):
    """A network spec, train config, or argument violates its contract."""


class ShapeError(ValueError):
    """Matrix dimensions do not line up."""


class DomainError(ValueError):
    """A loss input (predictions or labels) is outside the valid domain."""


class NonSmoothError(ValueError):
    """A gradient was requested for a non-smooth regularizer (use the prox path)."""


class CurvatureError(RuntimeError):
    """A solver required curvature properties the block does not have."""


class SizeError(ValueError):
    """A dense computation was requested above the desk-scale budget."""


class SingularError(RuntimeError):
    """A linear system that needed solving was singular."""


class IngestError(ValueError):
    """A dataset file could not be parsed; message carries row/column context."""


class ConfigError(ValueError):
    """An experiment config file is malformed or contains unknown keys."""
