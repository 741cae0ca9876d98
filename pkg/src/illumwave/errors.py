"""Exception hierarchy shared by all subpackages."""


class IllumWaveError(Exception):
    """Base class for library errors."""


class DomainError(IllumWaveError, ValueError):
    """Input lies outside the domain where a formula or map is defined."""


class InversionError(IllumWaveError, RuntimeError):
    """Coordinate inversion did not converge to an admissible foot point."""


class StencilError(IllumWaveError, ValueError):
    """A finite-difference stencil touched the obstacle or a degenerate ray."""


class InstabilityError(IllumWaveError, RuntimeError):
    """The time stepper produced a non-finite value."""

    def __init__(self, message: str, node: tuple[int, int, int] | None = None):
        super().__init__(message)
        self.node = node


class ConfigError(IllumWaveError, ValueError):
    """Malformed or inconsistent configuration."""


class AuditRefused(IllumWaveError):
    """The inequality audit cannot run on this scene (for example eta0 >= 1)."""


class UncertifiedScene(IllumWaveError):
    """A simulation was requested for a scene whose certificate failed."""
