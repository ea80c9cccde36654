from __future__ import annotations


class DTNetError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(DTNetError, ValueError):
    """Illegal architectural choice, channel mismatch or unknown name."""


class ShapeError(DTNetError, ValueError):
    """Input tensors/arrays do not satisfy a shape contract."""


class DegenerateInputError(ShapeError):
    """Spatial size too small for the requested operation."""


class DivergenceError(DTNetError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, diagnostic: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostic = diagnostic or {}
