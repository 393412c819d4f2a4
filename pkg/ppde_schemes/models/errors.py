"""Base exceptions for the package."""

from __future__ import annotations


class PPDEError(Exception):
    """Any error raised by the PPDE solver package."""


class ConfigError(PPDEError, ValueError):
    """A run configuration or a registry reference is invalid."""


class RegistryError(ConfigError):
    """A registry name does not resolve."""
