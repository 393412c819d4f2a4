"""Shared models."""

from __future__ import annotations

from .enums import StrEnum
from .errors import ConfigError, PPDEError, RegistryError

__all__ = ("ConfigError", "PPDEError", "RegistryError", "StrEnum")
