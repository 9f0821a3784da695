"""Converter hooks for foreign scene repositories.

The engine consumes its own documented scene format only; adapting an
external repository means writing a converter that emits Scene objects (or
.scene files) from the foreign source. Register implementations here so the
CLI and pipeline can discover them by name.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Protocol

from .scene import Scene


class SceneConverter(Protocol):
    """Adapter from a foreign scene repository entry to a Scene."""

    def convert(self, source: Path) -> Scene:
        """Parse one foreign scene file/directory into a validated Scene."""
        ...


_CONVERTERS: dict[str, Callable[[], SceneConverter]] = {}


def register_converter(name: str, factory: Callable[[], SceneConverter]) -> None:
    if name in _CONVERTERS:
        raise ValueError(f"converter '{name}' already registered")
    _CONVERTERS[name] = factory


def get_converter(name: str) -> SceneConverter:
    try:
        return _CONVERTERS[name]()
    except KeyError:
        raise KeyError(f"no converter registered under '{name}'; "
                       f"known: {sorted(_CONVERTERS)}") from None
