"""Kernel backend selection.

The compiled extension (``_core``) is preferred; the pure-Python module
(``_pure``) is a bit-identical fallback used when the extension is missing
or when ``PBRGEN_PURE_PYTHON=1`` is set. ``pbrgen bench-kernels`` compares
their throughput.
"""

import os

if os.environ.get("PBRGEN_PURE_PYTHON", "") == "1":
    from . import _pure as impl
    BACKEND = "pure"
else:
    try:
        from . import _core as impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        from . import _pure as impl
        BACKEND = "pure"

intersect_rays = impl.intersect_rays
occluded_rays = impl.occluded_rays
render_path_rows = impl.render_path_rows


def get_backend(name: str):
    """Return a specific kernel module ("compiled" or "pure"), or None."""
    if name == "pure":
        from . import _pure
        return _pure
    if name == "compiled":
        try:
            from . import _core  # type: ignore[attr-defined]
            return _core
        except ImportError:
            return None
    raise ValueError(f"unknown kernel backend '{name}'")
