"""Kernel backend selection.

The compiled Cython extension is preferred when it imported cleanly; the
NumPy implementation is the fallback. ``EMOADAPT_BACKEND`` forces a choice:
``compiled``, ``python``, or ``auto`` (default).
"""

from __future__ import annotations

import os

from . import python_backend

_requested = os.environ.get("EMOADAPT_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "python"):
    raise RuntimeError(
        f"EMOADAPT_BACKEND must be auto, compiled or python, got {_requested!r}"
    )

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _ckernels as _compiled  # type: ignore[no-redef]
    except ImportError:
        if _requested == "compiled":
            raise RuntimeError(
                "EMOADAPT_BACKEND=compiled but the extension is not built; "
                "run: pip install -e . (or python setup.py build_ext --inplace)"
            ) from None

_active = _compiled if _compiled is not None else python_backend

ACTIVE_BACKEND: str = _active.name

conv2d_forward = _active.conv2d_forward
conv2d_backward = _active.conv2d_backward
maxpool2d_forward = _active.maxpool2d_forward
maxpool2d_backward = _active.maxpool2d_backward


def available_backends() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get_backend(name: str):
    """Return a backend module by name (for tests and benchmarks)."""
    if name == "python":
        return python_backend
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled backend is not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
