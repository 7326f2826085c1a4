"""Import-time selection of the compute kernel backend.

The compiled Cython core is preferred; the pure-Python fallback is
bit-compatible but much slower. Set POSEREL_BACKEND=python (or =compiled)
to force a specific backend, e.g. for the benchmark script.
"""

from __future__ import annotations

import os

_forced = os.environ.get("POSEREL_BACKEND", "").strip().lower()

if _forced == "python":
    from poserel import _corepy as kernels
    _BACKEND_NAME = "python"
elif _forced == "compiled":
    from poserel import _core as kernels  # ImportError here means it was never built
    _BACKEND_NAME = "compiled"
elif _forced:
    raise ValueError(f"POSEREL_BACKEND must be 'python' or 'compiled', got {_forced!r}")
else:
    try:
        from poserel import _core as kernels
        _BACKEND_NAME = "compiled"
    except ImportError:
        from poserel import _corepy as kernels
        _BACKEND_NAME = "python"


def active_backend() -> str:
    """Name of the kernel backend selected at import: 'compiled' or 'python'."""
    return _BACKEND_NAME
