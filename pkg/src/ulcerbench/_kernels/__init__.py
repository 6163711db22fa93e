"""Hot-kernel backend selection.

The compiled Cython backend is preferred when its extension module built;
otherwise the NumPy/pure-Python fallback is used.  Set the environment
variable ``ULCERBENCH_KERNELS`` to ``python`` or ``c`` before import to force
a backend (``c`` raises if the extension is unavailable).

The active backend is fixed at import time, so a given process always
produces the same bytes for the same inputs.
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built on this install
    _ckernels = None


def available_backends() -> dict:
    """Name -> module for every backend importable in this environment."""
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["c"] = _ckernels
    return backends


_forced = os.environ.get("ULCERBENCH_KERNELS", "").strip().lower()
if _forced == "python":
    _impl = _pykernels
elif _forced == "c":
    if _ckernels is None:
        raise ImportError(
            "ULCERBENCH_KERNELS=c but the compiled kernels are not installed"
        )
    _impl = _ckernels
elif _forced:
    raise ImportError(f"unknown ULCERBENCH_KERNELS value: {_forced!r}")
else:
    _impl = _ckernels if _ckernels is not None else _pykernels

BACKEND = _impl.NAME

label_components = _impl.label_components
overlap_sums = _impl.overlap_sums
focal_value_grad = _impl.focal_value_grad


def use_backend(name: str) -> None:
    """Rebind the kernel functions to a specific backend.

    Benchmarking/testing hook; regular code should rely on the import-time
    selection so a process never mixes backends mid-run.
    """
    impl = available_backends()[name]
    global BACKEND, label_components, overlap_sums, focal_value_grad
    BACKEND = impl.NAME
    label_components = impl.label_components
    overlap_sums = impl.overlap_sums
    focal_value_grad = impl.focal_value_grad
