"""Numerical kernels: compiled Cython core with a pure-Python fallback.

The two backends expose the same functions (rhs, jac, flow_to, flow_sampled,
flow_var, lyap_run) with identical semantics; the compiled one is selected at
import when available.  Set AMOCBOX_BACKEND=python (or =compiled) to force a
choice; see benchmarks/bench_backends.py for the speed comparison.
"""

import os

from . import _fallback

_requested = os.environ.get("AMOCBOX_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _fallback
        BACKEND = "python"

if _requested not in ("", "python", "compiled"):
    raise RuntimeError(f"unknown AMOCBOX_BACKEND {_requested!r}")

# integration status codes shared by both backends
OK = 0
MAX_STEPS_EXHAUSTED = 1
NONFINITE = 2


def get_backend():
    return _impl


def backend_name() -> str:
    return BACKEND
