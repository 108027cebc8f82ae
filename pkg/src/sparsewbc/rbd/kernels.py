"""Kernel selection.

The compiled extension is used when it imports; otherwise the pure-Python
reference takes over.  Set ``SPARSEWBC_PURE_PYTHON=1`` to force the
fallback (tests use :func:`use` to run both).
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # no compiler at install time
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

if os.environ.get("SPARSEWBC_PURE_PYTHON") or _compiled is None:
    active = "python"
else:
    active = "compiled"

_impl = BACKENDS[active]


def use(name: str) -> str:
    """Switch backend at runtime; returns the previously active name."""
    global _impl, active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    previous, active, _impl = active, name, BACKENDS[name]
    return previous


def kinematics(tree, base_R, base_p, qj, v=None, with_acc=False):
    return _impl.kinematics(tree, base_R, base_p, qj, v, with_acc)


def rnea(tree, base_R, qj, v, a, gravity, fext=None):
    return _impl.rnea(tree, base_R, qj, v, a, gravity, fext)


def crba(tree, qj):
    return _impl.crba(tree, qj)
