"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension is picked at import when it is available. Set
``RESP3D_KERNELS=python`` (or ``cython``) to force one, or call
:func:`use_backend` at runtime.
"""

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Switch the active kernel module; returns the previous backend name."""
    global impl, BACKEND
    if name == "auto":
        name = "cython" if "cython" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}")
    previous = BACKEND
    impl, BACKEND = _BACKENDS[name], name
    return previous


BACKEND = "python"
impl = _pykernels
use_backend(os.environ.get("RESP3D_KERNELS", "auto"))
