"""Pick the stepping kernel at import time.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``LANGEVIN_GIBBS_PURE`` is set to a non-empty value
other than ``0``, the NumPy kernel is used.
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_force_pure = os.environ.get("LANGEVIN_GIBBS_PURE", "") not in ("", "0")

KERNELS = {"numpy": _fallback.advance}
if _compiled is not None:
    KERNELS["cython"] = _compiled.advance

BACKEND = "numpy" if (_force_pure or _compiled is None) else "cython"


def get_kernel(name=None):
    name = BACKEND if name is None else name
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(KERNELS)}") from None
