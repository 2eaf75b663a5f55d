"""Hot-kernel backend selection.

The compiled extension is preferred when it was built; the NumPy fallback is
always available. Set ``LOCPLAN_NO_NATIVE=1`` to force the fallback (used by
the backend-equivalence tests and the benchmark).
"""

import os

from . import _numpy as numpy_backend

try:
    from . import _native as native_backend
except ImportError:  # extension not built
    native_backend = None

if native_backend is not None and not os.environ.get("LOCPLAN_NO_NATIVE"):
    _active = native_backend
    BACKEND = "native"
else:
    _active = numpy_backend
    BACKEND = "numpy"

BEHIND_RNORM = numpy_backend.BEHIND_RNORM

visibility = _active.visibility
residual_norms = _active.residual_norms
gn_accumulate = _active.gn_accumulate


def available_backends():
    names = ["numpy"]
    if native_backend is not None:
        names.insert(0, "native")
    return names
