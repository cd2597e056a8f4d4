"""Backend selection for the hot kernels.

The compiled extension is used when it imports; ``CCA_BACKEND=python`` forces
the pure-Python twin.  Both produce identical results.
"""

from __future__ import annotations

import os

from . import _pycore

python_backend = _pycore

try:
    from . import _ccore as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if os.environ.get("CCA_BACKEND", "").lower() == "python" or compiled_backend is None:
    backend = _pycore
else:
    backend = compiled_backend

BACKEND_NAME = "compiled" if backend is compiled_backend else "python"

im2col = backend.im2col
col2im = backend.col2im
rc_encode = backend.rc_encode
rc_decode = backend.rc_decode
fnv1a64 = backend.fnv1a64
