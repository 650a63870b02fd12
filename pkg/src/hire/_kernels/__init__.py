"""Hot inner loops, compiled when available.

The Cython extension ``_ckernels`` is preferred. Setting ``HIRE_KERNELS=python``
forces the NumPy fallback; ``BACKEND`` reports which one was loaded.
"""

import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("HIRE_KERNELS", "").lower() == "python":
    compiled_backend = None
else:
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if _active is compiled_backend else "python"

softmax_rows = _active.softmax_rows
softmax_rows_backward = _active.softmax_rows_backward
scatter_add_rows = _active.scatter_add_rows
