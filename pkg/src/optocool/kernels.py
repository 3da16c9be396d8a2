"""Backend selection for the hot kernels.

The compiled extension is used when importable; setting ``OPTOCOOL_PURE_PYTHON=1``
forces the NumPy fallback.
"""
import os

from . import _fallback

python_backend = _fallback

if os.environ.get("OPTOCOOL_PURE_PYTHON"):
    compiled_backend = None
else:
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if backend is compiled_backend else "python"

dopri_linear = backend.dopri_linear
lindblad_rhs = backend.lindblad_rhs
lindblad_rk4 = backend.lindblad_rk4
