"""Hot loops, backed by the compiled extension when it is importable.

Set ``KGLINK_PURE_PYTHON=1`` before import to force the NumPy versions.
``BACKEND`` names the implementation in use.
"""
import os

from . import _fallback

python_impl = _fallback
compiled_impl = None
if os.environ.get("KGLINK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as compiled_impl
    except ImportError:  # extension not built
        compiled_impl = None

_impl = compiled_impl if compiled_impl is not None else python_impl
BACKEND = "cython" if compiled_impl is not None else "python"

walk_step = _impl.walk_step
transe_margin_epoch = _impl.transe_margin_epoch
