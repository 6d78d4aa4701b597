"""Backend selection for the hot grid kernel.

The compiled extension ``heatbath._core`` is used when it was built; set
``HEATBATH_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
deposit_project = _kernels_py.deposit_project

if not os.environ.get("HEATBATH_PURE_PYTHON"):
    try:
        from ._core import deposit_project  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def backends():
    """Mapping of every importable backend name to its ``deposit_project``."""
    out = {"python": _kernels_py.deposit_project}
    try:
        from ._core import deposit_project as compiled
        out["cython"] = compiled
    except ImportError:
        pass
    return out
