"""Hot kernels.  The compiled extension is used when it was built; otherwise
(or with SUPERCORR_PURE_PYTHON=1) the numpy implementation is selected."""
import os

BACKEND = "python"
if os.environ.get("SUPERCORR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._stencil import pair_cheb_step  # noqa: F401
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass
if BACKEND == "python":
    from ._stencil_py import pair_cheb_step  # noqa: F401

from . import _stencil_py as python_backend  # noqa: E402

__all__ = ["BACKEND", "pair_cheb_step", "python_backend"]
