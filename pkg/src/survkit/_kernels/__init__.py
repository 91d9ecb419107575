"""Hot kernels with a compiled backend and a NumPy fallback.

The compiled extension is used when it imports; set ``SURVKIT_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""
import os

from . import _pure

if os.environ.get("SURVKIT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "python"

cox_loglik_grad = _impl.cox_loglik_grad
cox_newton_terms = _impl.cox_newton_terms
concordance_counts = _impl.concordance_counts
relief_accumulate = _impl.relief_accumulate

__all__ = [
    "BACKEND",
    "cox_loglik_grad",
    "cox_newton_terms",
    "concordance_counts",
    "relief_accumulate",
]
