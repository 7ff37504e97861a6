"""Kernel backend selection.

The compiled extension is preferred; the pure-Python module is used when it
is missing or when ``FNTLAB_PURE_PYTHON=1`` is set in the environment.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("FNTLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

transducer_fwd_bwd = _impl.transducer_fwd_bwd
levenshtein_counts = _impl.levenshtein_counts

__all__ = ["BACKEND", "transducer_fwd_bwd", "levenshtein_counts"]
