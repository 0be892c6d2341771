"""Inner-loop kernels, compiled when available.

Set ``INFOGAMES_PURE_PYTHON=1`` to force the reference implementations.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("INFOGAMES_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

# np.convolve beats the compiled loop, so it is used on both backends
causal_convolve = _kernels_py.causal_convolve
fpk_steps = _impl.fpk_steps
kuramoto_rk4 = _impl.kuramoto_rk4
shapley_bankruptcy = _impl.shapley_bankruptcy
hjb_pass_1d = _impl.hjb_pass_1d
fpk_pass_1d = _impl.fpk_pass_1d

__all__ = [
    "BACKEND",
    "causal_convolve",
    "fpk_steps",
    "kuramoto_rk4",
    "shapley_bankruptcy",
    "hjb_pass_1d",
    "fpk_pass_1d",
]
