"""Hot numeric kernels with two interchangeable backends.

The numba JIT backend is the default; set ``CONVAGG_BACKEND=numpy`` to
force the pure-numpy path, or ``CONVAGG_BACKEND=numba`` to insist on numba
(raises if it cannot be imported). Both backends implement the same five
functions with identical numerics: float32 storage, float64 accumulation.
``benchmarks/bench_kernels.py`` compares their speed.
"""

import os

_choice = os.environ.get("CONVAGG_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"CONVAGG_BACKEND must be one of auto|numba|numpy, got {_choice!r}"
    )

if _choice == "numpy":
    from . import _numpy as _impl

    _name = "numpy"
else:
    try:
        from . import _numba as _impl

        _name = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        from . import _numpy as _impl

        _name = "numpy"

conv2d = _impl.conv2d
lrn = _impl.lrn
maxpool = _impl.maxpool
dense = _impl.dense
dcd_epoch = _impl.dcd_epoch


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _name
