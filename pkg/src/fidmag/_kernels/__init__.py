"""Hot per-sample kernels with a compiled core and a NumPy fallback.

The compiled extension (``_fidcore``, Cython) fuses the per-sample level
arithmetic, phase integration and record quantisation loops that dominate
acquisition-scale synthesis (5 MSa/s x seconds x hundreds of trials).  When the
extension is missing the pure-NumPy implementation in ``_purepy`` is
selected; results agree to floating-point rounding (see tests and
``benchmarks/bench_kernels.py``).

Set ``FIDMAG_BACKEND=python`` to force the fallback.
"""

import os

_forced = os.environ.get("FIDMAG_BACKEND", "").strip().lower()

if _forced in ("python", "purepy", "numpy"):
    from . import _purepy as impl

    BACKEND = "python"
elif _forced in ("cython", "compiled", "c"):
    from . import _fidcore as impl  # hard import: fail loudly when forced

    BACKEND = "cython"
else:
    try:
        from . import _fidcore as impl

        BACKEND = "cython"
    except ImportError:
        from . import _purepy as impl

        BACKEND = "python"

__all__ = ["impl", "BACKEND"]
