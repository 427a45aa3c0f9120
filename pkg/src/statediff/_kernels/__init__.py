"""Hot numerical kernels with a compiled core and a numpy fallback.

The dense-network forward/backward passes and the optimizer update sit in
the innermost training loop, so they are implemented twice: once in Cython
(``_compiled``) and once in plain numpy (``_numpy``).  The compiled module
is preferred when the extension built; set ``STATEDIFF_BACKEND=numpy`` or
``=compiled`` to force a choice.  Both backends expose the same functions
and are cross-checked in the test suite; ``benchmarks/bench_kernels.py``
compares their speed.

Within one backend all results are bit-reproducible; across backends they
agree to floating-point roundoff (summation order differs).
"""

import os

_requested = os.environ.get("STATEDIFF_BACKEND", "")

if _requested == "numpy":
    from . import _numpy as _impl

    BACKEND = "numpy"
elif _requested == "compiled":
    from . import _compiled as _impl

    BACKEND = "compiled"
elif _requested:
    raise ImportError(f"STATEDIFF_BACKEND={_requested!r} is not 'numpy' or 'compiled'")
else:
    try:
        from . import _compiled as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _numpy as _impl

        BACKEND = "numpy"

ACT_RELU = 0
ACT_MISH = 1

mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
adam_update = _impl.adam_update
