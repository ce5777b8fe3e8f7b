"""Backend selection for the training kernels.

Two implementations of the same epoch-level contract exist:

  numba_kernels  -- @njit-compiled fused loops (default when numba imports)
  numpy_kernels  -- pure-numpy reference implementation

Set GRANLAB_BACKEND=numpy or GRANLAB_BACKEND=numba to force one. The two
backends agree to floating-point rounding; benchmarks/backend_bench.py
compares their throughput.
"""

import os

ENV_VAR = "GRANLAB_BACKEND"


def available_backends():
    names = ["numpy"]
    try:
        import numba  # noqa: F401

        names.insert(0, "numba")
    except ImportError:
        pass
    return names


def get_kernels(name: str | None = None):
    """Return the kernel module selected by argument, env var, or default."""
    choice = name or os.environ.get(ENV_VAR, "").strip().lower()
    if choice not in ("", "numpy", "numba"):
        raise ValueError(f"{ENV_VAR} must be 'numpy' or 'numba', got {choice!r}")
    if choice == "numpy":
        from . import numpy_kernels

        return numpy_kernels
    if choice == "numba":
        from . import numba_kernels

        return numba_kernels
    try:
        from . import numba_kernels

        return numba_kernels
    except ImportError:
        from . import numpy_kernels

        return numpy_kernels
