"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise, or
when ``COAPOOL_PURE_PYTHON=1`` is set, the numpy fallback in ``_kernels_py``
is used. ``BACKEND`` names the active one.
"""
import os

from . import _kernels_py

GENOME_DTYPE = "intc"

if os.environ.get("COAPOOL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"

distance_matrix = _impl.distance_matrix
mst_weight = _impl.mst_weight
population_fitness = _impl.population_fitness
repair = _impl.repair
repair_population = _impl.repair_population
exact_sequence = _impl.exact_sequence


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"compiled"``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
