"""Hot kernel for the brute-force divergence search.

Prefers the compiled Cython extension; falls back to the pure-Python
implementation when the extension is unavailable.  Both expose the same
``min_objective_grid`` contract and produce identical results.
"""

from ._grid_py import leaf_overlap
from ._grid_py import min_objective_grid as _py_impl

try:
    from ._grid_cy import min_objective_grid as _cy_impl

    IMPLEMENTATION = "cython"
    min_objective_grid = _cy_impl
except ImportError:  # pragma: no cover - depends on the build
    _cy_impl = None
    IMPLEMENTATION = "python"
    min_objective_grid = _py_impl


def available_implementations():
    """Name-to-function map of every usable kernel, for benchmarks/tests."""
    impls = {"python": _py_impl}
    if _cy_impl is not None:
        impls["cython"] = _cy_impl
    return impls


__all__ = [
    "min_objective_grid",
    "leaf_overlap",
    "available_implementations",
    "IMPLEMENTATION",
]
