"""Hot assembly kernels: compiled core with a pure-numpy fallback.

The Cython extension is tried first unless ``DOUBLEPHASE_FORCE_NUMPY`` is
set; ``BACKEND`` records which implementation is active.  Both backends
implement the same three functions with identical semantics (see
``numpy_backend`` for the contract); ``benchmarks/bench_kernels.py``
compares them.
"""

import os

from . import numpy_backend

BACKEND = "numpy"
_impl = numpy_backend

if not os.environ.get("DOUBLEPHASE_FORCE_NUMPY"):
    try:
        from . import _speedups  # noqa: F401

        BACKEND = "compiled"
        _impl = _speedups
    except ImportError:
        pass


def element_gradients(grad_ops, triangles, values):
    return _impl.element_gradients(grad_ops, triangles, values)


def double_phase_system(grad_ops, shape_products, triangles, area, a_elem,
                        values, p, q, delta, hess_floor, want_hess, n_nodes):
    return _impl.double_phase_system(grad_ops, shape_products, triangles,
                                     area, a_elem, values, p, q, delta,
                                     hess_floor, want_hess, n_nodes)


def varcoef_system(grad_ops, triangles, area, a_mat, f_elem, n_nodes):
    return _impl.varcoef_system(grad_ops, triangles, area, a_mat, f_elem,
                                n_nodes)
