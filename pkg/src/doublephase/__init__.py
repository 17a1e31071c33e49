"""Double phase Dirichlet solver, DN-map synthesis, and coefficient
reconstruction from boundary data."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
