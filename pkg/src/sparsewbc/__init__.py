"""Sparse analytical whole-body motion/force control for floating-base robots."""
from .errors import SparseWBCError
from .options import SolverOptions

__version__ = "0.1.0"
__all__ = ["SparseWBCError", "SolverOptions", "__version__"]
