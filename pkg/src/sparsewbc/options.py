"""Numerical tolerances and controller switches shared by the solvers."""
from __future__ import annotations

from dataclasses import dataclass, replace

DEFAULT_RANK_TOL = 1e-9


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and switches for one control tick.

    Attributes
    ----------
    rank_tol : float
        Singular values below ``rank_tol * sigma_max`` count as zero.
    residual_tol : float
        Relative gate for dynamics/least-squares residual checks.
    constraint_tol : float
        Relative gate for ``J_c qdd = c_c``.
    damping : float
        Tikhonov damping for every task level (0 disables it).
    parallel : bool
        Solve the force and motion hierarchies on two threads.
    torque_path : {"rnea", "matrix"}
        How ``M qdd + h`` is evaluated during torque recovery.
    check : bool
        Run the sufficiently-constrained and independence checks in
        ``decompose``.
    """

    rank_tol: float = DEFAULT_RANK_TOL
    residual_tol: float = 1e-8
    constraint_tol: float = 1e-9
    damping: float = 0.0
    parallel: bool = False
    torque_path: str = "rnea"
    check: bool = True

    def with_(self, **changes) -> "SolverOptions":
        return replace(self, **changes)
