"""Lexicographic least squares by sequential nullspace projection.

Levels are minimized in priority order; each level only searches the
nullspace left by all previous ones.  What remains after the last level is
resolved by taking the minimum-norm solution.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby

import numpy as np

from .errors import DimensionError
from .matdecomp import rank_reveal
from .options import DEFAULT_RANK_TOL

KINDS = ("motion", "force", "generic")


@dataclass(frozen=True)
class TaskLevel:
    """One objective ``||A y - a||^2``.

    Attributes
    ----------
    A : (m, dim) ndarray
    a : (m,) ndarray
    priority : int
        0 is the highest priority.  Levels with equal priority are stacked
        into a single objective.
    kind : {"motion", "force", "generic"}
        Which variable the level is written over: ``qdd``, ``f_f`` or any.
    name : str
    scale : float, optional
        Magnitude that rank decisions are relative to; defaults to the
        Frobenius norm of `A`.  Solvers that substitute a parameterization
        into a level pass the norm of the original matrix here.
    """

    A: np.ndarray
    a: np.ndarray
    priority: int = 0
    kind: str = "generic"
    name: str = ""
    scale: float | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A[None, :] if A.size else A.reshape(0, 0)
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if A.ndim != 2 or a.shape != (A.shape[0],):
            raise DimensionError(f"level {self.name!r}: A {A.shape} and a {a.shape} disagree")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", a)
        if self.scale is None:
            object.__setattr__(self, "scale", float(np.linalg.norm(A)))

    def substitute(self, T, y0, name=None) -> "TaskLevel":
        """The same objective over ``w`` where ``y = y0 + T w``."""
        return TaskLevel(self.A @ T, self.a - self.A @ y0, self.priority, "generic", name or self.name, self.scale)

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass
class LexResult:
    z: np.ndarray
    residuals: list  # ||A_i z - a_i|| per input level, input order
    nullity: int  # dimension of the unresolved nullspace after the last level


def _merged(levels):
    ordered = sorted(levels, key=lambda lv: lv.priority)
    for _, group in groupby(ordered, key=lambda lv: lv.priority):
        group = list(group)
        if len(group) == 1:
            yield group[0].A, group[0].a, group[0].scale
        else:
            scale = float(np.sqrt(sum(g.scale**2 for g in group)))
            yield np.vstack([g.A for g in group]), np.concatenate([g.a for g in group]), scale


def _damped_solve(dec, r, damping):
    k = dec.rank
    s = dec.singular_values[:k]
    return dec.row_basis @ ((s / (s * s + damping * damping)) * (dec.range_basis.T @ r))


def lex_solve(levels, dim: int, tol: float = DEFAULT_RANK_TOL, damping: float = 0.0) -> LexResult:
    """Minimum-norm lexicographic optimum of a cascade of least-squares levels.

    Parameters
    ----------
    levels : sequence of TaskLevel
        Any order; they are sorted by priority (stable) and equal priorities
        are merged.
    dim : int
        Number of unknowns.
    tol : float
        Rank cutoff for each projected level ``A_i N_{i-1}``, relative to
        the level's ``scale`` (or the largest singular value, if bigger).
    damping : float
        Tikhonov damping applied to every level (0 for exact solves).  The
        nullspace passed down is unaffected by damping.

    Raises
    ------
    DimensionError
        If a level does not have `dim` columns.
    """
    levels = list(levels)
    for lv in levels:
        if lv.A.shape[1] != dim and lv.rows:
            raise DimensionError(f"level {lv.name!r} has {lv.A.shape[1]} columns, expected {dim}")
    z = np.zeros(dim)
    N = None  # None stands for the identity
    for A, a, scale in _merged(levels):
        if A.shape[0] == 0:
            continue
        if N is not None and N.shape[1] == 0:
            break
        B = A if N is None else A @ N
        dec = rank_reveal(B, tol, scale=scale)
        r = a - A @ z
        w = dec.solve(r) if damping == 0 else _damped_solve(dec, r, damping)
        z = z + (w if N is None else N @ w)
        N = dec.null_basis if N is None else N @ dec.null_basis
    residuals = [float(np.linalg.norm(lv.A @ z - lv.a)) if lv.rows else 0.0 for lv in levels]
    return LexResult(z, residuals, dim if N is None else N.shape[1])
