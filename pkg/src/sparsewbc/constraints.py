"""Supporting/controlled constraint sets and their rank conditions.

Constraints are rows of ``J_c qdd = c_c``.  Controlled rows (forces are
regulated, ``J_f``) are always stacked before supporting rows (forces are
free, ``J_s``).  For rigid contacts ``c = -Jdot qd``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .matdecomp import rank_reveal
from .options import DEFAULT_RANK_TOL

SUPPORTING, CONTROLLED = "supporting", "controlled"

# task-space row names for the world-aligned frame twist
AXES = {3: ("x", "y", "rz"), 6: ("x", "y", "z", "rx", "ry", "rz")}


@dataclass(frozen=True)
class ConstraintRows:
    """A block of constraint rows sharing one role.

    Attributes
    ----------
    J : (m, nv) ndarray
    c : (m,) ndarray
    role : {"supporting", "controlled"}
    labels : tuple of str
        Provenance of each row, e.g. ``"l_sole:y"``.
    """

    J: np.ndarray
    c: np.ndarray
    role: str
    labels: tuple = ()

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "c", c)
        if self.role not in (SUPPORTING, CONTROLLED):
            raise ValueError(f"role must be {SUPPORTING!r} or {CONTROLLED!r}, got {self.role!r}")
        if c.shape != (J.shape[0],):
            raise DimensionError(f"{J.shape[0]} rows but c has shape {c.shape}")
        labels = tuple(self.labels) or tuple(f"row{i}" for i in range(J.shape[0]))
        if len(labels) != J.shape[0]:
            raise DimensionError("one label per row is required")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class ConstraintSet:
    J_s: np.ndarray
    c_s: np.ndarray
    J_f: np.ndarray
    c_f: np.ndarray
    labels_s: tuple = ()
    labels_f: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def nv(self) -> int:
        return self.J_s.shape[1]

    @property
    def k_s(self) -> int:
        return self.J_s.shape[0]

    @property
    def k_f(self) -> int:
        return self.J_f.shape[0]

    @property
    def k(self) -> int:
        return self.k_s + self.k_f

    @property
    def J_c(self) -> np.ndarray:
        if "J_c" not in self._cache:
            self._cache["J_c"] = np.vstack((self.J_f, self.J_s))
        return self._cache["J_c"]

    @property
    def c_c(self) -> np.ndarray:
        return np.concatenate((self.c_f, self.c_s))

    @property
    def labels(self) -> tuple:
        return tuple(self.labels_f) + tuple(self.labels_s)


def assemble(rows, nv: int | None = None) -> ConstraintSet:
    """Stack constraint blocks into a :class:`ConstraintSet`.

    Blocks keep their submission order within each role; rows are copied
    verbatim, duplicates included.

    Raises
    ------
    DimensionError
        If blocks disagree on the number of columns, or no width can be
        inferred (pass `nv` for an empty set).
    """
    rows = list(rows)
    widths = {r.J.shape[1] for r in rows}
    if nv is not None:
        widths.add(nv)
    if len(widths) != 1:
        raise DimensionError(f"inconsistent constraint widths {sorted(widths)}")
    (nv,) = widths

    def stack(role):
        sel = [r for r in rows if r.role == role]
        if not sel:
            return np.zeros((0, nv)), np.zeros(0), ()
        return (
            np.vstack([r.J for r in sel]),
            np.concatenate([r.c for r in sel]),
            sum((r.labels for r in sel), ()),
        )

    J_s, c_s, l_s = stack(SUPPORTING)
    J_f, c_f, l_f = stack(CONTROLLED)
    return ConstraintSet(J_s, c_s, J_f, c_f, l_s, l_f)


def contact_rows(model, state, frame: str, role: str = SUPPORTING, kind: str = "flat", axes=None, normal=None, kin=None) -> ConstraintRows:
    """Rigid-contact rows of a model frame.

    Parameters
    ----------
    kind : {"flat", "point", "normal"}
        ``flat`` fixes the full frame twist (3 rows planar, 6 spatial),
        ``point`` the linear velocity only (2 or 3 rows), ``normal`` the
        velocity along `normal` (1 row; world vertical by default).  The
        matching force is then the scalar push along `normal`.
    axes : sequence of str, optional
        Explicit subset of ``("x", "y", "rz")`` (planar) or
        ``("x", "y", "z", "rx", "ry", "rz")``; overrides `kind`.
    normal : array_like, optional
        World direction for ``kind="normal"`` (3 entries).
    """
    from .rbd import dynamics

    b = model.base_dim
    names = AXES[b]
    if kin is None or kin.acc is None:
        kin = dynamics.kinematics(model, state, drift=True)
    J6 = dynamics.frame_jacobian(model, state, frame, kin)
    c6 = -dynamics.jdot_qdot(model, state, frame, kin)
    if axes is None and kind == "normal":
        n = np.array([0.0, 1.0, 0.0] if b == 3 else [0.0, 0.0, 1.0]) if normal is None else np.asarray(normal, float)
        n = n / np.linalg.norm(n)
        lin = [0, 1] if b == 3 else [0, 1, 2]
        nl = n[: len(lin)]
        return ConstraintRows(nl @ J6[lin], np.array([nl @ c6[lin]]), role, (f"{frame}:n",))
    if axes is None:
        if kind == "flat":
            axes = names
        elif kind == "point":
            axes = names[:2] if b == 3 else names[:3]
        else:
            raise ValueError(f"unknown contact kind {kind!r}")
    try:
        idx = [names.index(a) for a in axes]
    except ValueError:
        raise ValueError(f"axes must be drawn from {names}, got {tuple(axes)}") from None
    return ConstraintRows(J6[idx], c6[idx], role, tuple(f"{frame}:{a}" for a in axes))


@dataclass(frozen=True)
class RankReport:
    """Outcome of the sufficiently-constrained test.  Truthy iff it passed."""

    sufficient: bool
    rank: int
    base_dim: int
    rank_J_s: int
    singular_values: np.ndarray

    def __bool__(self):
        return self.sufficient

    def describe(self) -> str:
        verdict = "sufficiently constrained" if self.sufficient else "NOT sufficiently constrained"
        return (
            f"{verdict}: rank of the base block of J_s is {self.rank} (needs {self.base_dim}), "
            f"rank(J_s) = {self.rank_J_s}"
        )


def is_sufficiently_constrained(cs: ConstraintSet, base_dim: int, tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """Whether supporting forces can accelerate the base in every direction.

    Tests ``rank(J_s[:, :base_dim]) == base_dim``.  Note this is stronger
    than ``rank(J_s) >= base_dim``.
    """
    base_block = cs.J_s[:, :base_dim]
    dec = rank_reveal(base_block, tol, with_null=False)
    rank_s = rank_reveal(cs.J_s, tol, with_null=False).rank
    return RankReport(dec.rank == base_dim, dec.rank, base_dim, rank_s, dec.singular_values)


def constraint_ranks(cs: ConstraintSet, tol: float = DEFAULT_RANK_TOL) -> dict:
    return {
        "J_c": rank_reveal(cs.J_c, tol, with_null=False).rank,
        "J_f": rank_reveal(cs.J_f, tol, with_null=False).rank,
        "J_s": rank_reveal(cs.J_s, tol, with_null=False).rank,
    }


def check_independence(cs: ConstraintSet, tol: float = DEFAULT_RANK_TOL) -> bool:
    """True iff ``rank(J_c) == rank(J_f) + rank(J_s)``."""
    if cs.k_f == 0:
        return True
    r = constraint_ranks(cs, tol)
    return r["J_c"] == r["J_f"] + r["J_s"]
