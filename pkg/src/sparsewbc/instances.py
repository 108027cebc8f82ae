"""Seeded random control problems built from actual model frames.

Each instance is a random tree in a random state with rigid contacts on
some of its frames, plus a random motion/force hierarchy ending in
full-rank levels, so that ``(qdd, f_f)`` is unique and two solvers can be
compared directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import (
    AXES,
    CONTROLLED,
    SUPPORTING,
    ConstraintRows,
    ConstraintSet,
    assemble,
    check_independence,
    constraint_ranks,
    contact_rows,
    is_sufficiently_constrained,
)
from .lexls import TaskLevel
from .rbd import dynamics
from .rbd.random_tree import random_state, random_tree


@dataclass
class Instance:
    model: object
    state: object
    cs: ConstraintSet
    levels: list
    f_hat: np.ndarray
    seed: object = None

    @property
    def rank_deficient_f(self) -> bool:
        return constraint_ranks(self.cs)["J_f"] < self.cs.k_f


def _rows_from_frames(model, state, kin, frames, k, role):
    """Take `k` rows from consecutive frames, full twists first."""
    b = model.base_dim
    blocks = []
    for fr in frames:
        if k <= 0:
            break
        m = min(k, b)
        blocks.append(contact_rows(model, state, fr, role, axes=AXES[b][:m] if m < b else AXES[b], kin=kin))
        k -= m
    return blocks, k


def _conditioned(J, rank, min_ratio):
    s = np.linalg.svd(J, compute_uv=False)
    return rank == 0 or s[rank - 1] >= min_ratio * s[0]


def random_instance(
    n=None, base_dim=None, k_s=None, k_f=None, rng=None, *, rank_deficient=None, min_sv_ratio=1e-3, max_tries=200
) -> Instance:
    """Random sufficiently-constrained instance with independent constraints.

    Unspecified sizes are drawn at random: ``n`` in [4, 30], ``base_dim``
    in {3, 6}, ``k_s`` in [b, 2b], ``k_f`` in [0, 12] (capped by the
    available degrees of freedom).  With `rank_deficient`, one controlled
    row duplicates another.  Near-singular contact layouts (smallest
    nonzero singular value of ``J_c`` or of its base block below
    `min_sv_ratio` times the largest) are rejected.
    """
    rng = np.random.default_rng(rng)
    fixed = None not in (n, base_dim, k_s, k_f)
    # some random size draws admit no well-conditioned layout; draw again
    for _ in range(1 if fixed else 20):
        b = base_dim if base_dim is not None else int(rng.choice([3, 6]))
        n_ = n if n is not None else int(rng.integers(4, 31))
        ks = k_s if k_s is not None else int(rng.integers(b, min(2 * b, n_ + b) + 1))
        nv = n_ + b
        if k_f is not None:
            kf = k_f
        else:
            kf = int(rng.integers(0, min(12, nv - ks - 1) + 1)) if nv - ks - 1 >= 0 else 0
        deficient = bool(rng.random() < 0.3) if rank_deficient is None else rank_deficient
        deficient = deficient and kf >= 2
        if ks > nv or kf + ks - int(deficient) > nv:
            if fixed:
                raise ValueError(f"k_s={ks}, k_f={kf} cannot be independent with nv={nv}")
            continue
        inst = _build(n_, b, ks, kf, deficient, rng, min_sv_ratio, max_tries if fixed else min(max_tries, 40))
        if inst is not None:
            return inst
    raise RuntimeError(f"no valid instance found for n={n_}, b={b}, k_s={ks}, k_f={kf}")


def _build(n_, b, ks, kf, deficient, rng, min_sv_ratio, max_tries):
    n_frames = 2 + -(-kf // b) + 1
    for _ in range(max_tries):
        seed = int(rng.integers(2**31))
        model = random_tree(n_, b, seed, n_frames=n_frames, branching=0.2)
        state = random_state(model, seed + 1)
        kin = dynamics.kinematics(model, state, drift=True)
        names = [f"f{i}" for i in range(n_frames)]
        sup, left = _rows_from_frames(model, state, kin, names[:2], ks, SUPPORTING)
        ctl, left_f = _rows_from_frames(model, state, kin, names[2:], kf - int(deficient), CONTROLLED)
        if deficient:
            src = ctl[0]
            i = int(rng.integers(src.J.shape[0]))
            ctl.append(ConstraintRows(src.J[i] * 1.0, src.c[i : i + 1], CONTROLLED, (src.labels[i] + "'",)))
        cs = assemble(sup + ctl, model.nv)
        if left or left_f or cs.k_s != ks or cs.k_f != kf:
            continue
        ranks = constraint_ranks(cs)
        if not is_sufficiently_constrained(cs, b) or ranks["J_s"] != ks:
            continue
        if ranks["J_f"] != kf - int(deficient) or not check_independence(cs):
            continue
        if not (_conditioned(cs.J_c, ranks["J_c"], min_sv_ratio) and _conditioned(cs.J_s[:, :b], b, min_sv_ratio)):
            continue
        levels = random_levels(model.nv, kf, rng)
        f_hat = rng.normal(scale=10.0, size=kf)
        return Instance(model, state, cs, levels, f_hat, seed)
    return None


def random_levels(nv: int, k_f: int, rng) -> list:
    """Random motion and force hierarchies with interleaved priorities.

    Both end in a full-rank level (identity) so the optimum is unique.
    """
    rng = np.random.default_rng(rng)
    levels = []
    prio = list(rng.permutation(8))
    for i in range(int(rng.integers(1, 4))):
        m = int(rng.integers(1, max(2, nv // 2)))
        levels.append(TaskLevel(rng.normal(size=(m, nv)), rng.normal(size=m), int(prio.pop()), "motion", f"motion{i}"))
    if k_f:
        for i in range(int(rng.integers(0, 3))):
            m = int(rng.integers(1, k_f + 1))
            levels.append(TaskLevel(rng.normal(size=(m, k_f)), rng.normal(scale=20.0, size=m), int(prio.pop()), "force", f"force{i}"))
        levels.append(TaskLevel(np.eye(k_f), rng.normal(scale=20.0, size=k_f), 20, "force", "force-regularization"))
    levels.append(TaskLevel(np.eye(nv), rng.normal(size=nv), 21, "motion", "posture-regularization"))
    return levels
