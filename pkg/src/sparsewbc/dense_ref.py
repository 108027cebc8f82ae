"""Dense reference solver: stack dynamics and constraints into ``D y = d``.

``y = (qdd, f_c, tau)`` with ``f_c = (f_f, f_s)`` and

    D = [[M, -J_c^T, -S^T],      d = [-h,
         [J_c,  0,     0 ]]           c_c]

Every solution is ``y = D^+ d + K z`` with ``K`` a nullspace basis of ``D``.
This is the slow but transparent baseline the sparse pipeline is checked and
benchmarked against.
"""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .errors import DimensionError, InfeasibleConstraints
from .lexls import TaskLevel, lex_solve
from .matdecomp import rank_reveal
from .options import SolverOptions
from .rbd import dynamics

__all__ = ["DenseProblem", "DenseSolution", "build_dense", "dense_lex_solve", "dense_control", "bench"]


@dataclass(frozen=True)
class DenseProblem:
    D: np.ndarray
    d: np.ndarray
    nv: int
    n: int
    k_f: int
    k_s: int

    @property
    def layout(self) -> dict:
        """Slices of ``qdd``, ``f_c``, ``f_f``, ``f_s`` and ``tau`` inside ``y``."""
        nv, kf, ks = self.nv, self.k_f, self.k_s
        return {
            "qdd": slice(0, nv),
            "f_c": slice(nv, nv + kf + ks),
            "f_f": slice(nv, nv + kf),
            "f_s": slice(nv + kf, nv + kf + ks),
            "tau": slice(nv + kf + ks, nv + kf + ks + self.n),
        }

    @property
    def dim(self) -> int:
        return self.D.shape[1]

    def lift(self, level: TaskLevel) -> TaskLevel:
        """Rewrite a motion (over ``qdd``) or force (over ``f_f``) level over ``y``."""
        if level.kind == "generic":
            return level
        key = "qdd" if level.kind == "motion" else "f_f"
        sl = self.layout[key]
        width = sl.stop - sl.start
        if level.rows and level.A.shape[1] != width:
            raise DimensionError(f"{level.kind} level {level.name!r} has {level.A.shape[1]} columns, expected {width}")
        A = np.zeros((level.rows, self.dim))
        A[:, sl] = level.A
        return TaskLevel(A, level.a, level.priority, "generic", level.name, level.scale)

    def split(self, y) -> dict:
        return {k: y[s] for k, s in self.layout.items()}


def build_dense(model, state, cs: ConstraintSet, M=None, h=None) -> DenseProblem:
    """Assemble ``D`` and ``d`` for the current state and constraints."""
    if M is None:
        M = dynamics.mass_matrix(model, state)
    if h is None:
        h = dynamics.bias_forces(model, state)
    nv, n, k = model.nv, model.n, cs.k
    if cs.nv != nv:
        raise DimensionError(f"constraints have {cs.nv} columns, model has nv={nv}")
    Jc = cs.J_c
    D = np.zeros((nv + k, nv + k + n))
    D[:nv, :nv] = M
    D[:nv, nv : nv + k] = -Jc.T
    D[model.base_dim : nv, nv + k :] = -np.eye(n)
    D[nv:, :nv] = Jc
    d = np.concatenate((-h, cs.c_c))
    return DenseProblem(D, d, nv, n, cs.k_f, cs.k_s)


@dataclass
class DenseSolution:
    y: np.ndarray
    qdd: np.ndarray
    f_f: np.ndarray
    f_s: np.ndarray
    tau: np.ndarray
    residuals: list
    nullity: int  # columns of K


def dense_lex_solve(dp: DenseProblem, levels, options: SolverOptions | None = None) -> DenseSolution:
    """Lexicographic optimum over ``y`` restricted to ``D y = d``.

    Parameters
    ----------
    levels : sequence of TaskLevel
        ``generic`` levels over ``y``, or ``motion``/``force`` levels that
        are lifted with :meth:`DenseProblem.lift`.

    Raises
    ------
    InfeasibleConstraints
        If ``D y = d`` has no exact solution.
    """
    opts = options or SolverOptions()
    dec = rank_reveal(dp.D, opts.rank_tol)
    y0 = dec.solve(dp.d)
    err = np.linalg.norm(dp.D @ y0 - dp.d)
    if err > opts.residual_tol * (1.0 + np.linalg.norm(dp.d)):
        raise InfeasibleConstraints(f"D y = d is inconsistent (residual {err:.3e})")
    K = dec.null_basis
    lifted = [dp.lift(lv) for lv in levels]
    reduced = [lv.substitute(K, y0) for lv in lifted]
    res = lex_solve(reduced, K.shape[1], opts.rank_tol, opts.damping)
    y = y0 + K @ res.z
    parts = dp.split(y)
    return DenseSolution(y, parts["qdd"], parts["f_f"], parts["f_s"], parts["tau"], res.residuals, K.shape[1])


def measurement_level(cs: ConstraintSet, f_hat, tol: float = 1e-9, priority: int = -1) -> TaskLevel | None:
    """Pin the components of ``f_f`` invisible to ``J_f^T`` to a measurement.

    Returns ``None`` when ``J_f`` has full row rank.
    """
    if cs.k_f == 0:
        return None
    N = rank_reveal(cs.J_f.T, tol).null_basis
    if N.shape[1] == 0:
        return None
    f_hat = np.asarray(f_hat, dtype=float)
    return TaskLevel(N.T, N.T @ f_hat, priority, "force", "force-measurement")


def dense_control(model, state, cs, levels, f_hat=None, options: SolverOptions | None = None) -> DenseSolution:
    """Dense counterpart of the sparse control tick, for cross-checking."""
    opts = options or SolverOptions()
    levels = list(levels)
    if f_hat is not None:
        meas = measurement_level(cs, f_hat, opts.rank_tol, min((lv.priority for lv in levels), default=0) - 1)
        if meas is not None:
            levels.insert(0, meas)
    return dense_lex_solve(build_dense(model, state, cs), levels, opts)


# --------------------------------------------------------------------------- benchmark


def _median_ms(fn, repetitions):
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        samples.append(1e3 * (time.perf_counter() - t0))
    return statistics.median(samples), statistics.pstdev(samples)


def _paired_ms(fa, fb, repetitions):
    """Alternate two calls so that machine drift affects both alike."""
    a, b = [], []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fa()
        t1 = time.perf_counter()
        fb()
        t2 = time.perf_counter()
        a.append(1e3 * (t1 - t0))
        b.append(1e3 * (t2 - t1))
    return (statistics.median(a), statistics.pstdev(a)), (statistics.median(b), statistics.pstdev(b))


def bench(n: int = 23, k_s: int = 6, k_f: int = 12, repetitions: int = 200, *, base_dim: int = 6, seed: int = 0, end_to_end: bool = False) -> dict:
    """Median decomposition times of the sparse and dense paths.

    The sparse path times its four SVDs (``J_s``, ``J_f``, ``J_f Z_s`` and
    the base block of ``J_s``); the dense path times one SVD of ``D``.
    Both run single-threaded.  With ``end_to_end`` the report also holds
    the full tick times of both solvers.
    """
    from threadpoolctl import threadpool_limits

    from .instances import random_instance
    from .sparse_solver import control_tick, decompose

    inst = random_instance(n=n, base_dim=base_dim, k_s=k_s, k_f=k_f, rng=seed)
    model, state, cs = inst.model, inst.state, inst.cs
    dp = build_dense(model, state, cs)
    opts = SolverOptions(check=False)
    with threadpool_limits(limits=1):
        for _ in range(10):
            decompose(cs, base_dim, opts)
            rank_reveal(dp.D)
        (sparse_ms, sparse_sd), (dense_ms, dense_sd) = _paired_ms(
            lambda: decompose(cs, base_dim, opts), lambda: rank_reveal(dp.D), repetitions
        )
        report = {
            "n": n,
            "k_s": k_s,
            "k_f": k_f,
            "base_dim": base_dim,
            "repetitions": repetitions,
            "sparse_decompose_ms": sparse_ms,
            "dense_decompose_ms": dense_ms,
            "sparse_std_ms": sparse_sd,
            "dense_std_ms": dense_sd,
            "ratio": dense_ms / sparse_ms,
        }
        if end_to_end:
            lv = inst.levels
            report["sparse_tick_ms"], _ = _median_ms(lambda: control_tick(model, state, cs, lv, inst.f_hat, opts, recover_supporting=False), repetitions)
            report["dense_tick_ms"], _ = _median_ms(lambda: dense_control(model, state, cs, lv, inst.f_hat), repetitions)
    return report
