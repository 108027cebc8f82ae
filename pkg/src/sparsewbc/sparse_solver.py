"""Sparse analytical solution of the constrained motion/force hierarchy.

Given ``M qdd + h - J_c^T f_c = S^T tau`` and ``J_c qdd = c_c`` with
``J_c = [J_f; J_s]``, every solution is

    qdd = J_c^+ c_c + Z_c z_c
    f_f = U_f z_f + (I - U_f U_f^T) f_hat
    tau = P (M qdd + h - J_f^T f_f) + Z_ss z_ss

when the supporting rows can accelerate the base in every direction.  The
motion hierarchy is solved over ``z_c``, the force hierarchy over ``z_f``;
the two never interact.  Only ``J_s``, ``J_f``, ``J_f Z_s`` and the base
block of ``J_s`` are decomposed.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .constraints import ConstraintSet, RankReport
from .errors import (
    DependentConstraints,
    DimensionError,
    InconsistentDynamics,
    MissingForceMeasurement,
    NotPositiveDefinite,
    NotSufficientlyConstrained,
    StaleDecomposition,
    TrivialNullspace,
)
from .lexls import lex_solve
from .matdecomp import RankRevealing, rank_reveal, weighted_pinv
from .options import SolverOptions
from .rbd import dynamics

__all__ = [
    "SparseDecomposition",
    "ControlSolution",
    "decompose",
    "solve_motion",
    "solve_force",
    "recover_torques",
    "optimize_supporting_forces",
    "recover_fs",
    "control_tick",
]


@dataclass
class SparseDecomposition:
    """Bases and inverses for one constraint set (one control tick).

    Attributes
    ----------
    Z_s : nullspace basis of ``J_s``
    U_f : range basis of ``J_f`` (force coordinates)
    Z_fs : nullspace basis of ``J_f Z_s``
    Z_c : ``Z_s Z_fs``, nullspace basis of ``J_c``
    J_c_pinv : Moore-Penrose inverse of ``J_c``
    torque_projector : ``(Z_s^T S^T)^+ Z_s^T``, shape (n, nv)
    Z_ss : nullspace basis of ``Z_s^T S^T``, shape (n, rank_s - base_dim)
    """

    base_dim: int
    nv: int
    k_s: int
    k_f: int
    rank_s: int
    rank_f: int
    Z_s: np.ndarray
    U_f: np.ndarray
    Z_fs: np.ndarray
    base_null: np.ndarray  # nullspace of J_s[:, :b]^T, k_s x (k_s - b)
    J_f: np.ndarray = field(repr=False)
    J_s: np.ndarray = field(repr=False)
    svd_s: RankRevealing = field(repr=False, default=None)
    svd_fs: RankRevealing = field(repr=False, default=None)
    svd_b: RankRevealing = field(repr=False, default=None)
    report: RankReport | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def _lazy(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # pseudoinverses are built from the stored factorizations on first use
    @property
    def J_s_pinv(self) -> np.ndarray:
        return self._lazy("J_s_pinv", self.svd_s.pinv)

    @property
    def JfZs_pinv(self) -> np.ndarray:
        return self._lazy("JfZs_pinv", self.svd_fs.pinv)

    @property
    def base_pinv(self) -> np.ndarray:
        """Pseudoinverse of ``J_s[:, :b]^T``, shape (k_s, b)."""
        return self._lazy("base_pinv", self.svd_b.pinv)

    @property
    def n(self) -> int:
        return self.nv - self.base_dim

    @property
    def rank(self) -> int:
        return self.rank_s + self.rank_f

    @property
    def Z_c(self) -> np.ndarray:
        if "Z_c" not in self._cache:
            self._cache["Z_c"] = self.Z_s @ self.Z_fs
        return self._cache["Z_c"]

    @property
    def J_c_pinv(self) -> np.ndarray:
        if "J_c_pinv" not in self._cache:
            top = self.Z_s @ self.JfZs_pinv
            bottom = self.J_s_pinv - top @ (self.J_f @ self.J_s_pinv)
            self._cache["J_c_pinv"] = np.hstack((top, bottom))
        return self._cache["J_c_pinv"]

    def constraint_solution(self, c_f, c_s) -> np.ndarray:
        """``J_c^+ c_c`` without forming ``J_c^+``."""
        x_s = self.J_s_pinv @ c_s
        return x_s + self.Z_s @ (self.JfZs_pinv @ (c_f - self.J_f @ x_s))

    @property
    def torque_projector_literal(self) -> np.ndarray:
        """``[-S J_s^T (S_bar J_s^T)^+, I]``.

        A right inverse of ``Z_s^T S^T`` times ``Z_s^T``; it is the
        Moore-Penrose one only when ``rank_s == base_dim``.
        """
        if "P_lit" not in self._cache:
            b = self.base_dim
            P = np.empty((self.n, self.nv))
            P[:, :b] = -self.J_s[:, b:].T @ self.base_pinv
            P[:, b:] = np.eye(self.n)
            self._cache["P_lit"] = P
        return self._cache["P_lit"]

    @property
    def Z_ss(self) -> np.ndarray:
        """Torques that only change supporting forces: ``S J_s^T null(S_bar J_s^T)``."""
        if "Z_ss" not in self._cache:
            if self.base_null.shape[1] == 0:
                Z = np.zeros((self.n, 0))
            else:
                Z = rank_reveal(self.J_s[:, self.base_dim:].T @ self.base_null, with_null=False).range_basis
            self._cache["Z_ss"] = Z
        return self._cache["Z_ss"]

    @property
    def torque_projector(self) -> np.ndarray:
        if "P" not in self._cache:
            P = self.torque_projector_literal
            Z = self.Z_ss
            if Z.shape[1]:
                P = P - Z @ (Z.T @ P)
            self._cache["P"] = P
        return self._cache["P"]

    def check_matches(self, cs: ConstraintSet, nv: int | None = None):
        if (cs.k_s, cs.k_f, cs.nv) != (self.k_s, self.k_f, self.nv) or (nv is not None and nv != self.nv):
            raise StaleDecomposition(
                f"decomposition built for k_s={self.k_s}, k_f={self.k_f}, nv={self.nv}; "
                f"got k_s={cs.k_s}, k_f={cs.k_f}, nv={cs.nv if nv is None else nv}"
            )


def decompose(cs: ConstraintSet, base_dim: int, options: SolverOptions | None = None) -> SparseDecomposition:
    """Decompose a constraint set with four rank-revealing factorizations.

    Raises
    ------
    NotSufficientlyConstrained
        If the base block of ``J_s`` has rank below `base_dim` (the report
        is attached to the exception).
    DependentConstraints
        If controlled rows are not independent of the supporting rows.
    """
    opts = options or SolverOptions()
    tol = opts.rank_tol
    nv = cs.nv
    dec_s = rank_reveal(cs.J_s, tol)
    Z_s = dec_s.null_basis
    dec_f = rank_reveal(cs.J_f, tol, with_null=False)
    # round-off left by rows of J_f that J_s already holds must not count as rank
    f_scale = float(dec_f.singular_values[0]) if dec_f.singular_values.size else None
    dec_fs = rank_reveal(cs.J_f @ Z_s, tol, scale=f_scale)
    dec_b = rank_reveal(cs.J_s[:, :base_dim].T, tol)
    report = RankReport(dec_b.rank == base_dim, dec_b.rank, base_dim, dec_s.rank, dec_b.singular_values)
    if opts.check:
        if not report.sufficient:
            raise NotSufficientlyConstrained(report.describe(), report)
        if dec_fs.rank != dec_f.rank:
            raise DependentConstraints(
                f"rank(J_f Z_s) = {dec_fs.rank} < rank(J_f) = {dec_f.rank}: controlled rows depend on supporting rows"
            )
    return SparseDecomposition(
        base_dim=base_dim,
        nv=nv,
        k_s=cs.k_s,
        k_f=cs.k_f,
        rank_s=dec_s.rank,
        rank_f=dec_f.rank,
        Z_s=Z_s,
        U_f=dec_f.range_basis,
        Z_fs=dec_fs.null_basis,
        base_null=dec_b.null_basis,
        J_f=cs.J_f,
        J_s=cs.J_s,
        svd_s=dec_s,
        svd_fs=dec_fs,
        svd_b=dec_b,
        report=report,
    )


def _check_levels(levels, kind, width):
    out = []
    for lv in levels:
        if lv.kind not in (kind, "generic"):
            raise ValueError(f"level {lv.name!r} is a {lv.kind} level, expected {kind}")
        if lv.rows and lv.A.shape[1] != width:
            raise DimensionError(f"{kind} level {lv.name!r} has {lv.A.shape[1]} columns, expected {width}")
        out.append(lv)
    return out


def solve_motion(dec: SparseDecomposition, cs: ConstraintSet, levels, options: SolverOptions | None = None):
    """Motion hierarchy over ``z_c``.

    Returns
    -------
    z_c, qdd : ndarray
    result : LexResult
        Residuals are those of the original levels over ``qdd``.
    """
    opts = options or SolverOptions()
    dec.check_matches(cs)
    levels = _check_levels(levels, "motion", dec.nv)
    q0 = dec.constraint_solution(cs.c_f, cs.c_s)
    Zc = dec.Z_c
    reduced = [lv.substitute(Zc, q0) for lv in levels]
    res = lex_solve(reduced, Zc.shape[1], opts.rank_tol, opts.damping)
    return res.z, q0 + Zc @ res.z, res


def solve_force(dec: SparseDecomposition, cs: ConstraintSet, levels, f_hat=None, options: SolverOptions | None = None):
    """Force hierarchy over ``z_f``.

    Parameters
    ----------
    f_hat : (k_f,) array_like, optional
        Measured controlled forces.  Required when ``J_f`` is rank
        deficient: the components of ``f_f`` that ``J_f^T`` cannot see are
        taken from it.

    Returns
    -------
    z_f, f_f : ndarray
    result : LexResult
    """
    opts = options or SolverOptions()
    dec.check_matches(cs)
    levels = _check_levels(levels, "force", dec.k_f)
    U = dec.U_f
    if f_hat is None:
        if dec.rank_f < dec.k_f:
            raise MissingForceMeasurement(
                f"J_f has rank {dec.rank_f} < {dec.k_f} rows; a force measurement f_hat is required"
            )
        f0 = np.zeros(dec.k_f)
    else:
        f_hat = np.asarray(f_hat, dtype=float)
        f0 = f_hat - U @ (U.T @ f_hat)
    reduced = [lv.substitute(U, f0) for lv in levels]
    res = lex_solve(reduced, U.shape[1], opts.rank_tol, opts.damping)
    return res.z, U @ res.z + f0, res


def _tau_one(model, state, cs, qdd, f_f, path):
    if path == "matrix":
        t = dynamics.mass_matrix(model, state) @ qdd + dynamics.bias_forces(model, state)
    elif path == "rnea":
        t = dynamics.inverse_dynamics(model, state, qdd)
    else:
        raise ValueError(f"torque path must be 'rnea' or 'matrix', got {path!r}")
    if cs.k_f:
        t = t - cs.J_f.T @ f_f
    return t


def recover_torques(model, state, dec, cs, qdd, f_f, z_ss=None, path: str = "rnea") -> np.ndarray:
    """Joint torques ``P (M qdd + h - J_f^T f_f) + Z_ss z_ss``.

    Parameters
    ----------
    z_ss : array_like, optional
        Coordinates in the torque redundancy; defaults to zero, which
        gives the minimum-norm torque.
    path : {"rnea", "matrix"}
        Evaluate ``M qdd + h`` by recursive Newton-Euler (no mass matrix)
        or by forming ``M`` and ``h`` explicitly.

    Raises
    ------
    StaleDecomposition
        If `dec` was built for different constraint or model sizes.
    """
    dec.check_matches(cs, model.nv)
    tau = dec.torque_projector @ _tau_one(model, state, cs, np.asarray(qdd, float), np.asarray(f_f, float), path)
    if z_ss is not None and dec.Z_ss.shape[1]:
        tau = tau + dec.Z_ss @ np.asarray(z_ss, dtype=float)
    return tau


def _spd_inverse_factor(A, what):
    try:
        return cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(f"{what} is not positive-definite") from None


def supporting_force_weights(dec: SparseDecomposition, W_f_inv):
    """``Q' = J_s^+ W_f^{-1} J_s^{+T} + Z_s Z_s^T`` and ``W^{-1} = S Q' S^T``."""
    W_f_inv = np.asarray(W_f_inv, dtype=float)
    if W_f_inv.shape != (dec.k_s, dec.k_s):
        raise DimensionError(f"W_f_inv must be {dec.k_s}x{dec.k_s}, got {W_f_inv.shape}")
    if not np.allclose(W_f_inv, W_f_inv.T, rtol=1e-10, atol=1e-14):
        raise NotPositiveDefinite("W_f_inv is not symmetric")
    _spd_inverse_factor(W_f_inv, "W_f_inv")
    Q = dec.J_s_pinv @ W_f_inv @ dec.J_s_pinv.T + dec.Z_s @ dec.Z_s.T
    b = dec.base_dim
    return Q, Q[b:, b:]


def optimize_supporting_forces(
    model, state, dec, cs, qdd, f_f, W_f_inv, *, tau1=None, variant: str = "exact", fallback: bool = True, path: str = "rnea"
) -> np.ndarray:
    """Torques minimizing ``f_s^T W_f^{-1} f_s`` without changing ``qdd`` or ``f_f``.

    Parameters
    ----------
    W_f_inv : (k_s, k_s) array_like
        SPD weight on the supporting forces.
    tau1 : array_like, optional
        Precomputed ``M qdd + h - J_f^T f_f``.
    variant : {"exact", "literal"}
        ``exact`` returns the minimizer
        ``A^{+W} Z_s^T tau1 + Z_ss (Z_ss^T W^{-1} Z_ss)^{-1} Z_ss^T W^{-1} tau0``;
        ``literal`` replaces the second term by ``Z_ss Z_ss^T tau0``, which
        stays feasible but is not optimal in general.
    fallback : bool
        When there is no torque redundancy, return :func:`recover_torques`
        instead of raising :class:`TrivialNullspace`.

    Raises
    ------
    NotPositiveDefinite
        If `W_f_inv` or the derived torque weight is not SPD.
    """
    dec.check_matches(cs, model.nv)
    Zss = dec.Z_ss
    if Zss.shape[1] == 0:
        if fallback:
            return recover_torques(model, state, dec, cs, qdd, f_f, path=path)
        raise TrivialNullspace(f"rank(J_s) = {dec.rank_s} equals the base dimension; nothing to optimize")
    if tau1 is None:
        tau1 = _tau_one(model, state, cs, np.asarray(qdd, float), np.asarray(f_f, float), path)
    Q, W_inv = supporting_force_weights(dec, W_f_inv)
    c = _spd_inverse_factor(W_inv, "S Q' S^T")
    W = cho_solve(c, np.eye(dec.n))
    W = 0.5 * (W + W.T)
    b = dec.base_dim
    SQt = Q[b:] @ tau1
    tau0 = W @ SQt
    A = dec.Z_s[b:].T
    tau = weighted_pinv(A, W) @ (dec.Z_s.T @ tau1)
    if variant == "literal":
        return tau + Zss @ (Zss.T @ tau0)
    if variant != "exact":
        raise ValueError(f"variant must be 'exact' or 'literal', got {variant!r}")
    # W^{-1} tau0 = S Q' tau1
    G = Zss.T @ W_inv @ Zss
    return tau + Zss @ np.linalg.solve(G, Zss.T @ SQt)


def recover_fs(model, state, cs, qdd, f_f, tau, options: SolverOptions | None = None, path: str = "rnea") -> np.ndarray:
    """Minimum-norm supporting forces closing the equations of motion.

    Solves ``J_s^T f_s = M qdd + h - J_f^T f_f - S^T tau`` in the least
    squares sense.

    Raises
    ------
    InconsistentDynamics
        If the right-hand side is not in the range of ``J_s^T``.
    """
    opts = options or SolverOptions()
    r = _tau_one(model, state, cs, np.asarray(qdd, float), np.asarray(f_f, float), path)
    scale = 1.0 + np.linalg.norm(r) + np.linalg.norm(tau)
    r[model.base_dim:] -= tau
    dec = rank_reveal(cs.J_s.T, opts.rank_tol, with_null=False)
    f_s = dec.solve(r)
    err = np.linalg.norm(cs.J_s.T @ f_s - r)
    if err > opts.residual_tol * scale:
        raise InconsistentDynamics(f"dynamics residual {err:.3e} is outside range(J_s^T) (scale {scale:.3e})")
    return f_s


@dataclass
class ControlSolution:
    """One control tick.

    Attributes
    ----------
    qdd, f_f, tau : ndarray
    z_c, z_f, z_ss : ndarray
        Coordinates in the motion, force and torque redundancies.
    f_s : ndarray or None
        Recovered supporting forces (diagnostic).
    residuals : dict
        ``{"motion": [...], "force": [...]}`` per input level.
    timings : dict
        Seconds spent in ``decompose``, ``solve`` and ``torques``.
    diagnostics : dict
    """

    qdd: np.ndarray
    f_f: np.ndarray
    tau: np.ndarray
    z_c: np.ndarray
    z_f: np.ndarray
    z_ss: np.ndarray
    f_s: np.ndarray | None
    residuals: dict
    timings: dict
    diagnostics: dict
    decomposition: SparseDecomposition = field(repr=False, default=None)


_POOL: ThreadPoolExecutor | None = None


def _pool() -> ThreadPoolExecutor:
    global _POOL
    if _POOL is None:
        _POOL = ThreadPoolExecutor(max_workers=1, thread_name_prefix="sparsewbc-force")
    return _POOL


def control_tick(model, state, cs, levels, f_hat=None, options: SolverOptions | None = None, W_f_inv=None, recover_supporting=True):
    """Decompose, solve both hierarchies, and recover torques.

    Parameters
    ----------
    levels : sequence of TaskLevel
        Each tagged ``kind="motion"`` (over ``qdd``) or ``kind="force"``
        (over ``f_f``).
    f_hat : array_like, optional
        Controlled-force measurement (see :func:`solve_force`).
    W_f_inv : array_like, optional
        When given and torque redundancy exists, torques are chosen to
        minimize ``f_s^T W_f^{-1} f_s``.
    recover_supporting : bool
        Also compute ``f_s`` and the dynamics residual.
    """
    opts = options or SolverOptions()
    motion = [lv for lv in levels if lv.kind == "motion"]
    force = [lv for lv in levels if lv.kind == "force"]
    other = [lv for lv in levels if lv.kind not in ("motion", "force")]
    if other:
        raise ValueError("control_tick levels must be tagged 'motion' or 'force'")
    t0 = time.perf_counter()
    dec = decompose(cs, model.base_dim, opts)
    t1 = time.perf_counter()
    if opts.parallel and force:
        fut = _pool().submit(solve_force, dec, cs, force, f_hat, opts)
        z_c, qdd, mres = solve_motion(dec, cs, motion, opts)
        z_f, f_f, fres = fut.result()
    else:
        z_f, f_f, fres = solve_force(dec, cs, force, f_hat, opts)
        z_c, qdd, mres = solve_motion(dec, cs, motion, opts)
    t2 = time.perf_counter()
    tau1 = _tau_one(model, state, cs, qdd, f_f, opts.torque_path)
    Zss = dec.Z_ss
    if W_f_inv is not None and Zss.shape[1]:
        tau = optimize_supporting_forces(model, state, dec, cs, qdd, f_f, W_f_inv, tau1=tau1)
    else:
        tau = dec.torque_projector @ tau1
    z_ss = Zss.T @ tau
    t3 = time.perf_counter()
    diagnostics = {
        "rank_s": dec.rank_s,
        "rank_f": dec.rank_f,
        "constraint_residual": float(np.linalg.norm(cs.J_c @ qdd - cs.c_c)),
    }
    f_s = None
    if recover_supporting and cs.k_s:
        f_s = recover_fs(model, state, cs, qdd, f_f, tau, opts, opts.torque_path)
        r = tau1.copy()
        r[model.base_dim:] -= tau
        diagnostics["dynamics_residual"] = float(np.linalg.norm(r - cs.J_s.T @ f_s))
    return ControlSolution(
        qdd=qdd,
        f_f=f_f,
        tau=tau,
        z_c=z_c,
        z_f=z_f,
        z_ss=z_ss,
        f_s=f_s,
        residuals={"motion": mres.residuals, "force": fres.residuals},
        timings={"decompose": t1 - t0, "solve": t2 - t1, "torques": t3 - t2},
        diagnostics=diagnostics,
        decomposition=dec,
    )
