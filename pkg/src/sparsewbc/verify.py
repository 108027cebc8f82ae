"""Self-check suites behind ``sparsewbc verify``.

Each suite returns a :class:`SuiteResult` holding the largest residual seen
per check and the gate it was held to.  Checks without a gate are reported
for information only.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import matdecomp, tasks
from .dense_ref import dense_control
from .instances import random_instance
from .options import SolverOptions
from .rbd import dynamics
from .rbd.random_tree import random_state, random_tree
from .sparse_solver import control_tick, recover_fs


@dataclass
class SuiteResult:
    name: str
    checks: dict = field(default_factory=dict)  # check -> {"max": float, "tol": float | None}
    cases: int = 0
    seconds: float = 0.0
    notes: list = field(default_factory=list)

    def record(self, check: str, value: float, tol: float | None = None):
        entry = self.checks.setdefault(check, {"max": 0.0, "tol": tol})
        entry["max"] = max(entry["max"], float(value))

    @property
    def passed(self) -> bool:
        return all(c["tol"] is None or c["max"] <= c["tol"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "cases": self.cases,
            "seconds": round(self.seconds, 3),
            "checks": self.checks,
            "notes": self.notes,
        }


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def _mnorm(A):
    return float(np.max(np.abs(A))) if np.size(A) else 0.0


def suite_linalg(rng, cases: int = 50) -> SuiteResult:
    """Penrose conditions, basis invariants and the weighted pseudoinverse."""
    out = SuiteResult("linalg")
    t0 = time.perf_counter()
    for _ in range(cases):
        m, n = int(rng.integers(1, 13)), int(rng.integers(1, 30))
        r = int(rng.integers(1, min(m, n) + 1))
        A = rng.normal(size=(m, r)) @ rng.normal(size=(r, n))
        s = np.linalg.norm(A, 2)
        dec = matdecomp.rank_reveal(A)
        X = dec.pinv()
        out.record("rank", abs(dec.rank - r), 0)
        out.record("penrose_AXA", _mnorm(A @ X @ A - A) / s, 1e-10)
        out.record("penrose_XAX", _mnorm(X @ A @ X - X) * s, 1e-10)
        out.record("penrose_sym", max(_mnorm(A @ X - (A @ X).T), _mnorm(X @ A - (X @ A).T)), 1e-10)
        Z = dec.null_basis
        out.record("null_residual", _mnorm(A @ Z) / s, 1e-10)
        out.record("basis_orthonormal", max(_mnorm(Z.T @ Z - np.eye(Z.shape[1])),
                                            _mnorm(dec.range_basis.T @ dec.range_basis - np.eye(dec.rank))), 1e-12)
        B = rng.normal(size=(n, n))
        W = B @ B.T + n * np.eye(n)
        Aw = matdecomp.weighted_pinv(A, W)
        if r == m:
            out.record("weighted_right_inverse", _mnorm(A @ Aw - np.eye(m)), 1e-10)
        # weighted inverse through the oblique projector on null(A)
        Wi = np.linalg.inv(W)
        P = np.eye(n) - Z @ np.linalg.solve(Z.T @ Wi @ Z, Z.T @ Wi) if Z.shape[1] else np.eye(n)
        out.record("weighted_projector_form", _mnorm(Aw - P @ X) / max(1.0, _mnorm(X)), 1e-10)
        out.cases += 1
    out.seconds = time.perf_counter() - t0
    return out


def suite_oracle(rng, instances: int = 100, options: SolverOptions | None = None) -> SuiteResult:
    """Sparse pipeline against the dense reference on random instances."""
    opts = options or SolverOptions()
    out = SuiteResult("oracle")
    t0 = time.perf_counter()
    deficient = 0
    for _ in range(instances):
        inst = random_instance(rng=rng)
        model, state, cs = inst.model, inst.state, inst.cs
        deficient += inst.rank_deficient_f
        sol = control_tick(model, state, cs, inst.levels, inst.f_hat, opts)
        ref = dense_control(model, state, cs, inst.levels, inst.f_hat, opts)
        out.record("qdd_rel", _rel(sol.qdd, ref.qdd), 1e-8)
        out.record("f_f_rel", _rel(sol.f_f, ref.f_f), 1e-8)
        # both torques must reproduce the same motion and controlled forces
        for tau in (sol.tau, ref.tau):
            f_s = recover_fs(model, state, cs, ref.qdd, ref.f_f, tau, opts)
            r = dynamics.inverse_dynamics(model, state, ref.qdd) - cs.J_f.T @ ref.f_f - cs.J_s.T @ f_s
            r[model.base_dim:] -= tau
            out.record("tau_effect", np.linalg.norm(r) / (1.0 + np.linalg.norm(tau)), 1e-8)
        out.record("constraint_residual", sol.diagnostics["constraint_residual"] / (1.0 + np.linalg.norm(cs.c_c)), 1e-9)

        dec = sol.decomposition
        Jc = cs.J_c
        out.record("J_c_pinv", _mnorm(dec.J_c_pinv - np.linalg.pinv(Jc, rcond=1e-9)), 1e-9)
        Zc = matdecomp.null_basis(Jc)
        out.record("Z_c_projector", _mnorm(dec.Z_c @ dec.Z_c.T - Zc @ Zc.T), 1e-9)
        b = model.base_dim
        A = dec.Z_s[b:].T
        P_direct = np.linalg.pinv(A, rcond=1e-9) @ dec.Z_s.T
        out.record("torque_projector", _mnorm(dec.torque_projector - P_direct), 1e-9)
        out.record("torque_projector_block_formula", _mnorm(dec.torque_projector_literal - P_direct))

        t_rnea = dec.torque_projector @ (dynamics.inverse_dynamics(model, state, sol.qdd) - cs.J_f.T @ sol.f_f)
        M, h = dynamics.mass_matrix(model, state), dynamics.bias_forces(model, state)
        t_mat = dec.torque_projector @ (M @ sol.qdd + h - cs.J_f.T @ sol.f_f)
        out.record("rnea_vs_matrix", _rel(t_rnea, t_mat), 1e-9)
        out.cases += 1
    out.notes.append(f"{deficient} instances with rank-deficient controlled rows")
    out.notes.append("torque_projector_block_formula is informational: it equals the "
                     "Moore-Penrose projector only when rank(J_s) equals the base dimension")
    out.seconds = time.perf_counter() - t0
    return out


def _fd_jacobian(model, state, frame, eps=1e-6):
    nv = model.nv
    J = np.zeros((3 if model.base_dim == 3 else 6, nv))
    R0, p0 = dynamics.frame_pose(model, state, frame)
    for i in range(nv):
        e = np.zeros(nv)
        e[i] = eps
        Rp, pp = dynamics.frame_pose(model, dynamics.RobotState(model.integrate(state.q, e), state.qd), frame)
        Rm, pm = dynamics.frame_pose(model, dynamics.RobotState(model.integrate(state.q, -e), state.qd), frame)
        dR = (Rp - Rm) @ R0.T / (2 * eps)
        w = np.array([dR[2, 1], dR[0, 2], dR[1, 0]])
        dp = (pp - pm) / (2 * eps)
        J[:, i] = np.array([dp[0], dp[1], w[2]]) if model.base_dim == 3 else np.concatenate((dp, w))
    return J


def suite_dynamics(rng, cases: int = 10, models=()) -> SuiteResult:
    """Mass matrix, recursive/matrix agreement and finite-difference Jacobians."""
    out = SuiteResult("dynamics")
    t0 = time.perf_counter()
    pool = list(models)
    for _ in range(cases):
        pool.append(random_tree(int(rng.integers(2, 15)), int(rng.choice([3, 6])), int(rng.integers(2**31))))
    for model in pool:
        state = random_state(model, int(rng.integers(2**31)))
        M = dynamics.mass_matrix(model, state)
        out.record("M_symmetry", _mnorm(M - M.T), 1e-10)
        out.record("M_not_positive_definite", float(np.linalg.eigvalsh(M)[0] <= 0.0), 0.0)
        qdd = rng.normal(size=model.nv)
        h = dynamics.bias_forces(model, state)
        tau = dynamics.inverse_dynamics(model, state, qdd)
        out.record("rnea_vs_matrix", _rel(tau, M @ qdd + h), 1e-9)
        for frame in list(model.frames)[:4]:
            J = dynamics.frame_jacobian(model, state, frame)
            Jfd = _fd_jacobian(model, state, frame)
            out.record("jacobian_fd_rel", np.linalg.norm(J - Jfd) / max(1.0, np.linalg.norm(J)), 1e-6)
        out.cases += 1
    out.seconds = time.perf_counter() - t0
    return out


def suite_trajectories(rng, cases: int = 20) -> SuiteResult:
    out = SuiteResult("trajectories")
    t0 = time.perf_counter()
    for _ in range(cases):
        x0, xf = rng.normal(size=3), rng.normal(size=3)
        traj = tasks.Trajectory(x0, xf, float(rng.uniform(0.1, 5.0)))
        a = tasks.min_jerk(traj, 0.0)
        b = tasks.min_jerk(traj, traj.duration)
        err = max(_mnorm(a[0] - x0), _mnorm(b[0] - xf), *(_mnorm(v) for v in (a[1], a[2], b[1], b[2])))
        out.record("min_jerk_boundary", err, 4 * np.finfo(float).eps * (1 + max(_mnorm(x0), _mnorm(xf))))
        out.cases += 1
    out.seconds = time.perf_counter() - t0
    return out


def run_all(instances: int = 100, seed: int = 0, models=()) -> dict:
    """Run every suite with one seeded generator; returns a JSON-ready report."""
    rng = np.random.default_rng(seed)
    suites = [
        suite_linalg(rng),
        suite_oracle(rng, instances),
        suite_dynamics(rng, models=models),
        suite_trajectories(rng),
    ]
    return {
        "seed": seed,
        "instances": instances,
        "passed": all(s.passed for s in suites),
        "suites": {s.name: s.to_dict() for s in suites},
    }
