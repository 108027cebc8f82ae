"""Mass matrix, bias forces, inverse/forward dynamics, Jacobians and COM.

Task-space quantities (frame Jacobians, drift terms, wrenches) are
world-aligned and linear-first: spatial rows are ``(vx, vy, vz, wx, wy, wz)``
and planar rows are ``(vx, vy, wz)``.  External wrenches use the same
layout and act at the frame origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import DimensionError, NotPositiveDefinite
from . import kernels
from .model import RobotModel, RobotState

PLANAR_ROWS = np.array([0, 1, 5])


@dataclass
class Kinematics:
    """Body poses (and optionally velocities / velocity-product accelerations)
    at one state.  Reuse it across several Jacobian queries."""

    R: np.ndarray
    p: np.ndarray
    vel: np.ndarray | None
    acc: np.ndarray | None


def _checked(model: RobotModel, state: RobotState) -> RobotState:
    return state.validate(model)


def kinematics(model: RobotModel, state: RobotState, *, velocity=False, drift=False) -> Kinematics:
    state = _checked(model, state)
    R0, p0 = model.base_pose(state.q)
    v = state.qd if (velocity or drift) else None
    Rw, pw, vel, acc = kernels.kinematics(model.tree, R0, p0, model.joint_positions(state.q), v, drift)
    return Kinematics(Rw, pw, vel, acc)


def mass_matrix(model: RobotModel, state: RobotState) -> np.ndarray:
    """Joint-space inertia matrix (composite rigid bodies)."""
    state = _checked(model, state)
    M = kernels.crba(model.tree, model.joint_positions(state.q))
    return M


def _external_body_forces(model, kin, external_forces):
    nb = model.tree.nb
    fext = np.zeros((nb, 6))
    for name, wrench in external_forces.items():
        fr = model.frame(name)
        w = np.asarray(wrench, dtype=float)
        f6 = np.zeros(6)
        if model.base_dim == 3:
            if w.shape != (3,):
                raise DimensionError(f"planar wrench for {name!r} must have 3 entries")
            f6[[0, 1, 5]] = w
        else:
            if w.shape != (6,):
                raise DimensionError(f"wrench for {name!r} must have 6 entries")
            f6[:] = w
        k = fr.link
        Rk = kin.R[k]
        origin = kin.p[k] + Rk @ fr.p
        force, moment = f6[:3], f6[3:] + _cross(origin - kin.p[k], f6[:3])
        fext[k, :3] += Rk.T @ moment
        fext[k, 3:] += Rk.T @ force
    return fext


def inverse_dynamics(model: RobotModel, state: RobotState, qdd, external_forces=None) -> np.ndarray:
    """``M qdd + h - sum_k J_k^T w_k`` by recursive Newton-Euler.

    Parameters
    ----------
    qdd : (nv,) array_like
    external_forces : dict, optional
        Frame name to world-aligned wrench applied at the frame origin.

    Raises
    ------
    UnknownFrame
        If a wrench names a frame the model does not have.
    """
    state = _checked(model, state)
    qdd = np.asarray(qdd, dtype=float)
    if qdd.shape != (model.nv,):
        raise DimensionError(f"qdd must have length {model.nv}, got {qdd.shape}")
    R0, p0 = model.base_pose(state.q)
    fext = None
    if external_forces:
        kin = kinematics(model, state)
        fext = _external_body_forces(model, kin, external_forces)
    return kernels.rnea(model.tree, R0, model.joint_positions(state.q), state.qd, qdd, model.gravity, fext)


def bias_forces(model: RobotModel, state: RobotState) -> np.ndarray:
    """Gravity, Coriolis and centrifugal terms ``h(q, qd)``."""
    return inverse_dynamics(model, state, np.zeros(model.nv))


def forward_dynamics(model: RobotModel, state: RobotState, tau, external_forces=None) -> np.ndarray:
    """Accelerations from joint torques `tau` and frame wrenches."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.n,):
        raise DimensionError(f"tau must have length {model.n}, got {tau.shape}")
    rhs = -inverse_dynamics(model, state, np.zeros(model.nv), external_forces)
    rhs[model.base_dim:] += tau
    M = mass_matrix(model, state)
    try:
        return cho_solve(cho_factor(M), rhs)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"mass matrix: {exc}") from None


def _cross(a, b):
    """``np.cross`` for (..., 3) arrays without its axis bookkeeping."""
    if a.ndim == 1 and b.ndim == 1:
        a0, a1, a2 = a.tolist()
        b0, b1, b2 = b.tolist()
        return np.array((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack((a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0), axis=-1)


def _point_jacobian6(model, kin, body, point):
    """World-aligned 6 x nv Jacobian of a point rigidly attached to `body`."""
    tree = model.tree
    b = model.base_dim
    J = np.zeros((6, model.nv))
    R0, p0 = kin.R[0], kin.p[0]
    S = tree.S_base
    ang = R0 @ S[:3]
    J[3:, :b] = ang
    J[:3, :b] = R0 @ S[3:] + _cross(ang.T, point - p0).T
    idx = np.flatnonzero(model.support[body, 1:]) + 1
    if idx.size:
        axes = np.einsum("kij,kj->ki", kin.R[idx], tree.axis[idx])
        cols = b + idx - 1
        rev = tree.jtype[idx] == 0
        J[:3, cols[rev]] = _cross(axes[rev], point - kin.p[idx[rev]]).T
        J[3:, cols[rev]] = axes[rev].T
        J[:3, cols[~rev]] = axes[~rev].T
    return J


def _rows(model, J):
    return J[PLANAR_ROWS] if model.base_dim == 3 else J


def frame_pose(model: RobotModel, state: RobotState, frame: str, kin: Kinematics | None = None):
    """World rotation and position of a frame."""
    fr = model.frame(frame)
    kin = kin or kinematics(model, state)
    R = kin.R[fr.link]
    return R @ fr.R, kin.p[fr.link] + R @ fr.p


def frame_jacobian(model: RobotModel, state: RobotState, frame: str, kin: Kinematics | None = None) -> np.ndarray:
    """Jacobian mapping ``qd`` to the frame's world-aligned twist
    (3 rows planar, 6 rows spatial)."""
    fr = model.frame(frame)
    kin = kin or kinematics(model, state)
    _, origin = frame_pose(model, state, frame, kin)
    return _rows(model, _point_jacobian6(model, kin, fr.link, origin))


def _point_drift(kin, body, r_local):
    w, v = kin.vel[body, :3], kin.vel[body, 3:]
    dw, dv = kin.acc[body, :3], kin.acc[body, 3:]
    vp = v + _cross(w, r_local)
    lin = dv + _cross(dw, r_local) + _cross(w, vp)
    R = kin.R[body]
    return np.concatenate((R @ lin, R @ dw))


def frame_velocity(model: RobotModel, state: RobotState, frame: str, kin: Kinematics | None = None) -> np.ndarray:
    """World-aligned twist of a frame, ``J qd``, from body velocities."""
    fr = model.frame(frame)
    if kin is None or kin.vel is None:
        kin = kinematics(model, state, velocity=True)
    w, v = kin.vel[fr.link, :3], kin.vel[fr.link, 3:]
    R = kin.R[fr.link]
    return _rows(model, np.concatenate((R @ (v + _cross(w, fr.p)), R @ w)))


def jdot_qdot(model: RobotModel, state: RobotState, frame: str, kin: Kinematics | None = None) -> np.ndarray:
    """Drift term ``Jdot qd`` of a frame (frame acceleration at ``qdd = 0``)."""
    fr = model.frame(frame)
    if kin is None or kin.acc is None:
        kin = kinematics(model, state, drift=True)
    return _rows(model, _point_drift(kin, fr.link, fr.p))


def _com_terms(model, kin):
    masses = np.array([lk.mass for lk in model.links])
    coms = np.array([lk.com for lk in model.links], dtype=float)
    world = kin.p + np.einsum("kij,kj->ki", kin.R, coms)
    return masses, coms, world


def com(model: RobotModel, state: RobotState, kin: Kinematics | None = None) -> np.ndarray:
    """Whole-body center of mass (2 coordinates planar, 3 spatial)."""
    kin = kin or kinematics(model, state)
    m, _, world = _com_terms(model, kin)
    c = m @ world / m.sum()
    return c[:2] if model.base_dim == 3 else c


def com_jacobian(model: RobotModel, state: RobotState, kin: Kinematics | None = None) -> np.ndarray:
    kin = kin or kinematics(model, state)
    m, _, world = _com_terms(model, kin)
    tree = model.tree
    b = model.base_dim
    mtot = m.sum()
    c = m @ world / mtot
    J = np.zeros((3, model.nv))
    R0, p0 = kin.R[0], kin.p[0]
    ang = R0 @ tree.S_base[:3]
    J[:, :b] = R0 @ tree.S_base[3:] + _cross(ang.T, c - p0).T
    # every joint moves the mass of its subtree
    sub_m = model.support.T[1:] @ m
    sub_mc = model.support.T[1:] @ (m[:, None] * world)
    axes = np.einsum("kij,kj->ki", kin.R[1:], tree.axis[1:])
    rev = tree.jtype[1:] == 0
    cols = np.zeros((model.n, 3))
    cols[rev] = _cross(axes[rev], sub_mc[rev] - sub_m[rev, None] * kin.p[1:][rev])
    cols[~rev] = axes[~rev] * sub_m[~rev, None]
    J[:, b:] = cols.T / mtot
    return J[:2] if model.base_dim == 3 else J


def com_drift(model: RobotModel, state: RobotState, kin: Kinematics | None = None) -> np.ndarray:
    """COM acceleration at ``qdd = 0``."""
    if kin is None or kin.acc is None:
        kin = kinematics(model, state, drift=True)
    m, coms, _ = _com_terms(model, kin)
    w, v = kin.vel[:, :3], kin.vel[:, 3:]
    dw, dv = kin.acc[:, :3], kin.acc[:, 3:]
    lin = dv + _cross(dw, coms) + _cross(w, v + _cross(w, coms))
    a = np.einsum("k,kij,kj->i", m, kin.R, lin) / m.sum()
    return a[:2] if model.base_dim == 3 else a
