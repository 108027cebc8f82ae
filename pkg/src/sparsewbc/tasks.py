"""Task construction: references, PD feedback and task levels.

Motion tasks follow ``J qdd = xdd* - Jdot qd`` with
``xdd* = xdd_r + Kd (xd_r - xd) + Kp (x_r - x)``.  Force tasks select
components of the controlled forces ``f_f``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, IndexOutOfRange, InvalidDuration
from .lexls import TaskLevel
from .rbd import dynamics
from .rbd.model import quat_exp, quat_to_matrix

DEFAULT_KP = 10.0
DEFAULT_KD = 5.0


@dataclass(frozen=True)
class Trajectory:
    """Point-to-point reference from `x0` to `xf` in `duration` seconds,
    starting at time `t0`."""

    x0: np.ndarray
    xf: np.ndarray
    duration: float
    t0: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidDuration(f"duration must be positive, got {self.duration}")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        xf = np.atleast_1d(np.asarray(self.xf, dtype=float))
        if x0.shape != xf.shape:
            raise DimensionError(f"x0 {x0.shape} and xf {xf.shape} differ")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xf", xf)

    def __call__(self, t):
        return min_jerk(self, t)


def min_jerk(traj: Trajectory, t: float):
    """Quintic minimum-jerk reference.

    ``s = 10 u^3 - 15 u^4 + 6 u^5`` with ``u = (t - t0) / T``, clamped to
    [0, 1]; velocity and acceleration vanish at both ends.

    Returns
    -------
    x, xd, xdd : ndarray
    """
    T = traj.duration
    u = min(max((t - traj.t0) / T, 0.0), 1.0)
    s = u**3 * (10.0 + u * (-15.0 + 6.0 * u))
    ds = 30.0 * u**2 * (1.0 - u) ** 2 / T
    dds = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u) / T**2
    d = traj.xf - traj.x0
    return traj.x0 + s * d, ds * d, dds * d


@dataclass(frozen=True)
class PDGains:
    """Diagonal PD gains; scalars broadcast to every task coordinate."""

    Kp: np.ndarray | float = DEFAULT_KP
    Kd: np.ndarray | float = DEFAULT_KD

    def __post_init__(self):
        Kp = np.asarray(self.Kp, dtype=float)
        Kd = np.asarray(self.Kd, dtype=float)
        if np.any(Kp <= 0) or np.any(Kd <= 0):
            raise ValueError("PD gains must be positive")
        object.__setattr__(self, "Kp", Kp)
        object.__setattr__(self, "Kd", Kd)


def pd_task_acc(x, xd, refs, gains: PDGains | None = None) -> np.ndarray:
    """Desired task acceleration ``xdd_r + Kd (xd_r - xd) + Kp (x_r - x)``."""
    gains = gains or PDGains()
    x_r, xd_r, xdd_r = (np.asarray(r, dtype=float) for r in refs)
    x, xd = np.asarray(x, dtype=float), np.asarray(xd, dtype=float)
    if not (x.shape == xd.shape == x_r.shape == xd_r.shape == xdd_r.shape):
        raise DimensionError("task state and references must have the same shape")
    return xdd_r + gains.Kd * (xd_r - xd) + gains.Kp * (x_r - x)


def ramp(t: float, t0: float, t1: float, v0, v1):
    """Linear interpolation from `v0` at `t0` to `v1` at `t1`, held outside."""
    if t1 <= t0:
        return np.asarray(v1, dtype=float) if t >= t1 else np.asarray(v0, dtype=float)
    u = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
    return (1.0 - u) * np.asarray(v0, dtype=float) + u * np.asarray(v1, dtype=float)


# --------------------------------------------------------------------------- task-space state


def rotation_log(R) -> np.ndarray:
    """Rotation vector of a rotation matrix."""
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    angle = np.arccos(c)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-9:
        return 0.5 * w
    if np.pi - angle < 1e-6:
        # near pi: axis from the symmetric part
        B = 0.5 * (R + np.eye(3))
        axis = B[:, np.argmax(np.diag(B))]
        return angle * axis / np.linalg.norm(axis)
    return angle / (2.0 * np.sin(angle)) * w


def task_state(model, state, target: str, kin=None):
    """Task coordinates and velocity.

    `target` is a frame name, ``"com"`` (ground projection), ``"com_full"``
    or ``"posture"``.  Frames give
    ``(x, y, theta)`` in planar models and ``(position, rotation vector)``
    in spatial ones.
    """
    if target == "posture":
        return model.joint_positions(state.q).copy(), state.qd[model.base_dim :].copy()
    kin = kin or dynamics.kinematics(model, state)
    if target in ("com", "com_full"):
        c, v = dynamics.com(model, state, kin), dynamics.com_jacobian(model, state, kin) @ state.qd
        if target == "com":
            ground = [0] if model.base_dim == 3 else [0, 1]
            c, v = c[ground], v[ground]
        return c, v
    R, p = dynamics.frame_pose(model, state, target, kin)
    J = dynamics.frame_jacobian(model, state, target, kin)
    if model.base_dim == 3:
        x = np.array([p[0], p[1], np.arctan2(R[1, 0], R[0, 0])])
    else:
        x = np.concatenate((p, rotation_log(R)))
    return x, J @ state.qd


def task_error(model, x_ref, x) -> np.ndarray:
    """``x_ref - x`` with angles wrapped (planar) or composed (spatial)."""
    e = np.asarray(x_ref, dtype=float) - np.asarray(x, dtype=float)
    if model.base_dim == 3 and e.shape == (3,):
        e[2] = (e[2] + np.pi) % (2.0 * np.pi) - np.pi
    elif model.base_dim == 6 and e.shape == (6,):
        R_ref = quat_to_matrix(quat_exp(x_ref[3:]))
        R = quat_to_matrix(quat_exp(x[3:]))
        e[3:] = rotation_log(R_ref @ R.T)
    return e


# --------------------------------------------------------------------------- levels


def _select(rows, axes):
    return rows if axes is None else rows[list(axes)]


def motion_level(model, state, target: str, xdd_star, priority: int, axes=None, kin=None, name=None) -> TaskLevel:
    """Motion level ``A qdd = xdd* - Jdot qd`` for a frame, the COM or the posture.

    Parameters
    ----------
    target : str
        Frame name, ``"com"`` (ground projection: x in planar models,
        x-y in spatial ones), ``"com_full"`` or ``"posture"``.
    axes : sequence of int, optional
        Subset of task coordinates; `xdd_star` has one entry per selected
        coordinate.

    Raises
    ------
    UnknownFrame
        If `target` is not a frame of the model.
    """
    xdd_star = np.atleast_1d(np.asarray(xdd_star, dtype=float))
    if target == "posture":
        A = np.zeros((model.n, model.nv))
        A[:, model.base_dim :] = np.eye(model.n)
        drift = np.zeros(model.n)
    else:
        if kin is None or kin.acc is None:
            kin = dynamics.kinematics(model, state, drift=True)
        if target in ("com", "com_full"):
            A = dynamics.com_jacobian(model, state, kin)
            drift = dynamics.com_drift(model, state, kin)
            if target == "com":
                ground = [0] if model.base_dim == 3 else [0, 1]
                A, drift = A[ground], drift[ground]
        else:
            A = dynamics.frame_jacobian(model, state, target, kin)
            drift = dynamics.jdot_qdot(model, state, target, kin)
    if axes is not None:
        A, drift = _select(A, axes), _select(drift, axes)
    if xdd_star.shape != (A.shape[0],):
        raise DimensionError(f"task {target!r} has {A.shape[0]} rows, got {xdd_star.shape[0]} accelerations")
    return TaskLevel(A, xdd_star - drift, priority, "motion", name or target)


def force_level(cs, components, f_des, priority: int, name: str = "force") -> TaskLevel:
    """Force level selecting components of ``f_f``.

    Parameters
    ----------
    components : sequence of int or str
        Row indices into ``f_f`` or row labels such as ``"r_hand:x"``.

    Raises
    ------
    IndexOutOfRange
        If an index is not below ``k_f`` or a label is unknown.
    """
    labels = list(cs.labels_f)
    idx = []
    for c in components:
        if isinstance(c, str):
            if c not in labels:
                raise IndexOutOfRange(f"no controlled constraint row labelled {c!r}")
            idx.append(labels.index(c))
        else:
            if not 0 <= int(c) < cs.k_f:
                raise IndexOutOfRange(f"force component {c} out of range for k_f={cs.k_f}")
            idx.append(int(c))
    A = np.zeros((len(idx), cs.k_f))
    A[np.arange(len(idx)), idx] = 1.0
    f_des = np.atleast_1d(np.asarray(f_des, dtype=float))
    if f_des.shape != (len(idx),):
        raise DimensionError(f"{len(idx)} components selected, got {f_des.shape[0]} targets")
    return TaskLevel(A, f_des, priority, "force", name)
