"""Fixed-step semi-implicit Euler integration of floating-base dynamics.

Each step evaluates ``qdd = M^-1 (S^T tau + sum J_k^T w_k - h)``, updates the
velocity first and then the configuration with the new velocity.  Contact
damping is taken at the new velocity (linearly implicit):
``(M + dt sum J_k^T C_k J_k) dv = dt rhs``.  Light links pressed on stiff,
damped contacts (a foot rotating about its ankle) otherwise need steps
shorter than ``2 I / c`` to stay stable.  The base
velocity is then corrected so that the total spatial momentum (world frame,
about the world origin) equals its previous value plus the impulse of
gravity and contact wrenches over the step.  Plain Euler lets momentum drift
by O(dt) per unit time even without external forces; the correction makes
it exact in that case, and changes the trajectory only at O(dt^2) per step.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import DimensionError, NotPositiveDefinite, SimulationDiverged
from ..rbd import dynamics
from ..rbd.model import RobotState


def _base_transform(model, q):
    """Map body-frame base momentum ``M[:b] v`` to world momentum about the origin."""
    R, p = model.base_pose(q)
    b = model.base_dim
    T = np.zeros((b, b))
    if b == 3:
        T[:2, :2] = R[:2, :2]
        T[2, :2] = np.array([-p[1], p[0]]) @ R[:2, :2]
        T[2, 2] = 1.0
    else:
        px = np.array([[0, -p[2], p[1]], [p[2], 0, -p[0]], [-p[1], p[0], 0]])
        T[:3, :3] = R
        T[3:, :3] = px @ R
        T[3:, 3:] = R
    return T


def world_momentum(model, state, M=None) -> np.ndarray:
    """Total momentum in world axes about the world origin.

    Planar: ``(p_x, p_y, L_z)``; spatial: ``(p, L)``.
    """
    if M is None:
        M = dynamics.mass_matrix(model, state)
    b = model.base_dim
    return _base_transform(model, state.q) @ (M[:b] @ state.qd)


def external_impulse_rate(model, state, external_forces, kin=None) -> np.ndarray:
    """Gravity plus frame wrenches, as a world wrench about the origin."""
    kin = kin or dynamics.kinematics(model, state)
    c = dynamics.com(model, state, kin)
    m = model.total_mass
    g = model.gravity
    if model.base_dim == 3:
        F = m * g[:2]
        out = np.array([F[0], F[1], c[0] * F[1] - c[1] * F[0]])
        for name, w in external_forces.items():
            _, p = dynamics.frame_pose(model, state, name, kin)
            out += (w[0], w[1], w[2] + p[0] * w[1] - p[1] * w[0])
        return out
    F = m * g
    out = np.concatenate((F, np.cross(c, F)))
    for name, w in external_forces.items():
        _, p = dynamics.frame_pose(model, state, name, kin)
        out[:3] += w[:3]
        out[3:] += w[3:] + np.cross(p, w[:3])
    return out


class Integrator:
    """Stateful stepper that carries the mass matrix and momentum between steps.

    Parameters
    ----------
    model : RobotModel
    contact : ContactModel, optional
    momentum_correction : bool
        Apply the base-velocity momentum correction (see module docstring).
    implicit_damping : bool
        Take contact damping at the new velocity (see module docstring).
    """

    def __init__(self, model, contact=None, momentum_correction=True, implicit_damping=True):
        self.model = model
        self.contact = contact
        self.momentum_correction = momentum_correction
        self.implicit_damping = implicit_damping
        self._M = None
        self._momentum = None
        self._q = None
        self.last_reading = None

    def reset(self):
        self._M = self._momentum = self._q = None

    def _cached(self, state):
        if self._q is None or not np.array_equal(self._q, state.q) or self._momentum is None:
            self._M = dynamics.mass_matrix(self.model, state)
            self._momentum = world_momentum(self.model, state, self._M)
            self._q = state.q.copy()
        return self._M

    def step(self, state, tau, dt: float) -> RobotState:
        """Advance `state` by `dt` with joint torques `tau` held constant."""
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        model = self.model
        tau = np.asarray(tau, dtype=float)
        if tau.shape != (model.n,):
            raise DimensionError(f"tau must have length {model.n}, got {tau.shape}")
        state = state.validate(model)
        b = model.base_dim
        M = self._cached(state)
        kin = dynamics.kinematics(model, state, velocity=True)
        ext = {}
        if self.contact is not None:
            self.last_reading = self.contact.forces(model, state, kin)
            ext = self.last_reading.external_forces
        rhs = -dynamics.inverse_dynamics(model, state, np.zeros(model.nv), ext)
        rhs[b:] += tau
        H = M
        jac = {}
        if self.implicit_damping and self.last_reading is not None and self.last_reading.damping:
            H = M.copy()
            for fr, C in self.last_reading.damping.items():
                J = jac[fr] = dynamics.frame_jacobian(model, state, fr, kin)
                H += dt * (J.T @ C @ J)
        try:
            dv = dt * cho_solve(cho_factor(H), rhs)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"mass matrix: {exc}") from None
        if jac:
            # contact wrenches actually applied over the step
            ext = dict(ext)
            for fr, J in jac.items():
                ext[fr] = ext[fr] - self.last_reading.damping[fr] @ (J @ dv)
        momentum = self._momentum + dt * external_impulse_rate(model, state, ext, kin)
        qd = state.qd + dv
        q = model.integrate(state.q, qd, dt)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise SimulationDiverged("non-finite state after integration step")
        new = RobotState(q, qd)
        M_new = dynamics.mass_matrix(model, new)
        if self.momentum_correction:
            T = _base_transform(model, q)
            target = np.linalg.solve(T, momentum) - M_new[:b, b:] @ qd[b:]
            qd[:b] = np.linalg.solve(M_new[:b, :b], target)
        if np.max(np.abs(qd)) > 1e4 or np.max(np.abs(q[:b])) > 1e4:
            raise SimulationDiverged(f"state magnitude exploded (|qd|max={np.max(np.abs(qd)):.3g})")
        self._M, self._q = M_new, q.copy()
        self._momentum = momentum if self.momentum_correction else world_momentum(model, new, M_new)
        return new


def step(model, state, tau, contact=None, dt: float = 1e-3, substeps: int = 1) -> RobotState:
    """One semi-implicit Euler step (optionally split into `substeps`).

    Raises
    ------
    SimulationDiverged
        If the state becomes non-finite or explodes.
    """
    integ = Integrator(model, contact)
    h = dt / substeps
    for _ in range(substeps):
        state = integ.step(state, tau, h)
    return state
