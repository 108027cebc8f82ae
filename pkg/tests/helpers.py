"""Shared builders for the planar biped tests."""
import numpy as np

from sparsewbc.constraints import CONTROLLED, SUPPORTING, assemble, contact_rows
from sparsewbc.rbd import dynamics
from sparsewbc.rbd.model import RobotState
from sparsewbc.sim.runner import initial_state
from sparsewbc.sim.scenario import load_scenario


def standing_state(model, scenario="test2_pfc"):
    """Double-support posture of the shipped stepping scenario, at rest."""
    return initial_state(model, load_scenario(scenario))


def feet_constraints(model, state, controlled_right=False):
    kin = dynamics.kinematics(model, state, drift=True)
    rows = [
        contact_rows(model, state, "l_sole", SUPPORTING, kin=kin),
        contact_rows(model, state, "r_sole", CONTROLLED if controlled_right else SUPPORTING, kin=kin),
    ]
    return assemble(rows, model.nv)


def moving(state, rng, scale=0.3):
    return RobotState(state.q.copy(), rng.normal(scale=scale, size=state.qd.size))


def supporting_forces(model, state, cs, qdd, f_f, tau):
    """Least-squares ``f_s`` closing the equations of motion (numpy only)."""
    r = dynamics.mass_matrix(model, state) @ qdd + dynamics.bias_forces(model, state) - cs.J_f.T @ f_f
    r[model.base_dim:] -= tau
    return np.linalg.lstsq(cs.J_s.T, r, rcond=None)[0]


def brute_force_supporting(model, state, cs, qdd, f_f, tau_ref, Z_ss, W_f_inv):
    """Minimize ``f_s^T W_f^{-1} f_s`` over ``tau = tau_ref + Z_ss z`` directly.

    ``f_s`` is affine in ``z``, so the cost is a dense quadratic in ``z``
    whose minimizer is a small least-squares problem.
    """
    f0 = supporting_forces(model, state, cs, qdd, f_f, tau_ref)
    F = np.column_stack([supporting_forces(model, state, cs, qdd, f_f, tau_ref + z) - f0 for z in Z_ss.T])
    C = np.linalg.cholesky(W_f_inv)
    z = np.linalg.lstsq(C.T @ F, -C.T @ f0, rcond=None)[0]
    tau = tau_ref + Z_ss @ z
    return tau, supporting_forces(model, state, cs, qdd, f_f, tau)


def foot_weights(w_l, normal_forces):
    """Per-foot ``diag(w_l / f_n)`` stacked into ``W_f^{-1}``."""
    return np.diag(np.concatenate([np.asarray(w_l, float) / max(fn, 1.0) for fn in normal_forces]))


def weighted_cost(f_s, W_f_inv):
    return float(f_s @ W_f_inv @ f_s)


def with_gravity(model, gravity):
    """Copy of `model` with a different gravity vector."""
    frames = [(f.name, model.links[f.link].name, f.R, f.p) for f in model.frames.values() if f.name not in model.link_index]
    return type(model)(model.links, frames, model.base_dim, np.asarray(gravity, dtype=float), model.name)
