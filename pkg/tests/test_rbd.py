import os
import subprocess
import sys

import numpy as np
import pytest

from sparsewbc.errors import DimensionError, ModelFormatError, UnknownFrame
from sparsewbc.rbd import dynamics, kernels
from sparsewbc.rbd.model import Joint, Link, RobotModel, RobotState, rot_z
from sparsewbc.rbd.modelfile import load_model, model_from_dict
from sparsewbc.rbd.random_tree import random_state, random_tree

TREES = [(n, b, seed) for seed, (n, b) in enumerate([(1, 3), (4, 3), (9, 3), (2, 6), (7, 6), (14, 6)])]


def tree(n, b, seed):
    model = random_tree(n, b, seed)
    return model, random_state(model, seed + 100)


def single_body(base_dim=3, mass=2.0, inertia=(0.1, 0.2, 0.3), gravity=None):
    return RobotModel([Link("body", mass, np.zeros(3), np.diag(inertia))], [], base_dim, gravity)


def advance(model, state, qdd, e):
    """State after time `e` under constant acceleration (second order)."""
    q = model.integrate(state.q, e * state.qd + 0.5 * e * e * np.asarray(qdd))
    return RobotState(q, state.qd + e * np.asarray(qdd))


def test_single_planar_body_mass_matrix():
    model = single_body()
    M = dynamics.mass_matrix(model, RobotState(model.neutral_configuration()))
    np.testing.assert_allclose(M, np.diag([2.0, 2.0, 0.3]), atol=1e-14)


def test_single_spatial_body_mass_matrix():
    model = single_body(6)
    M = dynamics.mass_matrix(model, RobotState(model.neutral_configuration()))
    np.testing.assert_allclose(M, np.diag([2.0, 2.0, 2.0, 0.1, 0.2, 0.3]), atol=1e-14)


def test_bias_forces_single_body():
    model = single_body()
    state = RobotState(model.neutral_configuration())
    np.testing.assert_allclose(dynamics.bias_forces(model, state), [0.0, 2.0 * 9.81, 0.0], atol=1e-12)
    free = single_body(gravity=np.zeros(3))
    np.testing.assert_array_equal(dynamics.bias_forces(free, state), np.zeros(3))


def test_zero_everything_is_zero():
    model = random_tree(5, 6, 3)
    model.gravity = np.zeros(3)
    state = RobotState(model.neutral_configuration())
    np.testing.assert_allclose(dynamics.inverse_dynamics(model, state, np.zeros(model.nv)), 0.0, atol=1e-15)


@pytest.mark.parametrize("n,b,seed", TREES)
def test_mass_matrix_spd_and_rnea(n, b, seed):
    model, state = tree(n, b, seed)
    M = dynamics.mass_matrix(model, state)
    assert np.abs(M - M.T).max() < 1e-10
    assert np.linalg.eigvalsh(M)[0] > 0
    rng = np.random.default_rng(seed)
    qdd = rng.normal(size=model.nv)
    h = dynamics.bias_forces(model, state)
    np.testing.assert_allclose(dynamics.inverse_dynamics(model, state, qdd), M @ qdd + h, rtol=0, atol=1e-9 * (1 + np.abs(M @ qdd + h).max()))


@pytest.mark.parametrize("n,b,seed", TREES)
def test_rnea_linear_in_acceleration(n, b, seed):
    model, state = tree(n, b, seed)
    rng = np.random.default_rng(seed)
    a, c = rng.normal(size=(2, model.nv))
    idf = lambda x: dynamics.inverse_dynamics(model, state, x)
    r = idf(a + c) - idf(a) - idf(c) + idf(np.zeros(model.nv))
    assert np.abs(r).max() < 1e-9


@pytest.mark.parametrize("n,b,seed", TREES)
def test_external_wrenches(n, b, seed):
    model, state = tree(n, b, seed)
    rng = np.random.default_rng(seed)
    qdd = rng.normal(size=model.nv)
    M, h = dynamics.mass_matrix(model, state), dynamics.bias_forces(model, state)
    wrenches = {f: rng.normal(size=b) for f in ("f0", "f1")}
    expected = M @ qdd + h - sum(dynamics.frame_jacobian(model, state, f).T @ w for f, w in wrenches.items())
    got = dynamics.inverse_dynamics(model, state, qdd, wrenches)
    np.testing.assert_allclose(got, expected, atol=1e-9 * (1 + np.abs(expected).max()))


def test_unknown_frame_and_bad_sizes():
    model, state = tree(3, 3, 0)
    with pytest.raises(UnknownFrame):
        dynamics.inverse_dynamics(model, state, np.zeros(model.nv), {"nope": np.zeros(3)})
    with pytest.raises(UnknownFrame):
        dynamics.frame_jacobian(model, state, "nope")
    with pytest.raises(DimensionError):
        dynamics.inverse_dynamics(model, state, np.zeros(model.nv + 1))


@pytest.mark.parametrize("n,b,seed", TREES)
def test_energy_rate(n, b, seed):
    """d/dt (kinetic + potential) equals the generalized force power."""
    model, state = tree(n, b, seed)
    rng = np.random.default_rng(seed)
    qdd = rng.normal(size=model.nv)

    def energy(s):
        T = 0.5 * s.qd @ dynamics.mass_matrix(model, s) @ s.qd
        c = dynamics.com(model, s)
        return T - model.total_mass * model.gravity[: c.size] @ c

    e = 1e-5
    rate = (energy(advance(model, state, qdd, e)) - energy(advance(model, state, qdd, -e))) / (2 * e)
    power = state.qd @ dynamics.inverse_dynamics(model, state, qdd)
    assert abs(rate - power) <= 1e-6 * max(1.0, abs(power))


def _fd_jacobian_and_drift(model, state, frame, e=1e-6):
    nv = model.nv
    rows = [0, 1, 5] if model.base_dim == 3 else list(range(6))
    J = np.zeros((len(rows), nv))

    def twist_of(q, v):
        s = RobotState(q, v)
        return dynamics.frame_velocity(model, s, frame)

    for i in range(nv):
        d = np.zeros(nv)
        d[i] = 1.0
        J[:, i] = twist_of(state.q, d)
    R0, p0 = dynamics.frame_pose(model, state, frame)
    Jfd = np.zeros_like(J)
    for i in range(nv):
        d = np.zeros(nv)
        d[i] = e
        Rp, pp = dynamics.frame_pose(model, RobotState(model.integrate(state.q, d), state.qd), frame)
        Rm, pm = dynamics.frame_pose(model, RobotState(model.integrate(state.q, -d), state.qd), frame)
        dR = (Rp - Rm) @ R0.T / (2 * e)
        w = np.array([dR[2, 1], dR[0, 2], dR[1, 0]])
        v = (pp - pm) / (2 * e)
        Jfd[:, i] = np.concatenate((v, w))[rows]
    # drift: time derivative of J(q) qd at qdd = 0
    plus = advance(model, state, np.zeros(nv), e)
    minus = advance(model, state, np.zeros(nv), -e)
    drift = (dynamics.frame_jacobian(model, plus, frame) @ state.qd - dynamics.frame_jacobian(model, minus, frame) @ state.qd) / (2 * e)
    return Jfd, drift


@pytest.mark.parametrize("n,b,seed", TREES)
def test_jacobians_against_finite_differences(n, b, seed):
    model, state = tree(n, b, seed)
    for frame in ["f0", "f1", "f2", "base"]:
        J = dynamics.frame_jacobian(model, state, frame)
        Jfd, drift = _fd_jacobian_and_drift(model, state, frame)
        assert np.linalg.norm(J - Jfd) <= 1e-6 * max(1.0, np.linalg.norm(J))
        np.testing.assert_allclose(dynamics.frame_velocity(model, state, frame), J @ state.qd, atol=1e-12)
        jd = dynamics.jdot_qdot(model, state, frame)
        assert np.linalg.norm(jd - drift) <= 1e-5 * max(1.0, np.linalg.norm(jd))


@pytest.mark.parametrize("n,b,seed", TREES)
def test_com_jacobian_and_drift(n, b, seed):
    model, state = tree(n, b, seed)
    e = 1e-6
    Jc = dynamics.com_jacobian(model, state)
    fd = np.column_stack([
        (dynamics.com(model, RobotState(model.integrate(state.q, e * d), state.qd))
         - dynamics.com(model, RobotState(model.integrate(state.q, -e * d), state.qd))) / (2 * e)
        for d in np.eye(model.nv)
    ])
    fd = fd[: Jc.shape[0]]
    assert np.linalg.norm(Jc - fd) <= 1e-6 * max(1.0, np.linalg.norm(Jc))
    plus = advance(model, state, np.zeros(model.nv), e)
    minus = advance(model, state, np.zeros(model.nv), -e)
    drift = (dynamics.com_jacobian(model, plus) - dynamics.com_jacobian(model, minus)) @ state.qd / (2 * e)
    np.testing.assert_allclose(dynamics.com_drift(model, state), drift, atol=1e-5 * max(1.0, np.linalg.norm(drift)))


def test_base_frame_has_no_joint_columns():
    model, state = tree(6, 6, 1)
    J = dynamics.frame_jacobian(model, state, "base")
    np.testing.assert_array_equal(J[:, model.base_dim:], 0.0)


def test_com_single_body_and_symmetry():
    model = single_body()
    q = np.array([0.3, -0.2, 0.7])
    np.testing.assert_allclose(dynamics.com(model, RobotState(q))[:2], q[:2], atol=1e-15)
    arm = lambda name, x: Link(name, 1.0, np.array([np.sign(x) * 0.1, 0, 0]), np.diag([1e-3] * 3), "body",
                               Joint(f"{name}_j", "revolute", np.array([0, 0, 1.0]), np.eye(3), np.array([x, 0, 0])))
    sym = RobotModel([Link("body", 2.0, np.zeros(3), np.diag([0.1] * 3)), arm("l", -0.2), arm("r", 0.2)], [], 3)
    q = np.array([0.0, 0.5, 0.0, 0.4, -0.4])
    assert abs(dynamics.com(sym, RobotState(q))[0]) < 1e-15


@pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="compiled kernels not built")
@pytest.mark.parametrize("n,b,seed", TREES)
def test_compiled_kernels_match_python(n, b, seed):
    model, state = tree(n, b, seed)
    rng = np.random.default_rng(seed)
    qdd = rng.normal(size=model.nv)
    ext = {"f0": rng.normal(size=b)}
    out = {}
    previous = kernels.active
    try:
        for name in ("python", "compiled"):
            kernels.use(name)
            out[name] = (
                dynamics.mass_matrix(model, state),
                dynamics.inverse_dynamics(model, state, qdd, ext),
                dynamics.frame_jacobian(model, state, "f1"),
                dynamics.jdot_qdot(model, state, "f1"),
                dynamics.com_jacobian(model, state),
            )
    finally:
        kernels.use(previous)
    for a, c in zip(out["python"], out["compiled"]):
        np.testing.assert_allclose(a, c, rtol=1e-12, atol=1e-12)


def test_backend_switch_validation():
    with pytest.raises(ValueError):
        kernels.use("fortran")
    assert kernels.active in kernels.BACKENDS


def test_pure_python_switch_at_import():
    code = "from sparsewbc.rbd import kernels; print(kernels.active)"
    env = dict(os.environ, SPARSEWBC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_integrate_keeps_unit_quaternion():
    model, state = tree(3, 6, 2)
    q = model.integrate(state.q, np.full(model.nv, 3.0))
    assert abs(np.linalg.norm(q[3:7]) - 1.0) < 1e-14


# model files ----------------------------------------------------------------


def test_bundled_model_loads(biped):
    assert biped.base_dim == 3 and biped.n == 7
    assert {"l_sole", "r_sole", "r_hand"} <= set(biped.frames)
    assert biped.source_hash


BASE = {
    "format": "sparsewbc-model/1",
    "base": "planar",
    "links": [
        {"name": "body", "mass": 1.0, "inertia": [0.1, 0.1, 0.1]},
        {"name": "arm", "parent": "body", "mass": 0.5, "inertia": [0.01, 0.01, 0.01], "joint": {"axis": [0, 0, 1]}},
    ],
}


def _with(**patch):
    import copy

    d = copy.deepcopy(BASE)
    for path, value in patch.items():
        node = d
        keys = path.split("__")
        for k in keys[:-1]:
            node = node[int(k)] if k.isdigit() else node[k]
        last = keys[-1]
        node[int(last) if last.isdigit() else last] = value
    return d


@pytest.mark.parametrize(
    "patch",
    [
        {"format": "urdf"},
        {"base": "cylindrical"},
        {"links__1__mass": -1.0},
        {"links__1__inertia": [1.0, -1.0, 1.0]},
        {"links__1__parent": None},
        {"links__1__parent": "ghost"},
        {"links__1__joint": "revolute"},
        {"links__1__joint": {"axis": [0, 0, 0]}},
        {"links__1__joint": {"type": "helical"}},
        {"links__1__name": "body"},
        {"links": []},
        {"frames": [{"name": "tip", "link": "ghost"}]},
    ],
)
def test_invalid_model_documents(patch):
    with pytest.raises(ModelFormatError):
        model_from_dict(_with(**patch))


def test_valid_document_and_corrupt_file(tmp_path):
    assert model_from_dict(BASE).n == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("format: sparsewbc-model/1\nlinks: [ {name: a, mass: 1\n")
    with pytest.raises(ModelFormatError):
        load_model(bad)


def test_planar_joint_axes_must_be_in_plane():
    with pytest.raises(ModelFormatError):
        model_from_dict(_with(links__1__joint={"axis": [1, 0, 0]}))
    assert isinstance(rot_z(0.1), np.ndarray)
