import numpy as np
import pytest

from helpers import feet_constraints, standing_state
from sparsewbc.constraints import SUPPORTING, ConstraintRows, assemble, contact_rows
from sparsewbc.dense_ref import bench, build_dense, dense_control, dense_lex_solve, measurement_level
from sparsewbc.errors import DimensionError, InfeasibleConstraints
from sparsewbc.instances import random_instance
from sparsewbc.lexls import TaskLevel
from sparsewbc.rbd.model import Joint, Link, RobotModel, RobotState
from sparsewbc.sparse_solver import control_tick


@pytest.fixture(scope="module")
def instances():
    rng = np.random.default_rng(77)
    return [random_instance(rng=rng) for _ in range(10)]


def toy(gravity=None):
    """Planar body with one revolute joint."""
    arm = Link("arm", 0.5, np.array([0.1, 0, 0]), np.diag([1e-3] * 3), "body",
               Joint("j", "revolute", np.array([0, 0, 1.0]), np.eye(3), np.array([0.1, 0, 0])))
    return RobotModel([Link("body", 1.0, np.zeros(3), np.diag([0.1] * 3)), arm], [("tip", "arm", np.eye(3), np.array([0.2, 0, 0]))], 3, gravity)


def test_toy_dimensions():
    model = toy()
    state = RobotState(model.neutral_configuration())
    cs = assemble([contact_rows(model, state, "body")])
    dp = build_dense(model, state, cs)
    n, b, k = 1, 3, 3
    assert dp.D.shape == (n + b + k, 2 * n + b + k) and dp.d.shape == (n + b + k,)
    assert dp.layout["tau"] == slice(7, 8)


def test_static_zero_gravity_rhs():
    model = toy(np.zeros(3))
    state = RobotState(model.neutral_configuration())
    cs = assemble([contact_rows(model, state, "body")])
    dp = build_dense(model, state, cs)
    np.testing.assert_array_equal(dp.d[: model.nv], 0.0)
    np.testing.assert_array_equal(dp.d[model.nv:], cs.c_c)


def test_block_structure(instances):
    inst = instances[0]
    dp = build_dense(inst.model, inst.state, inst.cs)
    nv, k = inst.model.nv, inst.cs.k
    np.testing.assert_array_equal(dp.D[nv:, :nv], inst.cs.J_c)
    np.testing.assert_array_equal(dp.D[:nv, nv:nv + k], -inst.cs.J_c.T)
    np.testing.assert_array_equal(dp.D[nv:, nv:], 0.0)


def test_no_tasks_is_min_norm_feasible(instances):
    for inst in instances:
        dp = build_dense(inst.model, inst.state, inst.cs)
        sol = dense_lex_solve(dp, [])
        np.testing.assert_allclose(dp.D @ sol.y, dp.d, atol=1e-9 * (1 + np.abs(dp.d).max()))
        np.testing.assert_allclose(sol.y, np.linalg.pinv(dp.D) @ dp.d, atol=1e-9 * (1 + np.abs(sol.y).max()))


def test_nullity(instances):
    for inst in instances:
        dp = build_dense(inst.model, inst.state, inst.cs)
        k_hat = np.linalg.matrix_rank(inst.cs.J_c)
        assert dense_lex_solve(dp, []).nullity == inst.model.n + inst.cs.k - k_hat


def test_agrees_with_sparse(instances):
    for inst in instances:
        sol = control_tick(inst.model, inst.state, inst.cs, inst.levels, inst.f_hat)
        ref = dense_control(inst.model, inst.state, inst.cs, inst.levels, inst.f_hat)
        np.testing.assert_allclose(sol.qdd, ref.qdd, rtol=0, atol=1e-8 * max(1, np.linalg.norm(ref.qdd)))
        np.testing.assert_allclose(sol.f_f, ref.f_f, rtol=0, atol=1e-8 * max(1, np.linalg.norm(ref.f_f)))


def test_sparse_solution_satisfies_dense_system(instances):
    for inst in instances:
        sol = control_tick(inst.model, inst.state, inst.cs, inst.levels, inst.f_hat)
        dp = build_dense(inst.model, inst.state, inst.cs)
        y = np.concatenate((sol.qdd, sol.f_f, sol.f_s, sol.tau))
        assert np.linalg.norm(dp.D @ y - dp.d) <= 1e-8 * (1 + np.linalg.norm(dp.d))


def test_measurement_level():
    inst = random_instance(k_f=4, rng=7, rank_deficient=True)
    lv = measurement_level(inst.cs, inst.f_hat)
    assert lv.rows == 1 and lv.kind == "force"
    assert measurement_level(random_instance(k_f=3, rng=8, rank_deficient=False).cs, np.zeros(3)) is None


def test_inconsistent_constraints(biped):
    state = standing_state(biped)
    cs = feet_constraints(biped, state)
    row = ConstraintRows(cs.J_s[:1], cs.c_s[:1] + 1.0, SUPPORTING)
    bad = assemble([ConstraintRows(cs.J_s, cs.c_s, SUPPORTING), row])
    with pytest.raises(InfeasibleConstraints):
        dense_lex_solve(build_dense(biped, state, bad), [])


def test_lift_width_check(instances):
    inst = instances[0]
    dp = build_dense(inst.model, inst.state, inst.cs)
    with pytest.raises(DimensionError):
        dp.lift(TaskLevel(np.eye(2), np.zeros(2), 0, "motion"))
    with pytest.raises(DimensionError):
        build_dense(toy(), RobotState(toy().neutral_configuration()), inst.cs)


def test_bench_smoke():
    rep = bench(n=4, k_s=3, k_f=0, repetitions=5, base_dim=3)
    assert {"sparse_decompose_ms", "dense_decompose_ms", "ratio", "sparse_std_ms", "dense_std_ms"} <= set(rep)
    assert rep["sparse_decompose_ms"] > 0 and rep["dense_decompose_ms"] > 0


def test_bench_end_to_end():
    rep = bench(n=8, k_s=6, k_f=3, repetitions=3, end_to_end=True)
    assert rep["sparse_tick_ms"] > 0 and rep["dense_tick_ms"] > 0
