from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsewbc.errors import DimensionError
from sparsewbc.lexls import TaskLevel, lex_solve


def oracle(levels, dim):
    """Solve each level over an explicit affine parameterization of the
    previous solution set, with numpy's lstsq and SVD only."""
    x0 = np.zeros(dim)
    T = np.eye(dim)
    for lv in sorted(levels, key=lambda lv: lv.priority):
        B = lv.A @ T
        w, *_ = np.linalg.lstsq(B, lv.a - lv.A @ x0, rcond=1e-10)
        x0 = x0 + T @ w
        u, s, vt = np.linalg.svd(B)
        r = int(np.sum(s > 1e-10 * max(1.0, s.max(initial=0))))
        T = T @ vt[r:].T
    # minimum-norm point of the final affine set
    return x0 - T @ (T.T @ x0)


def random_cascade(rng, dim, n_levels=3):
    levels = []
    for p in range(n_levels):
        m = int(rng.integers(1, dim + 1))
        r = int(rng.integers(1, m + 1))
        A = rng.normal(size=(m, r)) @ rng.normal(size=(r, dim))
        levels.append(TaskLevel(A, rng.normal(size=m), p))
    return levels


def test_square_full_rank(rng):
    A = rng.normal(size=(4, 4))
    a = rng.normal(size=4)
    res = lex_solve([TaskLevel(A, a)], 4)
    np.testing.assert_allclose(A @ res.z, a, atol=1e-12)
    assert res.residuals[0] < 1e-12 and res.nullity == 0


def test_conflicting_scalars():
    res = lex_solve([TaskLevel([[1.0]], [1.0], 0), TaskLevel([[1.0]], [5.0], 1)], 1)
    assert res.z[0] == pytest.approx(1.0)
    assert res.residuals == pytest.approx([0.0, 4.0])


def test_priority_order_not_input_order():
    res = lex_solve([TaskLevel([[1.0]], [5.0], 3), TaskLevel([[1.0]], [1.0], 1)], 1)
    assert res.z[0] == pytest.approx(1.0)


def test_equal_priorities_are_stacked():
    res = lex_solve([TaskLevel([[1.0]], [1.0], 0), TaskLevel([[1.0]], [3.0], 0)], 1)
    assert res.z[0] == pytest.approx(2.0)


def test_empty_levels_and_dimension():
    assert lex_solve([], 3).z.tolist() == [0.0, 0.0, 0.0]
    res = lex_solve([TaskLevel(np.zeros((0, 3)), np.zeros(0))], 3)
    assert res.residuals == [0.0] and res.nullity == 3
    assert lex_solve([], 0).z.shape == (0,)


def test_width_mismatch():
    with pytest.raises(DimensionError):
        lex_solve([TaskLevel(np.eye(2), np.zeros(2))], 3)
    with pytest.raises(DimensionError):
        TaskLevel(np.eye(2), np.zeros(3))


def test_matches_recursion_oracle(rng):
    for _ in range(50):
        dim = int(rng.integers(1, 9))
        levels = random_cascade(rng, dim)
        np.testing.assert_allclose(lex_solve(levels, dim).z, oracle(levels, dim), atol=1e-8)


def test_redundant_level_leaves_solution(rng):
    dim = 6
    levels = random_cascade(rng, dim, 2)
    z = lex_solve(levels, dim).z
    C = rng.normal(size=(2, levels[0].A.shape[0])) @ levels[0].A
    extra = TaskLevel(C, C @ z, 5)
    np.testing.assert_allclose(lex_solve(levels + [extra], dim).z, z, atol=1e-10)


def test_concurrent_solves_match_sequential(rng):
    problems = [(random_cascade(rng, 7), 7) for _ in range(8)]
    seq = [lex_solve(lv, d).z for lv, d in problems]
    with ThreadPoolExecutor(4) as ex:
        par = list(ex.map(lambda p: lex_solve(*p).z, problems))
    for a, b in zip(seq, par):
        np.testing.assert_array_equal(a, b)


def test_damping_shrinks_step():
    A = np.array([[1.0, 0.0], [0.0, 1e-6]])
    exact = lex_solve([TaskLevel(A, [1.0, 1.0])], 2).z
    damped = lex_solve([TaskLevel(A, [1.0, 1.0])], 2, damping=1e-2).z
    assert np.linalg.norm(damped) < np.linalg.norm(exact)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_lexicographic_monotone_and_min_norm(dim, n_levels, seed):
    rng = np.random.default_rng(seed)
    levels = random_cascade(rng, dim, n_levels)
    res = lex_solve(levels, dim)
    # prefixes: adding lower levels never worsens the higher ones
    for k in range(1, n_levels):
        prefix = lex_solve(levels[:k], dim)
        for i in range(k):
            assert res.residuals[i] <= prefix.residuals[i] + 1e-8 * (1 + np.linalg.norm(levels[i].a))
    # no lexicographic optimum has a smaller norm
    ref = oracle(levels, dim)
    assert np.linalg.norm(res.z) <= np.linalg.norm(ref) + 1e-8
    # random perturbations never improve the first residual that changes
    for _ in range(5):
        z2 = res.z + rng.normal(scale=1e-3, size=dim)
        r2 = [np.linalg.norm(lv.A @ z2 - lv.a) for lv in levels]
        first = next(((a, b) for a, b in zip(r2, res.residuals) if abs(a - b) > 1e-9), None)
        assert first is None or first[0] > first[1]
