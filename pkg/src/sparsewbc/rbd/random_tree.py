"""Random kinematic trees for property tests, oracles and benchmarks."""
from __future__ import annotations

import numpy as np

from .model import Joint, Link, RobotModel, RobotState, quat_exp, quat_to_matrix, rot_z


def _random_inertia(rng, scale):
    A = rng.normal(size=(3, 3))
    return scale * (A @ A.T + 0.5 * np.eye(3))


def random_tree(n: int, base_dim: int = 6, rng=None, *, prismatic=0.15, branching=0.3, n_frames=4) -> RobotModel:
    """Random floating-base tree with `n` joints.

    Parent links are drawn so that chains are favoured (``branching`` is
    the probability of attaching to an earlier link instead of the last
    one).  Frames ``f0 .. f{n_frames-1}`` are attached to distinct random
    non-base links while enough links exist.
    """
    rng = np.random.default_rng(rng)
    planar = base_dim == 3
    links = [Link("base", float(rng.uniform(2.0, 8.0)), rng.normal(scale=0.05, size=3) * ([1, 1, 0] if planar else 1),
                  _random_inertia(rng, 0.05))]
    for i in range(1, n + 1):
        parent = i - 1 if (i == 1 or rng.random() > branching) else int(rng.integers(0, i))
        kind = "prismatic" if rng.random() < prismatic else "revolute"
        if planar:
            R = rot_z(rng.uniform(-np.pi, np.pi))
            p = np.array([*rng.uniform(-0.3, 0.3, 2), 0.0])
            axis = np.array([0.0, 0.0, 1.0]) if kind == "revolute" else np.array([*rng.normal(size=2), 0.0])
            com = np.array([*rng.uniform(-0.15, 0.15, 2), 0.0])
        else:
            R = quat_to_matrix(quat_exp(rng.normal(size=3)))
            p = rng.uniform(-0.3, 0.3, 3)
            axis = rng.normal(size=3)
            com = rng.uniform(-0.15, 0.15, 3)
        joint = Joint(f"j{i}", kind, axis / np.linalg.norm(axis), R, p)
        links.append(Link(f"l{i}", float(rng.uniform(0.3, 3.0)), com, _random_inertia(rng, 0.01), f"l{parent}" if parent else "base", joint))
    frames = []
    # distinct non-base links while they last, so contacts are independent
    order = list(rng.permutation(np.arange(1, n + 1))) if n else []
    for k in range(n_frames):
        link = links[int(order.pop()) if order else int(rng.integers(0, n + 1))].name
        if planar:
            frames.append((f"f{k}", link, rot_z(rng.uniform(-np.pi, np.pi)), np.array([*rng.uniform(-0.2, 0.2, 2), 0.0])))
        else:
            frames.append((f"f{k}", link, quat_to_matrix(quat_exp(rng.normal(size=3))), rng.uniform(-0.2, 0.2, 3)))
    return RobotModel(links, frames, base_dim, name=f"random_{'planar' if planar else 'spatial'}_{n}")


def random_state(model: RobotModel, rng=None, *, velocity_scale=1.0) -> RobotState:
    rng = np.random.default_rng(rng)
    q = np.concatenate((rng.uniform(-1, 1, model.nq_base), rng.uniform(-np.pi, np.pi, model.n)))
    if model.base_dim == 6:
        q[3:7] /= np.linalg.norm(q[3:7])
    return RobotState(q, velocity_scale * rng.normal(size=model.nv))
