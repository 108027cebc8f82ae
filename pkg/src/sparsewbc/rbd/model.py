"""Floating-base kinematic tree: links, joints, frames and packed arrays.

A model is immutable once built.  ``base_dim`` is 3 for planar models
(motion in the x-y plane, gravity along -y) and 6 for spatial ones.

Generalized coordinates
-----------------------
planar   ``q = (x, y, theta, joints...)``, ``v = (vx, vy, omega, joints...)``
spatial  ``q = (x, y, z, qw, qx, qy, qz, joints...)``,
         ``v = (vx, vy, vz, wx, wy, wz, joints...)``

Base linear and angular velocities are expressed in the base body frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, ModelFormatError, UnknownFrame

REVOLUTE, PRISMATIC = 0, 1
JOINT_TYPES = {"revolute": REVOLUTE, "prismatic": PRISMATIC}


def rpy_matrix(rpy) -> np.ndarray:
    r, p, y = rpy
    cr, sr, cp, sp, cy, sy = np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def quat_to_matrix(quat) -> np.ndarray:
    w, x, y, z = quat
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_exp(rotvec) -> np.ndarray:
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        return np.array([1.0, *(0.5 * rotvec)])
    half = 0.5 * angle
    return np.array([np.cos(half), *(np.sin(half) / angle * rotvec)])


@dataclass(frozen=True)
class Joint:
    name: str
    type: str
    axis: np.ndarray
    origin_R: np.ndarray
    origin_p: np.ndarray


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray
    inertia: np.ndarray  # 3x3 about the COM, link axes
    parent: str | None = None
    joint: Joint | None = None


@dataclass(frozen=True)
class Frame:
    name: str
    link: int
    R: np.ndarray
    p: np.ndarray


@dataclass
class KinematicTree:
    """Packed arrays consumed by the dynamics kernels."""

    nb: int
    base_dim: int
    parent: np.ndarray
    jtype: np.ndarray
    axis: np.ndarray
    R_tree: np.ndarray
    p_tree: np.ndarray
    inertia: np.ndarray
    S_base: np.ndarray


def spatial_inertia(mass: float, com, inertia_com) -> np.ndarray:
    c = np.asarray(com, dtype=float)
    C = np.array([[0.0, -c[2], c[1]], [c[2], 0.0, -c[0]], [-c[1], c[0], 0.0]])
    I6 = np.zeros((6, 6))
    I6[:3, :3] = inertia_com + mass * C @ C.T
    I6[:3, 3:] = mass * C
    I6[3:, :3] = mass * C.T
    I6[3:, 3:] = mass * np.eye(3)
    return I6


def base_selection(base_dim: int) -> np.ndarray:
    """Map base velocity coordinates (linear-first) to an angular-first twist."""
    if base_dim == 6:
        S = np.zeros((6, 6))
        S[3:, :3] = np.eye(3)
        S[:3, 3:] = np.eye(3)
        return S
    S = np.zeros((6, 3))
    S[3, 0] = S[4, 1] = S[2, 2] = 1.0
    return S


class RobotModel:
    """Floating-base tree model.

    Parameters
    ----------
    links : list of Link
        Exactly one link has no parent: the floating base.
    frames : list of (name, link_name, R, p), optional
        Extra named frames; every link is also a frame at its origin.
    base_dim : {3, 6}
    gravity : array_like, optional
        Defaults to ``-9.81`` along -y (planar) or -z (spatial).
    """

    def __init__(self, links, frames=(), base_dim=6, gravity=None, name="robot", source_hash=None):
        if base_dim not in (3, 6):
            raise ModelFormatError(f"base_dim must be 3 or 6, got {base_dim}")
        self.name = name
        self.base_dim = base_dim
        self.source_hash = source_hash
        if gravity is None:
            gravity = (0.0, -9.81, 0.0) if base_dim == 3 else (0.0, 0.0, -9.81)
        self.gravity = np.asarray(gravity, dtype=float)
        self.links = _topological_order(list(links))
        self.link_index = {lk.name: i for i, lk in enumerate(self.links)}
        self._validate_links()
        self.frames: dict[str, Frame] = {}
        for i, lk in enumerate(self.links):
            self.frames[lk.name] = Frame(lk.name, i, np.eye(3), np.zeros(3))
        for fname, lname, R, p in frames:
            if lname not in self.link_index:
                raise ModelFormatError(f"frame {fname!r} attached to unknown link {lname!r}")
            if fname in self.frames:
                raise ModelFormatError(f"duplicate frame name {fname!r}")
            self.frames[fname] = Frame(fname, self.link_index[lname], np.asarray(R, float), np.asarray(p, float))
        self.tree = self._pack()
        nb = len(self.links)
        self.support = np.zeros((nb, nb), dtype=bool)
        for i in range(nb):
            j = i
            while j >= 0:
                self.support[i, j] = True
                j = self.tree.parent[j]
        self.joint_names = [lk.joint.name for lk in self.links[1:]]
        self.total_mass = float(sum(lk.mass for lk in self.links))

    # sizes -----------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.links) - 1

    @property
    def nv(self) -> int:
        return self.n + self.base_dim

    @property
    def nq_base(self) -> int:
        return 3 if self.base_dim == 3 else 7

    @property
    def nq(self) -> int:
        return self.n + self.nq_base

    def frame(self, name: str) -> Frame:
        try:
            return self.frames[name]
        except KeyError:
            raise UnknownFrame(name) from None

    def joint_index(self, name: str) -> int:
        """Generalized-velocity index of a joint."""
        try:
            return self.base_dim + self.joint_names.index(name)
        except ValueError:
            raise UnknownFrame(name) from None

    # configuration helpers -------------------------------------------------
    def neutral_configuration(self) -> np.ndarray:
        q = np.zeros(self.nq)
        if self.base_dim == 6:
            q[3] = 1.0
        return q

    def base_pose(self, q):
        q = np.asarray(q, dtype=float)
        if self.base_dim == 3:
            return rot_z(q[2]), np.array([q[0], q[1], 0.0])
        quat = q[3:7]
        return quat_to_matrix(quat / np.linalg.norm(quat)), q[:3].copy()

    def joint_positions(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float)[self.nq_base:]

    def integrate(self, q, v, dt: float = 1.0) -> np.ndarray:
        """Advance configuration `q` by velocity `v` held for `dt`."""
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        if q.shape != (self.nq,) or v.shape != (self.nv,):
            raise DimensionError(f"expected q[{self.nq}], v[{self.nv}], got {q.shape}, {v.shape}")
        out = q.copy()
        out[self.nq_base:] += dt * v[self.base_dim:]
        R, _ = self.base_pose(q)
        if self.base_dim == 3:
            out[:2] += dt * (R[:2, :2] @ v[:2])
            out[2] += dt * v[2]
        else:
            out[:3] += dt * (R @ v[:3])
            quat = quat_multiply(q[3:7], quat_exp(dt * v[3:6]))
            out[3:7] = quat / np.linalg.norm(quat)
        return out

    # construction ----------------------------------------------------------
    def _validate_links(self):
        bases = [lk for lk in self.links if lk.parent is None]
        if len(bases) != 1:
            raise ModelFormatError(f"expected exactly one base link, found {len(bases)}")
        seen = set()
        for lk in self.links:
            if lk.name in seen:
                raise ModelFormatError(f"duplicate link name {lk.name!r}")
            seen.add(lk.name)
            if not lk.mass > 0:
                raise ModelFormatError(f"link {lk.name!r}: mass must be positive")
            I = np.asarray(lk.inertia, dtype=float)
            if I.shape != (3, 3) or not np.allclose(I, I.T, atol=1e-12):
                raise ModelFormatError(f"link {lk.name!r}: inertia must be a symmetric 3x3 matrix")
            if np.linalg.eigvalsh(I).min() <= 0:
                raise ModelFormatError(f"link {lk.name!r}: inertia is not positive-definite")
            if lk.parent is not None and lk.joint is None:
                raise ModelFormatError(f"link {lk.name!r} has a parent but no joint")
            if lk.joint is not None:
                if lk.joint.type not in JOINT_TYPES:
                    raise ModelFormatError(f"joint {lk.joint.name!r}: unknown type {lk.joint.type!r}")
                if self.base_dim == 3:
                    self._check_planar_joint(lk.joint)

    @staticmethod
    def _check_planar_joint(j: Joint):
        R, p, a = j.origin_R, j.origin_p, j.axis
        in_plane = np.allclose(R[2], [0, 0, 1]) and abs(p[2]) < 1e-12
        if j.type == "revolute":
            ok = in_plane and np.allclose(np.abs(a), [0, 0, 1])
        else:
            ok = in_plane and abs(a[2]) < 1e-12
        if not ok:
            raise ModelFormatError(f"joint {j.name!r} leaves the x-y plane of a planar model")

    def _pack(self) -> KinematicTree:
        nb = len(self.links)
        parent = np.full(nb, -1, dtype=np.int_)
        jtype = np.full(nb, -1, dtype=np.int_)
        axis = np.zeros((nb, 3))
        R_tree = np.tile(np.eye(3), (nb, 1, 1))
        p_tree = np.zeros((nb, 3))
        inertia = np.zeros((nb, 6, 6))
        for i, lk in enumerate(self.links):
            inertia[i] = spatial_inertia(lk.mass, lk.com, np.asarray(lk.inertia, float))
            if i == 0:
                continue
            parent[i] = self.link_index[lk.parent]
            jtype[i] = JOINT_TYPES[lk.joint.type]
            a = np.asarray(lk.joint.axis, dtype=float)
            axis[i] = a / np.linalg.norm(a)
            R_tree[i] = lk.joint.origin_R
            p_tree[i] = lk.joint.origin_p
        return KinematicTree(
            nb=nb,
            base_dim=self.base_dim,
            parent=parent,
            jtype=jtype,
            axis=np.ascontiguousarray(axis),
            R_tree=np.ascontiguousarray(R_tree),
            p_tree=np.ascontiguousarray(p_tree),
            inertia=np.ascontiguousarray(inertia),
            S_base=np.ascontiguousarray(base_selection(self.base_dim)),
        )

    def __repr__(self):
        kind = "planar" if self.base_dim == 3 else "spatial"
        return f"RobotModel({self.name!r}, {kind}, n={self.n}, frames={len(self.frames)})"


def _topological_order(links):
    by_name = {lk.name: lk for lk in links}
    if len(by_name) != len(links):
        dup = next(lk.name for lk in links if sum(o.name == lk.name for o in links) > 1)
        raise ModelFormatError(f"duplicate link name {dup!r}")
    for lk in links:
        if lk.parent is not None and lk.parent not in by_name:
            raise ModelFormatError(f"link {lk.name!r}: unknown parent {lk.parent!r}")
    roots = [lk for lk in links if lk.parent is None]
    if len(roots) != 1:
        raise ModelFormatError(f"expected exactly one base link, found {len(roots)}")
    # depth-first, children in declaration order
    children: dict[str, list] = {}
    for lk in links:
        if lk.parent is not None:
            children.setdefault(lk.parent, []).append(lk)
    ordered, stack = [], [roots[0]]
    while stack:
        lk = stack.pop()
        ordered.append(lk)
        stack.extend(reversed(children.get(lk.name, [])))
    if len(ordered) != len(links):
        raise ModelFormatError("link graph is not a tree (cycle or disconnected links)")
    return ordered


@dataclass
class RobotState:
    """Configuration and generalized velocity."""

    q: np.ndarray
    qd: np.ndarray = field(default=None)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.zeros(0) if self.qd is None else np.asarray(self.qd, dtype=float)

    def copy(self) -> "RobotState":
        return RobotState(self.q.copy(), self.qd.copy())

    def validate(self, model: RobotModel) -> "RobotState":
        if self.qd.size == 0:
            self.qd = np.zeros(model.nv)
        if self.q.shape != (model.nq,) or self.qd.shape != (model.nv,):
            raise DimensionError(
                f"state sizes q{self.q.shape}, qd{self.qd.shape} do not match model nq={model.nq}, nv={model.nv}"
            )
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise DimensionError("state has non-finite entries")
        if model.base_dim == 6:
            norm = np.linalg.norm(self.q[3:7])
            if abs(norm - 1.0) > 1e-6:
                raise DimensionError(f"base quaternion not normalized (|q|={norm})")
        return self
