"""Penalty contact: spring-damper reactions to penetration.

A contact point is a model frame paired with a surface.  Plane surfaces
push along their normal with ``max(0, k pen + d pen_rate)`` while the point
penetrates.  Tangential reactions are

* ``"viscous"``: ``-d_t v_t`` (no stiction);
* ``"anchored"``: ``-k_t (x_t - anchor) - d_t v_t``, where the anchor is the
  touchdown location (a stiff stand-in for static friction);
* ``"none"``: frictionless.

Weld surfaces hold a frame at its initial pose with a stiff 3-D (planar) or
6-D (spatial) spring-damper plus an optional preload wrench.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rbd import dynamics
from ..tasks import rotation_log

TANGENTIAL_LAWS = ("viscous", "anchored", "none")


@dataclass
class Surface:
    """Plane (``point``, outward ``normal``) or weld (pose captured at reset)."""

    name: str
    kind: str = "plane"
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    tangential: str = "viscous"
    frames: tuple = ()
    preload: np.ndarray | None = None  # weld only, world wrench at the frame

    def __post_init__(self):
        if self.kind not in ("plane", "weld"):
            raise ValueError(f"surface {self.name!r}: kind must be 'plane' or 'weld'")
        if self.tangential not in TANGENTIAL_LAWS:
            raise ValueError(f"surface {self.name!r}: tangential law must be one of {TANGENTIAL_LAWS}")
        self.point = np.asarray(self.point, dtype=float)
        n = np.asarray(self.normal, dtype=float)
        self.normal = n / np.linalg.norm(n)
        self.frames = tuple(self.frames)


@dataclass
class ContactReading:
    """Contact forces at one instant.

    Attributes
    ----------
    point_forces : dict
        Frame name to world force (3 entries) applied at the frame origin.
    external_forces : dict
        Frame name to world-aligned wrench, ready for the dynamics API.
    penetration : dict
        Frame name to penetration depth (negative when separated).
    damping : dict
        Frame name to the matrix ``C`` with ``d wrench = -C d twist`` for
        the velocity-proportional part of each active contact (frame twist
        rows).  Integrators use it to treat damping implicitly.
    """

    point_forces: dict
    external_forces: dict
    penetration: dict
    damping: dict = field(default_factory=dict)  # frame -> d wrench / d twist

    def wrench_at(self, model, state, frame: str, sources, kin=None) -> np.ndarray:
        """Total wrench of the forces on `sources` about `frame`'s origin
        (world-aligned, ``(fx, fy, mz)`` planar or ``(f, m)`` spatial)."""
        kin = kin or dynamics.kinematics(model, state)
        _, o = dynamics.frame_pose(model, state, frame, kin)
        f = np.zeros(3)
        m = np.zeros(3)
        for src in sources:
            if src in self.external_forces:
                w = self.external_forces[src]
                _, p = dynamics.frame_pose(model, state, src, kin)
                if model.base_dim == 3:
                    F = np.array([w[0], w[1], 0.0])
                    M = np.array([0.0, 0.0, w[2]])
                else:
                    F, M = w[:3], w[3:]
                f += F
                m += M + np.cross(p - o, F)
        return np.array([f[0], f[1], m[2]]) if model.base_dim == 3 else np.concatenate((f, m))


@dataclass
class ContactModel:
    """Penalty contact parameters and surfaces.

    Parameters
    ----------
    stiffness, damping : float
        Normal law, N/m and N s/m.
    tangential_damping, tangential_stiffness : float
        Tangential law parameters (see module docstring).
    weld_stiffness, weld_damping : float
        Gains of weld surfaces (rotational gains use the same numbers
        in N m/rad and N m s/rad).
    """

    stiffness: float = 2e5
    damping: float = 1e3
    tangential_damping: float = 1e3
    tangential_stiffness: float = 0.0
    weld_stiffness: float = 2e5
    weld_damping: float = 1e3
    surfaces: list = field(default_factory=list)
    _anchors: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("stiffness", "damping", "tangential_damping", "tangential_stiffness", "weld_stiffness", "weld_damping"):
            setattr(self, name, float(getattr(self, name)))
        if not self.stiffness > 0:
            raise ValueError("contact stiffness must be positive")
        if self.damping < 0 or self.tangential_damping < 0 or self.tangential_stiffness < 0:
            raise ValueError("contact damping and tangential gains must be non-negative")

    def reset(self, model=None, state=None):
        """Forget touchdown anchors; capture weld poses if a state is given."""
        self._anchors.clear()
        if model is None:
            return
        kin = dynamics.kinematics(model, state)
        for s in self.surfaces:
            if s.kind == "weld":
                for fr in s.frames:
                    self._anchors[(s.name, fr)] = dynamics.frame_pose(model, state, fr, kin)

    def forces(self, model, state, kin=None) -> ContactReading:
        """Contact forces at `state` (updates touchdown anchors)."""
        kin = kin or dynamics.kinematics(model, state, velocity=True)
        point_forces, external, pen, damp = {}, {}, {}, {}
        planar = model.base_dim == 3
        rows = [0, 1] if planar else [0, 1, 2]
        for s in self.surfaces:
            for fr in s.frames:
                if s.kind == "weld":
                    external[fr] = self._weld(model, state, kin, s, fr)
                    damp[fr] = self.weld_damping * np.eye(model.base_dim)
                    continue
                _, p = dynamics.frame_pose(model, state, fr, kin)
                v = np.zeros(3)
                v[: 2 if planar else 3] = dynamics.frame_velocity(model, state, fr, kin)[: 2 if planar else 3]
                depth = float(s.normal @ (s.point - p))
                pen[fr] = depth
                key = (s.name, fr)
                if depth <= 0.0:
                    self._anchors.pop(key, None)
                    continue
                rate = -float(s.normal @ v)
                fn = max(0.0, self.stiffness * depth + self.damping * rate)
                F = fn * s.normal
                vt = v - (s.normal @ v) * s.normal
                if s.tangential == "viscous":
                    F = F - self.tangential_damping * vt
                elif s.tangential == "anchored":
                    anchor = self._anchors.setdefault(key, p.copy())
                    dt_ = (p - anchor) - ((p - anchor) @ s.normal) * s.normal
                    F = F - self.tangential_stiffness * dt_ - self.tangential_damping * vt
                if fn == 0.0:
                    F = np.zeros(3)
                else:
                    nn = np.outer(s.normal, s.normal)
                    C3 = self.damping * nn
                    if s.tangential != "none":
                        C3 = C3 + self.tangential_damping * (np.eye(3) - nn)
                    C = np.zeros((model.base_dim, model.base_dim))
                    C[np.ix_(range(len(rows)), range(len(rows)))] = C3[np.ix_(rows, rows)]
                    damp[fr] = C
                point_forces[fr] = F
                external[fr] = np.array([F[0], F[1], 0.0]) if planar else np.concatenate((F, np.zeros(3)))
        return ContactReading(point_forces, external, pen, damp)

    def _weld(self, model, state, kin, s, fr):
        R0, p0 = self._anchors[(s.name, fr)]
        R, p = dynamics.frame_pose(model, state, fr, kin)
        tw = dynamics.frame_velocity(model, state, fr, kin)
        k, d = self.weld_stiffness, self.weld_damping
        if model.base_dim == 3:
            dth = np.arctan2(R[1, 0], R[0, 0]) - np.arctan2(R0[1, 0], R0[0, 0])
            err = np.array([p[0] - p0[0], p[1] - p0[1], (dth + np.pi) % (2 * np.pi) - np.pi])
        else:
            err = np.concatenate((p - p0, rotation_log(R @ R0.T)))
        w = -k * err - d * tw
        if s.preload is not None:
            w = w + s.preload
        return w
