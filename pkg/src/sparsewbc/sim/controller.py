"""Scenario-driven whole-body controller.

At every control tick the controller assembles the active supporting and
controlled constraints, turns the active tasks into motion and force
levels, and calls :func:`sparsewbc.sparse_solver.control_tick`.
"""
from __future__ import annotations

import numpy as np

from ..constraints import AXES, CONTROLLED, SUPPORTING, assemble, contact_rows
from ..errors import ScenarioError
from ..options import SolverOptions
from ..rbd import dynamics
from ..sparse_solver import control_tick
from ..tasks import PDGains, Trajectory, force_level, min_jerk, motion_level, task_error, task_state

MIN_NORMAL_FORCE = 1.0  # N, floor on measured normal forces used as weights
WEIGHT_FILTER = 0.05  # s, low-pass time constant of those normal forces


def constraint_labels(model, spec) -> tuple:
    """Row labels produced by :func:`contact_rows` for a constraint spec."""
    names = AXES[model.base_dim]
    if spec.kind == "normal":
        return (f"{spec.frame}:n",)
    axes = names if spec.kind == "flat" else names[: 2 if model.base_dim == 3 else 3]
    return tuple(f"{spec.frame}:{a}" for a in axes)


def measured_constraint_force(model, state, spec, reading, kin=None) -> np.ndarray:
    """Contact reading expressed in the rows of a constraint spec."""
    w = reading.wrench_at(model, state, spec.frame, spec.sources, kin)
    if spec.kind == "normal":
        n = spec.normal if spec.normal is not None else np.array([0.0, 1.0, 0.0] if model.base_dim == 3 else [0.0, 0.0, 1.0])
        n = np.asarray(n, float) / np.linalg.norm(n)
        lin = w[:2] if model.base_dim == 3 else w[:3]
        return np.array([n[: lin.size] @ lin])
    if spec.kind == "point":
        return w[: 2 if model.base_dim == 3 else 3].copy()
    return w


class _MotionRef:
    """Chained minimum-jerk segments, holding the last value outside them."""

    def __init__(self, x):
        self.hold = np.atleast_1d(np.asarray(x, dtype=float)).copy()
        self.segments = []

    def __call__(self, t):
        for seg in self.segments:
            if t < seg.t0 + seg.duration:
                if t < seg.t0:
                    z = np.zeros_like(seg.x0)
                    return seg.x0.copy(), z, z
                return min_jerk(seg, t)
        x = self.segments[-1].xf if self.segments else self.hold
        z = np.zeros_like(x)
        return x.copy(), z, z.copy()

    def final(self):
        return (self.segments[-1].xf if self.segments else self.hold).copy()

    def plan(self, t, x_start, segments, delay):
        self.hold = x_start.copy()
        self.segments = []
        t0, x0 = t + delay, x_start.copy()
        for seg in segments:
            xf = x0 + seg.by if seg.by is not None else np.asarray(seg.to, float)
            if xf.shape != x0.shape:
                raise ScenarioError(f"target has {xf.size} entries, task has {x0.size}")
            self.segments.append(Trajectory(x0, xf, seg.duration, t0))
            t0, x0 = t0 + seg.duration, xf


class _ForceRef:
    """Chained linear ramps."""

    def __init__(self, f):
        self.hold = np.asarray(f, dtype=float).copy()
        self.ramps = []  # (t0, t1, f0, f1)

    def __call__(self, t):
        for t0, t1, f0, f1 in self.ramps:
            if t < t1:
                if t <= t0:
                    return f0.copy()
                return f0 + (t - t0) / (t1 - t0) * (f1 - f0)
        return (self.ramps[-1][3] if self.ramps else self.hold).copy()

    def plan(self, t, f_start, values, durations, delay):
        self.hold = f_start.copy()
        self.ramps = []
        t0, f0 = t + delay, f_start.copy()
        for v, d in zip(values, durations):
            self.ramps.append((t0, t0 + d, f0, v))
            t0, f0 = t0 + d, v


class ScenarioController:
    """Turns a :class:`Scenario` phase table into control ticks.

    Parameters
    ----------
    model : RobotModel
    scenario : Scenario
    options : SolverOptions, optional
    optimize_forces : bool
        Minimize the weighted supporting forces when torques are redundant.
    weight_filter : float
        Time constant (s) of the low-pass filter on the measured normal
        forces that scale the weights.  Unfiltered, the weights close a fast
        loop through the contact stiffness and the torques chatter.
    """

    def __init__(self, model, scenario, options: SolverOptions | None = None, optimize_forces: bool = True,
                 weight_filter: float = WEIGHT_FILTER):
        self.model = model
        self.scenario = scenario
        self.options = options or SolverOptions(parallel=False)
        self.optimize_forces = optimize_forces
        self.labels = {name: constraint_labels(model, c) for name, c in scenario.constraints.items()}
        for c in scenario.constraints.values():
            model.frame(c.frame)
            for s in c.sources:
                model.frame(s)
        for t in scenario.tasks.values():
            if t.frame:
                model.frame(t.frame)
        self.refs = {}
        self.phase = None
        self.last = None
        self.weight_filter = float(weight_filter)
        self._normal = {}
        self._t_prev = None

    # references -----------------------------------------------------------
    def _gains(self, spec):
        g = self.scenario.gains
        return PDGains(spec.kp if spec.kp is not None else g["kp"], spec.kd if spec.kd is not None else g["kd"])

    def _motion_state(self, spec, state, kin):
        target = {"com": "com", "posture": "posture"}.get(spec.type, spec.frame)
        x, xd = task_state(self.model, state, target, kin)
        if spec.axes is not None:
            x, xd = x[list(spec.axes)], xd[list(spec.axes)]
        return x, xd

    def _force_rows(self, spec):
        labels = self.labels[spec.constraint]
        if spec.components is None:
            return list(range(len(labels)))
        return [c if isinstance(c, int) else labels.index(f"{self.scenario.constraints[spec.constraint].frame}:{c}") for c in spec.components]

    def _lever(self, name, other, state, kin):
        model = self.model
        c_self = self.scenario.constraints[name]
        c_other = self.scenario.constraints[other]
        _, p_self = dynamics.frame_pose(model, state, c_self.frame, kin)
        _, p_other = dynamics.frame_pose(model, state, c_other.frame, kin)
        com_x = None
        for tn, spec in self.scenario.tasks.items():
            if spec.type == "com" and tn in self.refs:
                com_x = float(self.refs[tn].final()[0])
        if com_x is None:
            com_x = float(dynamics.com(model, state, kin)[0])
        share = (com_x - p_other[0]) / (p_self[0] - p_other[0])
        weight = model.total_mass * float(np.linalg.norm(model.gravity))
        out = np.zeros(len(self.labels[name]))
        out[c_self.normal_row] = share * weight
        return out

    def _enter_phase(self, ph, t, state, kin, measured):
        prev = self.phase
        self.phase = ph
        # motion targets first: force levers read the COM target
        for tn, tgt in sorted(ph.targets.items(), key=lambda kv: self.scenario.tasks[kv[0]].type == "force"):
            spec = self.scenario.tasks[tn]
            if spec.type != "force":
                x_now = self.refs[tn](t)[0]
                self.refs[tn].plan(t, x_now, tgt.segments, tgt.delay)
                continue
            rows = self._force_rows(spec)
            was_active = prev is not None and tn in prev.tasks and tn in self.refs
            use_meas = tgt.source == "measured" or (tgt.source == "auto" and not was_active)
            if use_meas:
                f0 = measured[spec.constraint][rows]
            else:
                f0 = self.refs[tn](t)
            values, x0 = [], f0
            for seg in tgt.segments:
                if isinstance(seg.to, dict):
                    v = self._lever(spec.constraint, seg.to["lever"], state, kin)[rows]
                elif seg.to is not None:
                    v = np.asarray(seg.to, float)
                else:
                    v = x0 + seg.by
                if v.shape != f0.shape:
                    raise ScenarioError(f"force target for {tn!r} has {v.size} entries, expected {f0.size}")
                values.append(v)
                x0 = v
            ref = self.refs.setdefault(tn, _ForceRef(f0))
            ref.plan(t, f0, values, [s.duration for s in tgt.segments], tgt.delay)
        # force tasks activated without a target hold the measured force
        for tn in ph.tasks:
            spec = self.scenario.tasks[tn]
            if spec.type == "force" and tn not in ph.targets:
                was_active = prev is not None and tn in prev.tasks
                if not was_active or tn not in self.refs:
                    self.refs[tn] = _ForceRef(measured[spec.constraint][self._force_rows(spec)])

    def start(self, t, state, measured):
        """Initialize every motion reference at the current task state."""
        kin = dynamics.kinematics(self.model, state, velocity=True)
        self.refs = {}
        for tn, spec in self.scenario.tasks.items():
            if spec.type != "force":
                self.refs[tn] = _MotionRef(self._motion_state(spec, state, kin)[0])
        self.phase = None
        self._normal = {}
        self._t_prev = None

    def _filter_normals(self, t, measured):
        dt = 0.0 if self._t_prev is None else t - self._t_prev
        self._t_prev = t
        a = 1.0 if self.weight_filter <= 0 else dt / (self.weight_filter + dt)
        for name, c in self.scenario.constraints.items():
            fn = abs(float(measured[name][c.normal_row]))
            prev = self._normal.get(name)
            self._normal[name] = fn if prev is None else prev + a * (fn - prev)

    # tick -----------------------------------------------------------------
    def constraint_set(self, state, ph, kin):
        rows = []
        for role, names in ((SUPPORTING, ph.supporting), (CONTROLLED, ph.controlled)):
            for name in names:
                c = self.scenario.constraints[name]
                rows.append(contact_rows(self.model, state, c.frame, role, c.kind, normal=c.normal, kin=kin))
        return assemble(rows, self.model.nv)

    def weights(self, ph, measured=None):
        """``W_f^{-1}``: per-row weights divided by the (filtered) normal force."""
        diag = []
        for name in ph.supporting:
            c = self.scenario.constraints[name]
            m = len(self.labels[name])
            w = c.weights if c.weights is not None and c.weights.size == m else np.ones(m)
            fn = self._normal[name] if measured is None else abs(float(measured[name][c.normal_row]))
            fn = max(fn, MIN_NORMAL_FORCE)
            diag.append(w / fn)
        return np.diag(np.concatenate(diag)) if diag else None

    def tick(self, t, state, measured):
        """Torques for the current state.

        Parameters
        ----------
        measured : dict
            Constraint name to measured force in that constraint's rows.

        Returns
        -------
        tau : ndarray
        info : dict
            ``solution`` (ControlSolution), ``phase``, ``cs``, ``targets``
            (task name to reference value) and ``errors`` (task name to error
            norm).
        """
        ph = self.scenario.phase_at(t)
        model = self.model
        self._filter_normals(t, measured)
        kin = dynamics.kinematics(model, state, drift=True)
        if ph is not self.phase:
            self._enter_phase(ph, t, state, kin, measured)
        cs = self.constraint_set(state, ph, kin)
        levels, targets, errors = [], {}, {}
        for tn in ph.tasks:
            spec = self.scenario.tasks[tn]
            if spec.type == "force":
                f_des = self.refs[tn](t)
                rows = self._force_rows(spec)
                labels = [self.labels[spec.constraint][r] for r in rows]
                levels.append(force_level(cs, labels, f_des, spec.priority, tn))
                targets[tn] = f_des
                errors[tn] = float(np.linalg.norm(f_des - measured[spec.constraint][rows]))
                continue
            x_r, xd_r, xdd_r = self.refs[tn](t)
            x, xd = self._motion_state(spec, state, kin)
            if spec.type == "frame" and spec.axes is None:
                e = task_error(model, x_r, x)
            else:
                e = x_r - x
            g = self._gains(spec)
            xdd = xdd_r + g.Kd * (xd_r - xd) + g.Kp * e
            target = {"com": "com", "posture": "posture"}.get(spec.type, spec.frame)
            levels.append(motion_level(model, state, target, xdd, spec.priority, spec.axes, kin, tn))
            targets[tn] = x_r
            errors[tn] = float(np.linalg.norm(e))
        f_hat = np.concatenate([measured[n] for n in ph.controlled]) if ph.controlled else None
        W = self.weights(ph) if self.optimize_forces else None
        try:
            sol = control_tick(model, state, cs, levels, f_hat, self.options, W_f_inv=W)
        except Exception as exc:  # add phase context, keep the type
            if exc.args and isinstance(exc.args[0], str):
                exc.args = (f"[phase {ph.name!r}, t={t:.4f}] {exc.args[0]}",) + exc.args[1:]
            raise
        self.last = sol
        return sol.tau, {"solution": sol, "phase": ph, "cs": cs, "targets": targets, "errors": errors}
