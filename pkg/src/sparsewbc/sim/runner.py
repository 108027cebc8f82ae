"""Closed-loop scenario runs, logs and metrics.

CSV columns (one row per control tick, values formatted ``%.9g``):

``t``, ``phase``
    Time (s) and phase name.
``q_<coord>``, ``qd_<coord>``
    Configuration and generalized velocity; planar base coordinates are
    ``base_x``, ``base_y``, ``base_theta``.
``tau_<joint>``
    Commanded joint torques (held for one control period).
``cmd_<constraint>_<axis>``
    Commanded controlled forces ``f_f`` or recovered supporting forces
    ``f_s`` (NaN while the constraint is inactive).
``meas_<constraint>_<axis>``
    Simulated contact force in the constraint's rows.
``com_x``, ``com_y``, ``com_ref``
    Center of mass and the x reference of the first COM task.
``ref_<task>_<i>``, ``err_<task>``
    Task reference and error norm (NaN while inactive).
``cop_<constraint>``
    Center of pressure along the foot (flat constraints; NaN below 1 N).
"""
from __future__ import annotations

import csv
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..options import SolverOptions
from ..rbd import dynamics
from ..rbd.model import RobotState
from .contact import ContactModel, Surface
from .controller import MIN_NORMAL_FORCE, ScenarioController, measured_constraint_force
from .integrator import Integrator
from .scenario import Scenario, load_scenario


@dataclass
class SimulationLog:
    """Column-oriented record of a run."""

    columns: list
    data: dict
    meta: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def __getitem__(self, name) -> np.ndarray:
        return self.data[name]

    @property
    def t(self) -> np.ndarray:
        return self.data["t"]

    def index_at(self, t: float) -> int:
        """First tick at or after `t`."""
        return int(np.searchsorted(self.t, t - 1e-9))

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            cols = [self.data[c] for c in self.columns]
            for i in range(len(self.t)):
                w.writerow([c[i] if isinstance(c[i], str) else f"{c[i]:.9g}" for c in cols])
        return path

    @classmethod
    def read_csv(cls, path, json_path=None) -> "SimulationLog":
        """Load a log written by :meth:`write` (sidecar optional)."""
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["t", "phase"]:
            raise ValueError(f"{path}: not a simulation log (expected 't,phase,...' header)")
        columns = rows[0]
        body = rows[1:]
        data = {}
        for j, c in enumerate(columns):
            col = [r[j] for r in body]
            data[c] = col if c == "phase" else np.array(col, dtype=float)
        json_path = Path(json_path) if json_path else path.with_suffix(".json")
        meta, metrics = {}, {}
        if json_path.is_file():
            side = json.loads(json_path.read_text())
            meta, metrics = side.get("meta", {}), side.get("metrics", {})
        return cls(columns, data, meta, metrics)

    def write(self, csv_path, json_path=None):
        """CSV plus a JSON sidecar holding metadata, timings and metrics."""
        csv_path = self.to_csv(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        json_path.write_text(json.dumps({"meta": self.meta, "metrics": self.metrics}, indent=2, sort_keys=True, default=_jsonable))
        return csv_path, json_path


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return str(x)


def git_revision() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5, cwd=Path(__file__).parent
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None


# --------------------------------------------------------------------------- setup


def initial_state(model, scenario: Scenario) -> RobotState:
    """Initial configuration from the scenario's ``initial`` block."""
    init = scenario.initial
    q = model.neutral_configuration()
    for name, val in (init.get("joints") or {}).items():
        q[model.nq_base + model.joint_names.index(name)] = float(val)
    base = init.get("base")
    if base is not None:
        for i, v in enumerate(base):
            if v is not None:
                q[i] = float(v)
    stand = init.get("stand_on")
    if stand:
        # shift the base vertically so the lowest listed frame sits at `height`
        up = 1 if model.base_dim == 3 else 2
        kin = dynamics.kinematics(model, RobotState(q))
        low = min(dynamics.frame_pose(model, RobotState(q), f, kin)[1][up] for f in stand["frames"])
        q[up] += float(stand.get("height", 0.0)) - low
    qd = np.zeros(model.nv)
    return RobotState(q, qd).validate(model)


def build_contact(model, scenario: Scenario, state) -> ContactModel:
    spec = dict(scenario.contact)
    surfaces = []
    kin = dynamics.kinematics(model, state)
    for s in spec.pop("surfaces", []):
        s = dict(s)
        through = s.pop("through", None)
        offset = float(s.pop("offset", 0.0))
        if through is not None:
            _, p = dynamics.frame_pose(model, state, through, kin)
            s["point"] = p
        if "point" in s:
            n = np.asarray(s.get("normal", [0, 1, 0]), float)
            s["point"] = np.asarray(s["point"], float) + offset * n / np.linalg.norm(n)
        if "preload" in s and s["preload"] is not None:
            s["preload"] = np.asarray(s["preload"], float)
        surfaces.append(Surface(**s))
    contact = ContactModel(surfaces=surfaces, **spec)
    contact.reset(model, state)
    return contact


# --------------------------------------------------------------------------- run


def _coord_names(model):
    base = ["base_x", "base_y", "base_theta"] if model.base_dim == 3 else ["base_x", "base_y", "base_z", "base_qw", "base_qx", "base_qy", "base_qz"]
    vbase = ["base_x", "base_y", "base_theta"] if model.base_dim == 3 else ["base_vx", "base_vy", "base_vz", "base_wx", "base_wy", "base_wz"]
    return base + model.joint_names, vbase + model.joint_names


def run_scenario(scenario, model=None, options: SolverOptions | None = None, *, control_dt=None, substeps=None,
                 optimize_forces: bool = True, progress=None) -> SimulationLog:
    """Simulate a scenario in closed loop.

    Parameters
    ----------
    scenario : Scenario or path
    model : RobotModel, optional
        Defaults to the scenario's ``model`` entry.
    control_dt, substeps : optional
        Overrides of the control period and simulator steps per period.
    progress : callable, optional
        Called as ``progress(t)`` once per simulated second.

    Returns
    -------
    SimulationLog
        With ``metrics`` filled from the scenario's ``metrics`` block.
    """
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    model = model or scenario.load_model()
    opts = options or SolverOptions(parallel=False)
    dt = float(control_dt or scenario.control_dt)
    sub = int(substeps or scenario.substeps)
    if not dt > 0 or sub < 1:
        raise ValueError("control_dt must be positive and substeps at least 1")
    state = initial_state(model, scenario)
    contact = build_contact(model, scenario, state)
    integ = Integrator(model, contact)
    ctrl = ScenarioController(model, scenario, opts, optimize_forces=optimize_forces)
    cons = scenario.constraints
    task_names = list(scenario.tasks)
    com_task = next((n for n, s in scenario.tasks.items() if s.type == "com"), None)

    qn, vn = _coord_names(model)
    columns = ["t", "phase"] + [f"q_{c}" for c in qn] + [f"qd_{c}" for c in vn] + [f"tau_{j}" for j in model.joint_names]
    axis_cols = {}
    for name in cons:
        axes = [lab.split(":")[1] for lab in ctrl.labels[name]]
        axis_cols[name] = axes
        columns += [f"cmd_{name}_{a}" for a in axes] + [f"meas_{name}_{a}" for a in axes]
    columns += ["com_x", "com_y", "com_ref"]
    ref_cols = {}
    for tn in task_names:
        spec = scenario.tasks[tn]
        if spec.type == "force":
            width = len(ctrl._force_rows(spec))
        else:
            width = ctrl.refs[tn].hold.size if tn in ctrl.refs else None
            if width is None:
                x, _ = ctrl._motion_state(spec, state, dynamics.kinematics(model, state, velocity=True))
                width = x.size
        ref_cols[tn] = [f"ref_{tn}_{i}" for i in range(width)]
        columns += ref_cols[tn] + [f"err_{tn}"]
    flat = [n for n, c in cons.items() if c.kind == "flat"]
    columns += [f"cop_{n}" for n in flat]

    n_ticks = int(round((scenario.end_time - scenario.start_time) / dt))
    rows = {c: np.full(n_ticks, np.nan) for c in columns if c != "phase"}
    rows["phase"] = [""] * n_ticks
    timings = {"control": 0.0, "simulate": 0.0}
    wall0 = time.perf_counter()
    started = False
    for k in range(n_ticks):
        t = scenario.start_time + k * dt
        kin = dynamics.kinematics(model, state, velocity=True)
        reading = contact.forces(model, state, kin)
        measured = {n: measured_constraint_force(model, state, c, reading, kin) for n, c in cons.items()}
        if not started:
            ctrl.start(t, state, measured)
            started = True
        c0 = time.perf_counter()
        tau, info = ctrl.tick(t, state, measured)
        c1 = time.perf_counter()
        sol, ph = info["solution"], info["phase"]
        rows["t"][k] = t
        rows["phase"][k] = ph.name
        for i, c in enumerate(qn):
            rows[f"q_{c}"][k] = state.q[i]
        for i, c in enumerate(vn):
            rows[f"qd_{c}"][k] = state.qd[i]
        for i, j in enumerate(model.joint_names):
            rows[f"tau_{j}"][k] = tau[i]
        off_s = off_f = 0
        for name in ph.supporting:
            m = len(axis_cols[name])
            if sol.f_s is not None:
                for i, a in enumerate(axis_cols[name]):
                    rows[f"cmd_{name}_{a}"][k] = sol.f_s[off_s + i]
            off_s += m
        for name in ph.controlled:
            for i, a in enumerate(axis_cols[name]):
                rows[f"cmd_{name}_{a}"][k] = sol.f_f[off_f + i]
            off_f += len(axis_cols[name])
        for name in cons:
            for i, a in enumerate(axis_cols[name]):
                rows[f"meas_{name}_{a}"][k] = measured[name][i]
        c = dynamics.com(model, state, kin)
        rows["com_x"][k], rows["com_y"][k] = c[0], c[1]
        if com_task in info["targets"]:
            rows["com_ref"][k] = info["targets"][com_task][0]
        for tn, val in info["targets"].items():
            for i, col in enumerate(ref_cols[tn]):
                rows[col][k] = val[i]
            rows[f"err_{tn}"][k] = info["errors"][tn]
        for name in flat:
            w = measured[name]
            if w[cons[name].normal_row] > MIN_NORMAL_FORCE:
                _, p = dynamics.frame_pose(model, state, cons[name].frame, kin)
                rows[f"cop_{name}"][k] = p[0] + w[-1] / w[cons[name].normal_row]
        h = dt / sub
        try:
            for _ in range(sub):
                state = integ.step(state, tau, h)
        except Exception as exc:
            if exc.args and isinstance(exc.args[0], str):
                exc.args = (f"[phase {ph.name!r}, t={t:.4f}] {exc.args[0]}",) + exc.args[1:]
            raise
        timings["control"] += c1 - c0
        timings["simulate"] += time.perf_counter() - c1
        if progress is not None and abs((t + dt) - round(t + dt)) < dt / 2:
            progress(t + dt)
    timings["wall"] = time.perf_counter() - wall0
    timings["control_per_tick_ms"] = 1e3 * timings["control"] / max(n_ticks, 1)
    meta = {
        "scenario": scenario.name,
        "scenario_source": scenario.source,
        "scenario_hash": scenario.source_hash,
        "model": model.name,
        "model_hash": model.source_hash,
        "control_dt": dt,
        "substeps": sub,
        "sim_dt": dt / sub,
        "contact": {"stiffness": contact.stiffness, "damping": contact.damping,
                    "tangential_stiffness": contact.tangential_stiffness,
                    "tangential_damping": contact.tangential_damping},
        "options": {k: getattr(opts, k) for k in ("rank_tol", "residual_tol", "damping", "parallel", "torque_path")},
        "optimize_forces": optimize_forces,
        "git_revision": git_revision(),
        "timings": timings,
        "switch_times": scenario.switch_times(),
        "force_rows": {tn: ctrl._force_rows(s) for tn, s in scenario.tasks.items() if s.type == "force"},
    }
    log = SimulationLog(columns, rows, meta)
    log.metrics = compute_metrics(log, scenario, model)
    return log


# --------------------------------------------------------------------------- metrics


def _window(log, t0, t1):
    t = log.t
    return (t >= t0 - 1e-9) & (t <= t1 + 1e-9)


def _error_stats(e):
    if e.size == 0:
        return {"rms_error": float("nan"), "max_abs_error": float("nan")}
    return {"rms_error": float(np.sqrt(np.mean(e**2))), "max_abs_error": float(np.max(np.abs(e)))}


def torque_jump(log, t_switch: float, joints) -> float:
    """``max |tau(t_s) - tau(t_s - dt)|`` over joints at a switch instant."""
    k = log.index_at(t_switch)
    if k <= 0 or k >= len(log.t):
        return float("nan")
    return float(max(abs(log[f"tau_{j}"][k] - log[f"tau_{j}"][k - 1]) for j in joints))


def compute_metrics(log: SimulationLog, scenario: Scenario, model) -> dict:
    """Evaluate the scenario's ``metrics`` block on a log.

    Supported entries::

        force_tracking: {task: name, window: [t0, t1], component: 0}
        com_tracking:   {window: [t0, t1]}
        torque_jumps:   {times: [...]}         # default: switch instants
        force_step:     {constraint: name, axis: y, time: t, window: w}
    """
    out = {}
    m = scenario.metrics
    joints = model.joint_names
    if "force_tracking" in m:
        spec = m["force_tracking"]
        tn = spec["task"]
        comp = int(spec.get("component", 0))
        t0, t1 = spec.get("window", [scenario.start_time, scenario.end_time])
        sel = _window(log, t0, t1)
        task = scenario.tasks[tn]
        ref = log[f"ref_{tn}_{comp}"][sel]
        row = log.meta["force_rows"][tn][comp]
        meas_cols = [c for c in log.columns if c.startswith(f"meas_{task.constraint}_")]
        meas = log[meas_cols[row]][sel]
        err = meas - ref
        out["force_tracking"] = {
            "task": tn,
            "window": [t0, t1],
            "target_mean": float(np.mean(ref)) if ref.size else float("nan"),
            **_error_stats(err),
            "mean_error": float(np.mean(err)) if err.size else float("nan"),
        }
    if "com_tracking" in m:
        t0, t1 = m["com_tracking"].get("window", [scenario.start_time, scenario.end_time])
        sel = _window(log, t0, t1) & np.isfinite(log["com_ref"])
        e = log["com_x"][sel] - log["com_ref"][sel]
        stats = _error_stats(e)
        out["com_tracking"] = {"window": [t0, t1], "rmse": stats["rms_error"], "max_abs_error": stats["max_abs_error"]}
    if "torque_jumps" in m:
        times = (m["torque_jumps"] or {}).get("times") or scenario.switch_times()
        jumps = {f"{ts:g}": torque_jump(log, ts, joints) for ts in times}
        out["torque_jumps"] = {"jumps": jumps, "max": float(np.nanmax(list(jumps.values()))) if jumps else float("nan")}
    if "force_step" in m:
        spec = m["force_step"]
        col = f"meas_{spec['constraint']}_{spec.get('axis', 'y')}"
        ts, w = float(spec["time"]), float(spec.get("window", 0.05))
        sel = _window(log, ts - w, ts + w)
        f = log[col][sel]
        step = float(np.max(np.abs(np.diff(f)))) if f.size > 1 else 0.0
        weight = model.total_mass * float(np.linalg.norm(model.gravity))
        out["force_step"] = {
            "constraint": spec["constraint"],
            "time": ts,
            "max_step": step,
            "weight": weight,
            "relative_to_weight": step / weight,
        }
    return out


def export_series(log: SimulationLog, path, series=None):
    """Tidy ``t,series,value`` CSV for plotting.

    By default: every measured normal force, COM error and joint torque.
    """
    if series is None:
        series = [c for c in log.columns if c.startswith("meas_") and c.endswith(("_y", "_n"))]
        series += [c for c in log.columns if c.startswith("tau_")]
    rows = [(f"{t:.9g}", s, f"{log[s][i]:.9g}") for s in series for i, t in enumerate(log.t)]
    com_err = log["com_x"] - log["com_ref"]
    rows += [(f"{t:.9g}", "com_error", f"{com_err[i]:.9g}") for i, t in enumerate(log.t)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "series", "value"])
        w.writerows(rows)
    return Path(path)


def compare_torque_jumps(logs: dict) -> dict:
    """Ratio of the largest switch-instant torque jumps of two runs.

    `logs` maps a run name to a :class:`SimulationLog` whose metrics hold
    ``torque_jumps``.  The run with the smaller jump is reported as
    ``smoother``; ``ratio`` is larger over smaller.
    """
    jumps = {name: log.metrics["torque_jumps"]["max"] for name, log in logs.items() if "torque_jumps" in log.metrics}
    if len(jumps) != 2:
        raise ValueError("torque-jump comparison needs exactly two runs with a torque_jumps metric")
    (a, ja), (b, jb) = sorted(jumps.items(), key=lambda kv: kv[1])
    return {"jumps": jumps, "smoother": a, "ratio": jb / ja if ja > 0 else float("inf")}
