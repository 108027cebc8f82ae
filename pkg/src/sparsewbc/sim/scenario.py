"""Scenario scripts: declarative phase tables for simulated runs.

A scenario is a YAML mapping with format tag ``sparsewbc-scenario/1``::

    format: sparsewbc-scenario/1
    name: test1_planar
    model: planar_biped            # model name or path to a model file
    start_time: -1.0               # the first phase starts here
    control_dt: 0.001              # control period (zero-order hold on tau)
    substeps: 5                    # simulator steps per control period
    initial:
      joints: {l_hip: -0.3, ...}
      base: [0.0, null, 0.0]       # null entries are solved by `stand_on`
      stand_on: {frames: [l_heel, l_toe], height: 0.0}
    contact:                       # ContactModel fields plus surfaces
      stiffness: 2.0e5
      surfaces:
        - {name: floor, point: [0, 0, 0], normal: [0, 1, 0], frames: [...]}
        - {name: wall, through: r_hand, normal: [-1, 0, 0], frames: [r_hand]}
    constraints:                   # named rigid-contact constraints
      l_foot: {frame: l_sole, kind: flat, sources: [l_heel, l_toe]}
    force_weights: [10, 0.1, 1000] # per-row weights divided by the normal force
    gains: {kp: 10, kd: 5}
    tasks:
      com: {type: com, priority: 2}
      hand_force: {type: force, constraint: hand, priority: 1}
    phases:
      - name: push
        duration: 1.0
        supporting: [l_foot, r_foot]
        controlled: [hand]
        tasks: [hand_force, com, posture]
        targets:
          hand_force: {to: [20.0]}
          com: {by: [0.05], duration: 3.0, delay: 1.0}

Motion targets are minimum-jerk segments starting from the current
reference; ``path`` chains several segments.  Force targets are linear
ramps over the segment, starting from the previous force target or, when
the force task was inactive, from the measured force.  A force ``to`` may be
``{lever: other_constraint}``: the share of body weight the constraint
carries, by the lever rule, once the COM reaches its target for the phase.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..errors import ModelFormatError, ScenarioError
from ..rbd.modelfile import load_model

FORMAT = "sparsewbc-scenario/1"
DATA_DIR = Path(__file__).resolve().parent.parent / "data"
MODEL_DIR_ENV = "SPARSEWBC_MODEL_DIR"
TASK_TYPES = ("com", "frame", "posture", "force")
CONSTRAINT_KINDS = ("flat", "point", "normal")


def model_dirs() -> list:
    """Directories searched for model names: ``$SPARSEWBC_MODEL_DIR`` first."""
    dirs = []
    env = os.environ.get(MODEL_DIR_ENV)
    if env:
        dirs.extend(Path(p) for p in env.split(os.pathsep) if p)
    dirs.append(DATA_DIR / "models")
    return dirs


def resolve_model(ref, base_dir=None):
    """Load a model from a path or a bare name found in :func:`model_dirs`."""
    ref = str(ref)
    candidates = [Path(ref)]
    if base_dir is not None:
        candidates.append(Path(base_dir) / ref)
    for d in model_dirs():
        candidates += [d / ref, d / f"{ref}.yaml"]
    for c in candidates:
        if c.is_file():
            return load_model(c)
    raise ModelFormatError(f"model {ref!r} not found (searched {[str(c) for c in candidates]})")


def shipped_scenarios() -> dict:
    """Name to path of the scenarios bundled with the package."""
    return {p.stem: p for p in sorted((DATA_DIR / "scenarios").glob("*.yaml"))}


@dataclass
class TaskSpec:
    name: str
    type: str
    priority: int
    frame: str | None = None
    axes: tuple | None = None
    constraint: str | None = None
    components: tuple | None = None
    kp: float | None = None
    kd: float | None = None


@dataclass
class ConstraintSpec:
    name: str
    frame: str
    kind: str = "flat"
    normal: np.ndarray | None = None
    sources: tuple = ()
    weights: np.ndarray | None = None
    normal_row: int | None = None


@dataclass
class Segment:
    duration: float
    to: object = None  # array, or {"lever": name} for forces
    by: np.ndarray | None = None


@dataclass
class Target:
    segments: list
    delay: float = 0.0
    source: str = "auto"  # force ramps: "auto", "measured" or "target"


@dataclass
class Phase:
    name: str
    duration: float
    supporting: tuple
    controlled: tuple
    tasks: tuple
    targets: dict
    start: float = 0.0

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class Scenario:
    name: str
    model_ref: str
    phases: list
    tasks: dict
    constraints: dict
    contact: dict
    initial: dict
    start_time: float = 0.0
    control_dt: float = 1e-3
    substeps: int = 5
    gains: dict = field(default_factory=lambda: {"kp": 10.0, "kd": 5.0})
    force_weights: np.ndarray = field(default_factory=lambda: np.array([10.0, 0.1, 1e3]))
    metrics: dict = field(default_factory=dict)
    source: str | None = None
    source_hash: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def end_time(self) -> float:
        return self.phases[-1].end

    def phase_at(self, t: float) -> Phase:
        for ph in self.phases:
            if t < ph.end - 1e-12:
                return ph
        return self.phases[-1]

    def switch_times(self) -> list:
        """Instants where the supporting or controlled set changes."""
        out = []
        for a, b in zip(self.phases, self.phases[1:]):
            if set(a.supporting) != set(b.supporting) or set(a.controlled) != set(b.controlled):
                out.append(b.start)
        return out

    def load_model(self):
        base = Path(self.source).parent if self.source else None
        return resolve_model(self.model_ref, base)


def _err(where, msg):
    return ScenarioError(f"{where}: {msg}")


def _vec(x, where, n=None):
    try:
        v = np.atleast_1d(np.asarray(x, dtype=float))
    except (TypeError, ValueError):
        raise _err(where, f"expected numbers, got {x!r}") from None
    if v.ndim != 1 or (n is not None and v.size != n) or not np.all(np.isfinite(v)):
        raise _err(where, f"expected {n or 'a list of'} finite numbers, got {x!r}")
    return v


def _positive(x, where):
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise _err(where, f"expected a number, got {x!r}") from None
    if not v > 0:
        raise _err(where, f"must be positive, got {v}")
    return v


def _segment(d, where, default_duration):
    if not isinstance(d, dict):
        raise _err(where, "segment must be a mapping")
    unknown = set(d) - {"to", "by", "duration"}
    if unknown:
        raise _err(where, f"unknown keys {sorted(unknown)}")
    if ("to" in d) == ("by" in d):
        raise _err(where, "exactly one of 'to' or 'by' is required")
    dur = _positive(d.get("duration", default_duration), f"{where}.duration")
    to = d.get("to")
    if isinstance(to, dict):
        if set(to) != {"lever"}:
            raise _err(where, f"unknown target {to!r}")
    elif to is not None:
        to = _vec(to, f"{where}.to")
    by = _vec(d["by"], f"{where}.by") if "by" in d else None
    return Segment(dur, to, by)


def _target(d, where, phase_duration):
    if not isinstance(d, dict):
        raise _err(where, "target must be a mapping")
    delay = float(d.get("delay", 0.0))
    if delay < 0:
        raise _err(where, "delay must be non-negative")
    source = d.get("from", "auto")
    if source not in ("auto", "measured", "target"):
        raise _err(where, f"'from' must be auto, measured or target, got {source!r}")
    if "path" in d:
        if not isinstance(d["path"], list) or not d["path"]:
            raise _err(where, "path must be a non-empty list")
        segs = [_segment(s, f"{where}.path[{i}]", phase_duration - delay) for i, s in enumerate(d["path"])]
    else:
        segs = [_segment({k: v for k, v in d.items() if k in ("to", "by", "duration")}, where, phase_duration - delay)]
    return Target(segs, delay, source)


def scenario_from_dict(data: dict, source=None) -> Scenario:
    """Validate a scenario mapping.

    Raises
    ------
    ScenarioError
        On any structural problem; the message names the offending key.
    """
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    if data.get("format") != FORMAT:
        raise ScenarioError(f"unsupported format {data.get('format')!r}, expected {FORMAT!r}")
    for key in ("name", "model", "constraints", "tasks", "phases"):
        if key not in data:
            raise ScenarioError(f"missing key {key!r}")

    constraints = {}
    fw = _vec(data.get("force_weights", [10.0, 0.1, 1e3]), "force_weights")
    for name, c in (data["constraints"] or {}).items():
        where = f"constraints.{name}"
        if not isinstance(c, dict) or "frame" not in c:
            raise _err(where, "needs a 'frame'")
        kind = c.get("kind", "flat")
        if kind not in CONSTRAINT_KINDS:
            raise _err(where, f"kind must be one of {CONSTRAINT_KINDS}")
        normal = _vec(c["normal"], f"{where}.normal", 3) if "normal" in c else None
        w = c.get("weights")
        constraints[name] = ConstraintSpec(
            name,
            str(c["frame"]),
            kind,
            normal,
            tuple(c.get("sources", [c["frame"]])),
            _vec(w, f"{where}.weights") if w is not None else (fw if kind == "flat" else None),
            c.get("normal_row", 1 if kind == "flat" else (0 if kind == "normal" else 1)),
        )

    tasks = {}
    for name, t in (data["tasks"] or {}).items():
        where = f"tasks.{name}"
        if not isinstance(t, dict) or t.get("type") not in TASK_TYPES:
            raise _err(where, f"type must be one of {TASK_TYPES}")
        if "priority" not in t:
            raise _err(where, "needs a priority")
        spec = TaskSpec(
            name,
            t["type"],
            int(t["priority"]),
            frame=t.get("frame"),
            axes=tuple(t["axes"]) if "axes" in t else None,
            constraint=t.get("constraint"),
            components=tuple(t["components"]) if "components" in t else None,
            kp=t.get("kp"),
            kd=t.get("kd"),
        )
        if spec.type == "frame" and not spec.frame:
            raise _err(where, "frame tasks need a 'frame'")
        if spec.type == "force" and spec.constraint not in constraints:
            raise _err(where, f"unknown constraint {spec.constraint!r}")
        tasks[name] = spec

    phases = []
    t = float(data.get("start_time", 0.0))
    if not isinstance(data["phases"], list) or not data["phases"]:
        raise ScenarioError("phases must be a non-empty list")
    for i, p in enumerate(data["phases"]):
        where = f"phases[{i}]"
        if not isinstance(p, dict):
            raise _err(where, "phase must be a mapping")
        name = p.get("name", f"phase{i}")
        dur = _positive(p.get("duration"), f"{where}.duration")
        sup = tuple(p.get("supporting", ()))
        ctl = tuple(p.get("controlled", ()))
        for c in sup + ctl:
            if c not in constraints:
                raise _err(where, f"unknown constraint {c!r}")
        if set(sup) & set(ctl):
            raise _err(where, f"constraints {sorted(set(sup) & set(ctl))} are both supporting and controlled")
        active = tuple(p.get("tasks", ()))
        for tn in active:
            if tn not in tasks:
                raise _err(where, f"unknown task {tn!r}")
            if tasks[tn].type == "force" and tasks[tn].constraint not in ctl:
                raise _err(where, f"force task {tn!r} needs {tasks[tn].constraint!r} controlled")
        targets = {}
        for tn, spec in (p.get("targets") or {}).items():
            if tn not in tasks:
                raise _err(where, f"target for unknown task {tn!r}")
            targets[tn] = _target(spec, f"{where}.targets.{tn}", dur)
        phases.append(Phase(name, dur, sup, ctl, active, targets, t))
        t += dur

    dt = _positive(data.get("control_dt", 1e-3), "control_dt")
    substeps = int(data.get("substeps", 5))
    if substeps < 1:
        raise ScenarioError("substeps must be at least 1")
    gains = {"kp": 10.0, "kd": 5.0, **(data.get("gains") or {})}
    return Scenario(
        name=str(data["name"]),
        model_ref=str(data["model"]),
        phases=phases,
        tasks=tasks,
        constraints=constraints,
        contact=dict(data.get("contact") or {}),
        initial=dict(data.get("initial") or {}),
        start_time=float(data.get("start_time", 0.0)),
        control_dt=dt,
        substeps=substeps,
        gains=gains,
        force_weights=fw,
        metrics=dict(data.get("metrics") or {}),
        source=source,
        raw=data,
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file, or a shipped scenario by name."""
    p = Path(path)
    if not p.is_file():
        shipped = shipped_scenarios()
        if str(path) in shipped:
            p = shipped[str(path)]
        else:
            raise ScenarioError(f"scenario file {str(path)!r} not found")
    text = p.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{p}: invalid YAML: {exc}") from None
    sc = scenario_from_dict(data, source=str(p))
    sc.source_hash = hashlib.sha256(text.encode()).hexdigest()
    return sc
