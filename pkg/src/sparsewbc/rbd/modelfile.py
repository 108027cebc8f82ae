"""Declarative model files (YAML, format ``sparsewbc-model/1``).

Example::

    format: sparsewbc-model/1
    name: two_link
    base: planar            # or spatial
    gravity: [0, -9.81, 0]  # optional
    links:
      - name: body
        mass: 2.0
        com: [0, 0, 0]
        inertia: [0.01, 0.01, 0.02]   # diagonal, or a 3x3 list; about the COM
      - name: arm
        parent: body
        joint: {name: shoulder, type: revolute, axis: [0, 0, 1],
                xyz: [0.1, 0, 0], rpy: [0, 0, 0]}
        mass: 0.5
        com: [0.1, 0, 0]
        inertia: [0.001, 0.001, 0.001]
    frames:
      - {name: hand, link: arm, xyz: [0.2, 0, 0]}

Positions are metres, angles radians, masses kilograms.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import yaml

from ..errors import ModelFormatError
from .model import Joint, Link, RobotModel, rpy_matrix

FORMAT = "sparsewbc-model/1"


def _vec(value, n, what):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelFormatError(f"{what}: expected {n} numbers, got {value!r}") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"{what}: expected {n} finite numbers, got {value!r}")
    return arr


def _inertia(value, what):
    arr = np.asarray(value, dtype=float)
    if arr.shape == (3,):
        return np.diag(arr)
    if arr.shape == (3, 3):
        return arr
    raise ModelFormatError(f"{what}: inertia must be 3 diagonal entries or a 3x3 matrix")


def model_from_dict(data: dict, source_hash: str | None = None) -> RobotModel:
    if not isinstance(data, dict):
        raise ModelFormatError("model document must be a mapping")
    if data.get("format") != FORMAT:
        raise ModelFormatError(f"unsupported format {data.get('format')!r}, expected {FORMAT!r}")
    base = data.get("base", "spatial")
    if base not in ("planar", "spatial"):
        raise ModelFormatError(f"base must be 'planar' or 'spatial', got {base!r}")
    base_dim = 3 if base == "planar" else 6
    links = []
    for i, entry in enumerate(data.get("links") or []):
        where = f"links[{i}]"
        try:
            name = str(entry["name"])
            mass = float(entry["mass"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{where}: missing or invalid field {exc}") from None
        joint = None
        if entry.get("parent") is not None:
            j = entry.get("joint")
            if not isinstance(j, dict):
                raise ModelFormatError(f"{where}: link with a parent needs a joint mapping")
            joint = Joint(
                name=str(j.get("name", name)),
                type=str(j.get("type", "revolute")),
                axis=_vec(j.get("axis", [0, 0, 1]), 3, f"{where}.joint.axis"),
                origin_R=rpy_matrix(_vec(j.get("rpy", [0, 0, 0]), 3, f"{where}.joint.rpy")),
                origin_p=_vec(j.get("xyz", [0, 0, 0]), 3, f"{where}.joint.xyz"),
            )
            if np.linalg.norm(joint.axis) == 0:
                raise ModelFormatError(f"{where}: joint axis is zero")
        links.append(
            Link(
                name=name,
                mass=mass,
                com=_vec(entry.get("com", [0, 0, 0]), 3, f"{where}.com"),
                inertia=_inertia(entry.get("inertia"), where),
                parent=entry.get("parent"),
                joint=joint,
            )
        )
    if not links:
        raise ModelFormatError("model has no links")
    frames = []
    for i, f in enumerate(data.get("frames") or []):
        try:
            frames.append(
                (
                    str(f["name"]),
                    str(f["link"]),
                    rpy_matrix(_vec(f.get("rpy", [0, 0, 0]), 3, f"frames[{i}].rpy")),
                    _vec(f.get("xyz", [0, 0, 0]), 3, f"frames[{i}].xyz"),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"frames[{i}]: missing field {exc}") from None
    gravity = data.get("gravity")
    if gravity is not None:
        gravity = _vec(gravity, 3, "gravity")
    return RobotModel(links, frames, base_dim, gravity, str(data.get("name", "robot")), source_hash)


def load_model(path) -> RobotModel:
    """Read and validate a model file.

    Raises
    ------
    ModelFormatError
        On YAML syntax errors or any structural/physical validation failure.
    """
    raw = Path(path).read_bytes()
    try:
        data = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return model_from_dict(data, hashlib.sha256(raw).hexdigest())
