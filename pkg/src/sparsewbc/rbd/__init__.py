"""Floating-base rigid-body dynamics for planar and spatial trees."""
from . import kernels
from .dynamics import (
    Kinematics,
    bias_forces,
    com,
    com_drift,
    com_jacobian,
    forward_dynamics,
    frame_jacobian,
    frame_pose,
    inverse_dynamics,
    frame_velocity,
    jdot_qdot,
    kinematics,
    mass_matrix,
)
from .model import Frame, Joint, Link, RobotModel, RobotState
from .modelfile import load_model, model_from_dict

__all__ = [
    "Frame", "Joint", "Kinematics", "Link", "RobotModel", "RobotState",
    "bias_forces", "com", "com_drift", "com_jacobian", "forward_dynamics",
    "frame_jacobian", "frame_pose", "frame_velocity", "inverse_dynamics", "jdot_qdot", "kernels",
    "kinematics", "load_model", "mass_matrix", "model_from_dict",
]
