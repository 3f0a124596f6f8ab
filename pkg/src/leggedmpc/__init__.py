"""Planar full-body-dynamics MPC for legged systems."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    boxfddp,
    centroidal,
    contact,
    controllers,
    costs,
    dynamics,
    errors,
    kinematics,
    model,
    mpc,
    presets,
    problem,
    schedule,
    se2,
)
