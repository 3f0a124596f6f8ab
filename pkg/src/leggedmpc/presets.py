"""Programmatic default models used by tests, scenarios and docs."""

from __future__ import annotations

import numpy as np

from .model import FLOATING, REVOLUTE, Body, ContactFrame, Joint, RobotModel

# default planar quadruped geometry
TRUNK_MASS = 10.0
TRUNK_INERTIA = 0.35
LINK_MASS = 0.5
LINK_LENGTH = 0.2
LINK_INERTIA = LINK_MASS * LINK_LENGTH ** 2 / 12.0
HIP_X = (0.3, 0.1, -0.1, -0.3)
HIP_BEND = (0.5, 0.5, -0.5, -0.5)   # nominal hip angles, knees bend opposite ways


def default_quadruped(torque_limit: float = 40.0) -> RobotModel:
    """Planar quadruped: trunk plus four two-link legs (nv = 11, nu = 8)."""
    bodies = [Body("trunk", TRUNK_MASS, (0.0, 0.0), TRUNK_INERTIA)]
    joints = [Joint(FLOATING, -1, (0.0, 0.0, 0.0))]
    frames = []
    for leg, hx in enumerate(HIP_X):
        upper = len(bodies)
        bodies.append(Body(f"upper{leg}", LINK_MASS, (0.0, -LINK_LENGTH / 2), LINK_INERTIA))
        joints.append(Joint(REVOLUTE, 0, (hx, 0.0, 0.0)))
        bodies.append(Body(f"lower{leg}", LINK_MASS, (0.0, -LINK_LENGTH / 2), LINK_INERTIA))
        joints.append(Joint(REVOLUTE, upper, (0.0, -LINK_LENGTH, 0.0)))
        frames.append(ContactFrame(f"foot{leg}", upper + 1, (0.0, -LINK_LENGTH)))
    return RobotModel(
        name="planar_quadruped",
        bodies=bodies,
        joints=joints,
        contact_frames=frames,
        torque_limit=np.full(8, torque_limit),
    )


def nominal_configuration(model: RobotModel) -> np.ndarray:
    """Symmetric stance: feet directly below the hips, base level."""
    height = 2.0 * LINK_LENGTH * np.cos(HIP_BEND[0])
    q = np.zeros(model.nq)
    q[1] = height
    for leg, bend in enumerate(HIP_BEND):
        q[3 + 2 * leg] = bend
        q[4 + 2 * leg] = -2.0 * bend
    return q


def nominal_state(model: RobotModel) -> np.ndarray:
    return np.concatenate([nominal_configuration(model), np.zeros(model.nv)])


def single_body(mass: float = 1.0, inertia: float = 0.1,
                com=(0.0, 0.0), contact_offset=(0.0, 0.0)) -> RobotModel:
    """Free-floating single body with one contact frame; handy for analytics."""
    return RobotModel(
        name="single_body",
        bodies=[Body("box", mass, tuple(com), inertia)],
        joints=[Joint(FLOATING, -1, (0.0, 0.0, 0.0))],
        contact_frames=[ContactFrame("corner", 0, tuple(contact_offset))],
        torque_limit=np.zeros(0),
    )


def base_pendulum(mass: float = 1.0, length: float = 0.5,
                  base_mass: float = 1.0) -> RobotModel:
    """Floating base carrying a single hanging rod (point mass at distance l)."""
    return RobotModel(
        name="base_pendulum",
        bodies=[
            Body("base", base_mass, (0.0, 0.0), 0.05),
            Body("rod", mass, (0.0, -length), 0.0),
        ],
        joints=[
            Joint(FLOATING, -1, (0.0, 0.0, 0.0)),
            Joint(REVOLUTE, 0, (0.0, 0.0, 0.0)),
        ],
        contact_frames=[ContactFrame("tip", 1, (0.0, -2.0 * length))],
        torque_limit=np.array([50.0]),
    )
