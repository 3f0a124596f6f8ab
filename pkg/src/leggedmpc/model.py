"""Planar multibody model and the state-manifold operations.

A model is a kinematic tree of planar rigid bodies rooted at exactly one
floating base.  Configurations are ``q = (base pose in SE(2), joint angles)``
and velocities are tangent vectors ``v = (base twist in body frame, joint
rates)`` with the ordering (linear x, linear y, angular, joints) fixed
everywhere in the package.  The configuration manifold is SE(2) x R^nj, so
``integrate``/``difference`` compose the base block through the group
exponential/logarithm and treat joints additively.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se2
from .errors import DimensionMismatch

FLOATING = "floating"
REVOLUTE = "revolute"


@dataclass(frozen=True)
class Body:
    name: str
    mass: float
    com: tuple[float, float]     # centre of mass in the body frame
    inertia: float               # rotational inertia about the centre of mass


@dataclass(frozen=True)
class Joint:
    kind: str                    # FLOATING (root only) or REVOLUTE
    parent: int                  # parent body index, -1 for the world
    placement: tuple[float, float, float]  # joint frame in the parent body frame


@dataclass(frozen=True)
class ContactFrame:
    name: str
    body: int
    offset: tuple[float, float]  # point in the body frame


@dataclass
class RobotModel:
    """Immutable description of a planar floating-base kinematic tree.

    ``bodies[i]`` moves through ``joints[i]``; ``joints[0]`` must be the
    floating root.  ``torque_limits`` bound the actuated (revolute) joints
    symmetrically unless explicit lower bounds are given.
    """

    name: str
    bodies: list[Body]
    joints: list[Joint]
    contact_frames: list[ContactFrame]
    torque_limit: np.ndarray          # (nu,) positive; bounds are [-tl, +tl]
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81]))
    reflected_inertia: np.ndarray | None = None  # (nu,) additive joint-space inertia

    def __post_init__(self):
        if len(self.bodies) != len(self.joints):
            raise DimensionMismatch("one joint per body required")
        if not self.bodies:
            raise DimensionMismatch("empty model")
        if self.joints[0].kind != FLOATING or self.joints[0].parent != -1:
            raise DimensionMismatch("joints[0] must be the floating root")
        for i, j in enumerate(self.joints[1:], start=1):
            if j.kind != REVOLUTE:
                raise DimensionMismatch("only one floating joint allowed (at the root)")
            if not (0 <= j.parent < i):
                raise DimensionMismatch(f"joint {i} parent {j.parent} breaks tree ordering")
        for b in self.bodies:
            if b.mass <= 0.0:
                raise DimensionMismatch(f"body {b.name}: mass must be positive")
            if b.inertia < 0.0:
                raise DimensionMismatch(f"body {b.name}: inertia must be non-negative")
        self.torque_limit = np.asarray(self.torque_limit, dtype=float).reshape(self.nu)
        if np.any(self.torque_limit <= 0.0):
            raise DimensionMismatch("torque limits must be positive")
        self.gravity = np.asarray(self.gravity, dtype=float).reshape(2)
        if self.reflected_inertia is None:
            self.reflected_inertia = np.zeros(self.nu)
        else:
            self.reflected_inertia = np.asarray(self.reflected_inertia, dtype=float).reshape(self.nu)
        for c in self.contact_frames:
            if not (0 <= c.body < len(self.bodies)):
                raise DimensionMismatch(f"contact frame {c.name}: bad body index")

    # ---- dimensions -----------------------------------------------------
    @property
    def nj(self) -> int:
        return len(self.joints) - 1

    @property
    def nv(self) -> int:
        return 3 + self.nj

    @property
    def nq(self) -> int:
        return 3 + self.nj

    @property
    def nu(self) -> int:
        return self.nj

    @property
    def nbodies(self) -> int:
        return len(self.bodies)

    @property
    def total_mass(self) -> float:
        return float(sum(b.mass for b in self.bodies))

    def joint_velocity_index(self, joint: int) -> int:
        """First tangent coordinate of a joint (slice of 3 for the root)."""
        return 0 if joint == 0 else 2 + joint

    def frame_index(self, name: str) -> int:
        for i, c in enumerate(self.contact_frames):
            if c.name == name:
                return i
        raise KeyError(name)

    def check_q(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.nq,):
            raise DimensionMismatch(f"q has shape {q.shape}, expected ({self.nq},)")
        return q

    def check_v(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.nv,):
            raise DimensionMismatch(f"v has shape {v.shape}, expected ({self.nv},)")
        return v


def normalize_q(q: np.ndarray) -> np.ndarray:
    q = np.array(q, dtype=float)
    q[2] = se2.wrap_angle(q[2])
    return q


def state(model: RobotModel, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Pack (q, v) into a single state vector with the base angle wrapped."""
    q = normalize_q(model.check_q(q))
    v = model.check_v(v)
    return np.concatenate([q, v])


def split_state(model: RobotModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.nq + model.nv,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({model.nq + model.nv},)")
    return x[: model.nq], x[model.nq:]


# ---- manifold operations ------------------------------------------------

def integrate_q(model: RobotModel, q: np.ndarray, dq: np.ndarray) -> np.ndarray:
    """Configuration update q (+) dq: SE(2) composition for the base, additive joints."""
    q = model.check_q(q)
    dq = model.check_v(dq)
    base = se2.compose(q[:3], se2.exp(dq[:3]))
    return np.concatenate([base, q[3:] + dq[3:]])


def difference_q(model: RobotModel, q1: np.ndarray, q0: np.ndarray) -> np.ndarray:
    """Tangent dq with q0 (+) dq = q1; base part via the SE(2) logarithm."""
    q1 = model.check_q(q1)
    q0 = model.check_q(q0)
    base = se2.log(se2.compose(se2.inverse(q0[:3]), q1[:3]))
    return np.concatenate([base, q1[3:] - q0[3:]])


def integrate(model: RobotModel, x: np.ndarray, dx: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """State update x (+) dt*dx for a full tangent vector dx of size 2*nv."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (2 * model.nv,):
        raise DimensionMismatch(f"dx has shape {dx.shape}, expected ({2 * model.nv},)")
    q, v = split_state(model, x)
    qn = integrate_q(model, q, dt * dx[: model.nv])
    return np.concatenate([qn, v + dt * dx[model.nv:]])


def difference(model: RobotModel, x1: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Tangent dx with x0 (+) dx = x1."""
    q1, v1 = split_state(model, x1)
    q0, v0 = split_state(model, x0)
    return np.concatenate([difference_q(model, q1, q0), v1 - v0])


def semi_implicit_step(model: RobotModel, q: np.ndarray, v: np.ndarray,
                       vdot: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Velocity first, then configuration with the updated velocity."""
    v_next = v + dt * np.asarray(vdot, dtype=float)
    q_next = integrate_q(model, q, dt * v_next)
    return q_next, v_next


# ---- integrator chain-rule blocks ----------------------------------------

def dintegrate_q(model: RobotModel, dq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians of integrate_q(q, dq) w.r.t. right perturbations of q and dq.

    Returns (Jq, Jdq), each (nv, nv):
        integrate_q(q (+) e, dq)  =  integrate_q(q, dq) (+) Jq e   + O(e^2)
        integrate_q(q, dq + e)    =  integrate_q(q, dq) (+) Jdq e  + O(e^2)
    """
    nv = model.nv
    dq = model.check_v(dq)
    Jq = np.eye(nv)
    Jdq = np.eye(nv)
    Jq[:3, :3] = se2.adjoint(se2.inverse(se2.exp(dq[:3])))
    Jdq[:3, :3] = se2.right_jacobian(dq[:3])
    return Jq, Jdq


def ddifference_q(model: RobotModel, q1: np.ndarray, q0: np.ndarray) -> np.ndarray:
    """Jacobian of difference_q(q1, q0) w.r.t. a right perturbation of q1."""
    nv = model.nv
    r = difference_q(model, q1, q0)
    J = np.eye(nv)
    J[:3, :3] = se2.right_jacobian_inv(r[:3])
    return J
