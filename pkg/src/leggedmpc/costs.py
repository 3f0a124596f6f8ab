"""Cost weights, friction-cone geometry, and quadratic penalty primitives.

All cost terms follow the convention ``cost = sum_i w_i * r_i**2`` (no 1/2
factor), so gradients are ``2 J^T W r`` and Gauss-Newton Hessians are
``2 J^T W J``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .errors import ConfigError
from .model import RobotModel


@dataclass
class CostWeights:
    """Diagonal weights of the running/terminal cost and penalty scales.

    Q, N, R weight posture, velocity, and control regularization; K weights
    the per-contact force regularizer (tangential, normal).  The ``w_*``
    scalars scale the quadratic penalties.  ``w_qstatic`` weights the
    quasi-static control regularizer and is disabled by default.
    """

    Q: np.ndarray
    N: np.ndarray
    R: np.ndarray
    q_ref: np.ndarray
    K: np.ndarray = field(default_factory=lambda: np.array([1e-4, 1e-4]))
    w_cone: float = 1e2
    w_placement: float = 1e4
    w_placement_terminal: float = 1e6
    w_velocity: float = 1e3
    w_statebounds: float = 1e3
    w_qstatic: float = 0.0
    terminal_multiplier: float = 10.0

    def __post_init__(self):
        self.Q = np.asarray(self.Q, float)
        self.N = np.asarray(self.N, float)
        self.R = np.asarray(self.R, float)
        self.K = np.asarray(self.K, float)
        self.q_ref = np.asarray(self.q_ref, float)
        for name in ("Q", "N", "R", "K"):
            if np.any(getattr(self, name) < 0):
                raise ConfigError(f"cost weight {name} has negative entries")
        for name in ("w_cone", "w_placement", "w_placement_terminal",
                     "w_velocity", "w_statebounds", "w_qstatic",
                     "terminal_multiplier"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


def default_weights(model: RobotModel, q_ref: np.ndarray) -> CostWeights:
    """Weights that keep a torque-actuated quadruped near its posture."""
    nv, nu = model.nv, model.nu
    Q = np.concatenate([[0.0, 50.0, 100.0], np.full(nv - 3, 2.0)])
    N = np.concatenate([[2.0, 2.0, 2.0], np.full(nv - 3, 0.2)])
    R = np.full(nu, 5e-4)
    return CostWeights(Q=Q, N=N, R=R, q_ref=np.asarray(q_ref, float))


@dataclass
class Bounds:
    """Box bounds on joint coordinates/velocities and torques.

    Base rows are unbounded (±inf); only joint entries are finite.
    """

    q_lb: np.ndarray
    q_ub: np.ndarray
    v_lb: np.ndarray
    v_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray

    def __post_init__(self):
        for name in ("q_lb", "q_ub", "v_lb", "v_ub", "u_lb", "u_ub"):
            setattr(self, name, np.asarray(getattr(self, name), float))
        if np.any(self.u_lb > self.u_ub) or np.any(self.q_lb > self.q_ub):
            raise ConfigError("lower bound exceeds upper bound")


def default_bounds(model: RobotModel, q_nominal: np.ndarray,
                   joint_range: float = 1.6, v_limit: float = 30.0) -> Bounds:
    nq, nv = model.nq, model.nv
    q_lb = np.full(nq, -np.inf)
    q_ub = np.full(nq, np.inf)
    q_lb[3:] = q_nominal[3:] - joint_range
    q_ub[3:] = q_nominal[3:] + joint_range
    v_lb = np.full(nv, -np.inf)
    v_ub = np.full(nv, np.inf)
    v_lb[3:] = -v_limit
    v_ub[3:] = v_limit
    u_max = np.asarray(model.torque_limit, float)
    return Bounds(q_lb, q_ub, v_lb, v_ub, -u_max, u_max)


# ------------------------------------------------------------ friction cone

@dataclass(frozen=True)
class FrictionCone:
    mu: float
    rotation: float = 0.0     # surface normal angle from world vertical, rad
    lambda_min: float = 0.0

    def __post_init__(self):
        if self.mu < 0 or self.lambda_min < 0:
            raise ConfigError("friction cone needs mu >= 0 and lambda_min >= 0")


def cone_matrices(cone: FrictionCone) -> tuple[np.ndarray, np.ndarray]:
    """Half-space form (C, c) of the planar cone: feasible iff C @ lam >= c.

    Rows express |t| <= mu*n and n >= lambda_min with (t, n) the force in the
    surface frame; the rotation maps world forces into that frame, so the
    planar cone is represented exactly (no inner approximation needed).
    """
    A = np.array([[-1.0, cone.mu],
                  [1.0, cone.mu],
                  [0.0, 1.0]])
    th = cone.rotation
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    C = A @ R.T
    c = np.array([0.0, 0.0, cone.lambda_min])
    return C, c


def cone_penalty(C: np.ndarray, c: np.ndarray, lam: np.ndarray, w: float):
    """Quadratic penalty on cone violation of one contact force.

    Returns (value, d value/d lam, Gauss-Newton d2 value/d lam2).
    """
    r = np.maximum(0.0, c - C @ lam)
    active = r > 0.0
    Ca = C[active]
    value = w * float(r @ r)
    grad = -2.0 * w * (Ca.T @ r[active])
    hess = 2.0 * w * (Ca.T @ Ca)
    return value, grad, hess


# ----------------------------------------------------------- bound penalty

def interval_violation(z: np.ndarray, lb: np.ndarray, ub: np.ndarray):
    """Signed distance outside [lb, ub], zero inside."""
    return np.maximum(0.0, z - ub) + np.minimum(0.0, z - lb)


def statebounds_penalty(q: np.ndarray, v: np.ndarray, bounds: Bounds, w: float,
                        nv: int):
    """Quadratic penalty outside the joint position/velocity box.

    Returns (value, gradient over the 2*nv state tangent, GN Hessian diag).
    Joint coordinates are Euclidean, so configuration rows map one-to-one
    onto tangent rows 3..nv-1.
    """
    rq = interval_violation(q, bounds.q_lb, bounds.q_ub)
    rv = interval_violation(v, bounds.v_lb, bounds.v_ub)
    value = w * (float(rq @ rq) + float(rv @ rv))
    grad = np.zeros(2 * nv)
    hdiag = np.zeros(2 * nv)
    grad[3:nv] = 2.0 * w * rq[3:]
    grad[nv + 3:] = 2.0 * w * rv[3:]
    hdiag[3:nv] = np.where(rq[3:] != 0.0, 2.0 * w, 0.0)
    hdiag[nv + 3:] = np.where(rv[3:] != 0.0, 2.0 * w, 0.0)
    return value, grad, hdiag


# ----------------------------------------------- quasi-static regularization

def quasi_static_residual(model: RobotModel, q: np.ndarray, u: np.ndarray,
                          lam_map: dict[int, np.ndarray]) -> np.ndarray:
    """Static-equilibrium defect S u + J_C^T lam - g(q) (nv vector)."""
    from . import contact as ct
    z = np.zeros(model.nv)
    return ct.actuation(model, u) - dynamics.rnea(model, q, z, z, lam_map)


def quasi_static_residual_dq(model: RobotModel, q: np.ndarray,
                             lam_map: dict[int, np.ndarray],
                             eps: float = 1e-6) -> np.ndarray:
    """d residual / d q-tangent at fixed forces, by central differences."""
    from .model import integrate_q
    z = np.zeros(model.nv)
    out = np.empty((model.nv, model.nv))
    for i in range(model.nv):
        d = np.zeros(model.nv)
        d[i] = eps
        rp = dynamics.rnea(model, integrate_q(model, q, d), z, z, lam_map)
        rm = dynamics.rnea(model, integrate_q(model, q, -d), z, z, lam_map)
        out[:, i] = -(rp - rm) / (2.0 * eps)
    return out
