"""Rigid-contact forward dynamics, impulse dynamics and their derivatives.

Contacts are planar points pinned to the ground; the constrained dynamics
solve the primal-dual system

    [ M  -J_C.T ] [ vdot   ]   [ S u - h ]
    [ J_C   0   ] [ lambda ] = [ -a_C    ]

with a_C = Jdot*v + psi the constraint-space bias and psi a Baumgarte
stabilization term 2*zeta*omega*(frame velocity) + omega^2*(position drift).
The solve goes through the contact-space inertia (Schur complement)
Mhat = J M^-1 J.T; its factorization is reused by the derivative routines,
which differentiate the KKT conditions implicitly.  The inner inverse-
dynamics and frame-acceleration sensitivities are evaluated by central
finite differences on the configuration manifold; the outer chain rule is
exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import mass_matrix, nonlinear_effects, rnea
from .errors import DimensionMismatch, RankDeficientContacts
from .kinematics import (
    body_jacobians,
    body_twists,
    forward_kinematics,
    frame_acceleration_bias,
    frame_jacobian,
    frame_positions,
    frame_velocities,
)
from .model import RobotModel, integrate_q

COND_LIMIT = 1e12
FD_EPS = 1e-6


@dataclass
class ContactSet:
    """Active point contacts plus their stabilization parameters.

    ``anchors`` maps frame index -> world-frame anchor point; frames without
    an anchor get velocity-only stabilization (no position drift term).
    """

    frames: tuple[int, ...] = ()
    baumgarte_freq: float = 20.0
    baumgarte_damping: float = 1.0
    anchors: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.frames = tuple(int(f) for f in self.frames)

    @property
    def nf(self) -> int:
        return 2 * len(self.frames)


@dataclass
class ContactSolution:
    vdot: np.ndarray            # (nv,)
    forces: np.ndarray          # (nf,) stacked per frame (fx, fy)
    kkt_residual: float
    # cached terms reused by the derivative routine
    M: np.ndarray = None
    J: np.ndarray = None
    a_C: np.ndarray = None
    tau_b: np.ndarray = None

    def frame_force(self, k: int) -> np.ndarray:
        return self.forces[2 * k: 2 * k + 2]


@dataclass
class ImpulseSolution:
    v_plus: np.ndarray          # (nv,)
    impulses: np.ndarray        # (nf,)
    kkt_residual: float
    M: np.ndarray = None
    J: np.ndarray = None


@dataclass
class DynamicsDerivatives:
    dvdot_dx: np.ndarray        # (nv, 2nv)
    dvdot_du: np.ndarray        # (nv, nu)
    dforces_dx: np.ndarray      # (nf, 2nv)
    dforces_du: np.ndarray      # (nf, nu)


def actuation(model: RobotModel, u: np.ndarray) -> np.ndarray:
    """Map joint torques into generalized forces (base rows are zero)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (model.nu,):
        raise DimensionMismatch(f"u has shape {u.shape}, expected ({model.nu},)")
    tau = np.zeros(model.nv)
    tau[3:] = u
    return tau


def _baumgarte(model: RobotModel, q, v, contacts: ContactSet, kin=None, tw=None) -> np.ndarray:
    """Stabilization bias psi stacked per frame."""
    frames = contacts.frames
    w = contacts.baumgarte_freq
    z = contacts.baumgarte_damping
    if kin is None:
        kin = forward_kinematics(model, q)
    vel = frame_velocities(model, q, v, frames, kin=kin, tw=tw).ravel()
    psi = 2.0 * z * w * vel
    if contacts.anchors:
        pos = frame_positions(model, kin, frames)
        for k, f in enumerate(frames):
            if f in contacts.anchors:
                drift = pos[k] - np.asarray(contacts.anchors[f], dtype=float)
                psi[2 * k: 2 * k + 2] += w * w * drift
    return psi


def contact_jacobian_stack(model: RobotModel, q, frames, kin=None) -> np.ndarray:
    if kin is None:
        kin = forward_kinematics(model, q)
    B = body_jacobians(model, kin)
    if len(frames) == 0:
        return np.zeros((0, model.nv))
    return np.vstack([frame_jacobian(model, kin, B, f) for f in frames])


def contact_forward_dynamics(model: RobotModel, q, v, u, contacts: ContactSet) -> ContactSolution:
    """Constrained acceleration and contact forces for torque command u."""
    q = model.check_q(q)
    v = model.check_v(v)
    M = mass_matrix(model, q)
    h = nonlinear_effects(model, q, v)
    tau_b = actuation(model, u) - h

    if not contacts.frames:
        vdot = np.linalg.solve(M, tau_b)
        res = float(np.abs(M @ vdot - tau_b).max())
        return ContactSolution(vdot=vdot, forces=np.zeros(0), kkt_residual=res,
                               M=M, J=np.zeros((0, model.nv)), a_C=np.zeros(0), tau_b=tau_b)

    kin = forward_kinematics(model, q)
    J = contact_jacobian_stack(model, q, contacts.frames, kin=kin)
    a_C = (frame_acceleration_bias(model, q, v, contacts.frames, kin=kin)
           + _baumgarte(model, q, v, contacts, kin=kin))

    Minv_Jt = np.linalg.solve(M, J.T)
    Mhat = J @ Minv_Jt
    if np.linalg.cond(Mhat) > COND_LIMIT:
        raise RankDeficientContacts(
            f"contact-space inertia condition {np.linalg.cond(Mhat):.3e} exceeds {COND_LIMIT:.0e}"
        )
    lam = -np.linalg.solve(Mhat, a_C + Minv_Jt.T @ tau_b)
    vdot = np.linalg.solve(M, tau_b + J.T @ lam)
    res = max(
        float(np.abs(M @ vdot - J.T @ lam - tau_b).max()),
        float(np.abs(J @ vdot + a_C).max()),
    )
    return ContactSolution(vdot=vdot, forces=lam, kkt_residual=res,
                           M=M, J=J, a_C=a_C, tau_b=tau_b)


def impulse_dynamics(model: RobotModel, q, v_minus, contacts: ContactSet,
                     restitution: float = 0.0) -> ImpulseSolution:
    """Instantaneous velocity change when the given contacts gain closure.

    Post-impact contact-point velocity satisfies J v+ = -e * J v-; the
    configuration is unchanged.
    """
    q = model.check_q(q)
    v_minus = model.check_v(v_minus)
    if not (0.0 <= restitution <= 1.0):
        raise ValueError("restitution must lie in [0, 1]")
    M = mass_matrix(model, q)
    if not contacts.frames:
        return ImpulseSolution(v_plus=v_minus.copy(), impulses=np.zeros(0),
                               kkt_residual=0.0, M=M, J=np.zeros((0, model.nv)))
    J = contact_jacobian_stack(model, q, contacts.frames)
    Minv_Jt = np.linalg.solve(M, J.T)
    Mhat = J @ Minv_Jt
    if np.linalg.cond(Mhat) > COND_LIMIT:
        raise RankDeficientContacts("impulse contact set is rank deficient")
    Jv = J @ v_minus
    imp = -np.linalg.solve(Mhat, (1.0 + restitution) * Jv)
    v_plus = v_minus + Minv_Jt @ imp
    res = max(
        float(np.abs(M @ (v_plus - v_minus) - J.T @ imp).max()),
        float(np.abs(J @ v_plus + restitution * Jv).max()),
    )
    return ImpulseSolution(v_plus=v_plus, impulses=imp, kkt_residual=res, M=M, J=J)


# ------------------------------------------------------------------ derivatives

def _kkt_inverse_apply(M, J, rhs_top, rhs_bot):
    """Solve [[M, -J.T], [J, 0]] [a; b] = [rhs_top; rhs_bot] for stacked RHS."""
    nv = M.shape[0]
    nf = J.shape[0]
    K = np.zeros((nv + nf, nv + nf))
    K[:nv, :nv] = M
    K[:nv, nv:] = -J.T
    K[nv:, :nv] = J
    sol = np.linalg.solve(K, np.vstack([rhs_top, rhs_bot]))
    return sol[:nv], sol[nv:]


def _contact_residuals(model: RobotModel, q, v, vdot, lam_map, contacts: ContactSet):
    """(F1, F2) at fixed (vdot, lambda): inverse-dynamics and constraint residuals."""
    kin = forward_kinematics(model, q)
    tau = rnea(model, q, v, vdot, lam_map, kin=kin)
    if not contacts.frames:
        return tau, np.zeros(0)
    tw = body_twists(model, kin, v)
    J = contact_jacobian_stack(model, q, contacts.frames, kin=kin)
    acc = J @ vdot + frame_acceleration_bias(model, q, v, contacts.frames, kin=kin, tw=tw)
    return tau, acc + _baumgarte(model, q, v, contacts, kin=kin, tw=tw)


def contact_dynamics_derivatives(model: RobotModel, q, v, u, contacts: ContactSet,
                                 sol: ContactSolution | None = None,
                                 eps: float = FD_EPS) -> DynamicsDerivatives:
    """First-order sensitivities of (vdot, lambda) w.r.t. state tangent and u."""
    q = model.check_q(q)
    v = model.check_v(v)
    if sol is None:
        sol = contact_forward_dynamics(model, q, v, u, contacts)
    nv, nu, nf = model.nv, model.nu, contacts.nf
    lam_map = {f: sol.frame_force(k) for k, f in enumerate(contacts.frames)}

    # inner blocks: dF/d(dq), dF/dv by central differences at fixed (vdot, lam)
    F1_x = np.empty((nv, 2 * nv))
    F2_x = np.empty((nf, 2 * nv))
    for i in range(nv):
        dq = np.zeros(nv)
        dq[i] = eps
        t_p, a_p = _contact_residuals(model, integrate_q(model, q, dq), v, sol.vdot, lam_map, contacts)
        t_m, a_m = _contact_residuals(model, integrate_q(model, q, -dq), v, sol.vdot, lam_map, contacts)
        F1_x[:, i] = (t_p - t_m) / (2 * eps)
        F2_x[:, i] = (a_p - a_m) / (2 * eps)
        dv = np.zeros(nv)
        dv[i] = eps
        t_p, a_p = _contact_residuals(model, q, v + dv, sol.vdot, lam_map, contacts)
        t_m, a_m = _contact_residuals(model, q, v - dv, sol.vdot, lam_map, contacts)
        F1_x[:, nv + i] = (t_p - t_m) / (2 * eps)
        F2_x[:, nv + i] = (a_p - a_m) / (2 * eps)

    if nf == 0:
        Minv = np.linalg.inv(sol.M)
        dvdot_dx = -Minv @ F1_x
        S = np.zeros((nv, nu))
        S[3:, :] = np.eye(nu)
        return DynamicsDerivatives(
            dvdot_dx=dvdot_dx,
            dvdot_du=Minv @ S,
            dforces_dx=np.zeros((0, 2 * nv)),
            dforces_du=np.zeros((0, nu)),
        )

    dvdot_dx, dlam_dx = _kkt_inverse_apply(sol.M, sol.J, -F1_x, -F2_x)
    S = np.zeros((nv, nu))
    S[3:, :] = np.eye(nu)
    dvdot_du, dlam_du = _kkt_inverse_apply(sol.M, sol.J, S, np.zeros((nf, nu)))
    return DynamicsDerivatives(dvdot_dx=dvdot_dx, dvdot_du=dvdot_du,
                               dforces_dx=dlam_dx, dforces_du=dlam_du)


def impulse_dynamics_derivatives(model: RobotModel, q, v_minus, contacts: ContactSet,
                                 restitution: float = 0.0,
                                 sol: ImpulseSolution | None = None,
                                 eps: float = FD_EPS) -> DynamicsDerivatives:
    """Sensitivities of (v+, impulses); there is no control channel."""
    q = model.check_q(q)
    v_minus = model.check_v(v_minus)
    if sol is None:
        sol = impulse_dynamics(model, q, v_minus, contacts, restitution)
    nv, nf = model.nv, contacts.nf
    lam_map = {f: sol.impulses[2 * k: 2 * k + 2] for k, f in enumerate(contacts.frames)}
    dv = sol.v_plus - v_minus
    zero = np.zeros(nv)

    def residuals(qq, vm):
        # gravity-free momentum balance: rnea(q, 0, dv, lam) - g(q)
        t = rnea(model, qq, zero, dv, lam_map) - rnea(model, qq, zero, zero)
        J = contact_jacobian_stack(model, qq, contacts.frames)
        return t, J @ (sol.v_plus + restitution * vm)

    F1_x = np.empty((nv, 2 * nv))
    F2_x = np.empty((nf, 2 * nv))
    for i in range(nv):
        dq = np.zeros(nv)
        dq[i] = eps
        t_p, a_p = residuals(integrate_q(model, q, dq), v_minus)
        t_m, a_m = residuals(integrate_q(model, q, -dq), v_minus)
        F1_x[:, i] = (t_p - t_m) / (2 * eps)
        F2_x[:, i] = (a_p - a_m) / (2 * eps)
    # velocity block is exact: dF1/dv- = -M, dF2/dv- = e*J
    F1_x[:, nv:] = -sol.M
    F2_x[:, nv:] = restitution * sol.J

    dvp_dx, dlam_dx = _kkt_inverse_apply(sol.M, sol.J, -F1_x, -F2_x)
    return DynamicsDerivatives(dvdot_dx=dvp_dx, dvdot_du=np.zeros((nv, 0)),
                               dforces_dx=dlam_dx, dforces_du=np.zeros((nf, 0)))
