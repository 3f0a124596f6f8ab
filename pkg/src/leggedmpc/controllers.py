"""Tracking controllers that execute policy messages at the control rate.

Two interchangeable consumers of :class:`~leggedmpc.mpc.PolicyMessage`:

* :class:`RiccatiController` applies the solver's feedback law directly,
  ``u = clamp(u_ff + K (x_ref (-) x))``.  References between nodes come
  from a contact-consistent rollout of the feed-forward torque, and the
  base columns of ``K`` are switched off when fewer than two feet are in
  contact (leg odometry is unreliable there).
* :class:`WholeBodyController` resolves the classical task hierarchy --
  contact dynamics with actuation limits, swing feet, centre of mass,
  centroidal momentum, contact forces -- as a cascade of small quadratic
  programs in the accumulated null space.  Flight phases fall back to a
  joint-space PD around the feed-forward torque.

Both hold their last command (flagged degraded) when the active message
runs out instead of extrapolating it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import contact as ct
from . import model as mod
from .centroidal import centroidal
from .costs import Bounds, FrictionCone, cone_matrices
from .dynamics import mass_matrix, nonlinear_effects
from .errors import ConfigError, MaxIterations, Stage1Infeasible
from .kinematics import (contact_jacobian, forward_kinematics,
                         frame_acceleration_bias, frame_positions,
                         frame_velocities)
from .model import RobotModel
from .mpc import PolicyMessage


@dataclass
class WbcGains:
    """Feedback gains of the task hierarchy (all non-negative).

    Swing and CoM pairs map tracking errors to accelerations; the momentum
    pair maps CoM and angular-momentum errors to a centroidal momentum
    rate; the flight pair is the joint-space PD used when fewer than two
    feet are in contact.
    """

    swing_kp: float = 350.0
    swing_kd: float = 25.0
    com_kp: float = 60.0
    com_kd: float = 90.0
    momentum_kl: float = 30.0
    momentum_dl: float = 10.0
    momentum_dk: float = 10.0
    flight_kp: float = 60.0
    flight_kd: float = 2.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ConfigError(f"gain {name} must be non-negative")


@dataclass
class ControlCommand:
    """One control tick: clamped torques plus the references they track."""

    u: np.ndarray             # joint torques, within the actuation box
    q_joints: np.ndarray      # desired joint positions (low-level reference)
    v_joints: np.ndarray      # desired joint velocities
    x_ref: np.ndarray         # rollout reference state used for feedback
    forces_ref: np.ndarray    # planned contact forces for this interval
    contacts: tuple           # planned active contact frames
    mode: str                 # "riccati" | "wbc" | "flight_pd" | "hold"
    degraded: bool = False


# ------------------------------------------------------- reference rollout

def rollout_reference(model: RobotModel, msg: PolicyMessage,
                      control_dt: float):
    """Predict reference states at the control period across one message.

    Each node interval is integrated from its own optimal state under the
    interval's feed-forward torque and planned contact set; node times snap
    back to the optimal states, so only the in-between ticks are predicted.
    Returns (times, states) with ``times`` sorted and spanning the message.
    """
    times, states = [], []
    for i, u in enumerate(msg.us_ff):
        t0 = float(msg.node_times[i])
        t1 = float(msg.node_times[i + 1])
        n = max(1, int(round((t1 - t0) / control_dt)))
        h = (t1 - t0) / n
        contacts = ct.ContactSet(frames=tuple(msg.contacts[i]))
        x = np.asarray(msg.xs_ref[i], float)
        times.append(t0)
        states.append(x)
        q, v = mod.split_state(model, x)
        u = np.asarray(u, float)
        for j in range(1, n):
            sol = ct.contact_forward_dynamics(model, q, v, u, contacts)
            q, v = mod.semi_implicit_step(model, q, v, sol.vdot, h)
            times.append(t0 + j * h)
            states.append(mod.state(model, q, v))
    times.append(float(msg.node_times[-1]))
    states.append(np.asarray(msg.xs_ref[-1], float))
    return np.asarray(times), states


class _MessageTracker:
    """Message ingestion plus the shared reference-rollout cache.

    The cache is rebuilt completely before the message pointer is swapped,
    so a reader never observes a half-updated reference (single consumer;
    the swap is the only cross-thread boundary).
    """

    def __init__(self, model: RobotModel, bounds: Bounds,
                 control_dt: float = 1.0 / 400.0):
        if control_dt <= 0:
            raise ConfigError("control_dt must be positive")
        self.model = model
        self.bounds = bounds
        self.control_dt = float(control_dt)
        self.message: PolicyMessage | None = None
        self._times = None
        self._states = None
        self._u_prev = np.zeros(model.nu)
        self._last: ControlCommand | None = None

    def update_message(self, msg: PolicyMessage):
        times, states = rollout_reference(self.model, msg, self.control_dt)
        self._times, self._states = times, states
        self.message = msg

    def reference_at(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(self._times, t + 1e-12, side="right")) - 1
        j = min(max(j, 0), len(self._states) - 1)
        return self._states[j]

    def _stale(self, t: float) -> bool:
        return (self.message is None
                or t > self.message.validity_end + 1e-9)

    def _hold_last(self) -> ControlCommand:
        if self._last is None:
            raise ConfigError("no policy message received")
        cmd = replace(self._last, degraded=True, mode="hold")
        self._last = cmd
        return cmd


# -------------------------------------------------- Riccati state feedback

def mask_base_gain(K: np.ndarray, nv: int) -> np.ndarray:
    """Zero the base-pose and base-velocity columns of a feedback gain."""
    K = np.array(K, dtype=float)
    K[:, [0, 1, 2, nv, nv + 1, nv + 2]] = 0.0
    return K


class RiccatiController(_MessageTracker):
    """Executes the optimal policy: feed-forward plus state feedback.

    The gain acts on the manifold error ``x_ref (-) x``; when the planned
    interval has fewer than two feet in contact the base columns are
    masked, leaving pure joint feedback around the feed-forward torque.
    """

    def control(self, x: np.ndarray, t: float) -> ControlCommand:
        if self._stale(t):
            return self._hold_last()
        msg = self.message
        i = msg.interval_at(t)
        x_ref = self.reference_at(t)
        K = np.asarray(msg.K_gains[i], float)
        frames = tuple(msg.contacts[i])
        if len(frames) < 2:
            K = mask_base_gain(K, self.model.nv)
        err = mod.difference(self.model, x_ref, x)
        u = np.asarray(msg.us_ff[i], float) + K @ err
        u = np.clip(u, self.bounds.u_lb, self.bounds.u_ub)
        q_d, v_d = mod.split_state(self.model, x_ref)
        cmd = ControlCommand(
            u=u, q_joints=q_d[3:], v_joints=v_d[3:], x_ref=np.array(x_ref),
            forces_ref=np.asarray(msg.forces_ref[i], float),
            contacts=frames, mode="riccati")
        self._u_prev = u
        self._last = cmd
        return cmd


# ------------------------------------------------- hierarchical QP cascade

@dataclass
class WbcTask:
    """One priority level: minimize ||A y - a|| inside what is left over."""

    A: np.ndarray
    a: np.ndarray
    rank: int = 0
    name: str = ""


@dataclass
class RowBounds:
    """Two-sided inequality rows lb <= B y <= ub shared by every stage."""

    B: np.ndarray
    lb: np.ndarray
    ub: np.ndarray


@dataclass
class HqpSolution:
    y: np.ndarray
    stage_residuals: list     # inf-norm residual right after each stage
    null_dims: list           # remaining null-space dimension per stage


def nullspace_basis(A: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis of the right null space of A."""
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[1]
    if A.size == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > rtol * s[0])) if s.size else 0
    return vt[rank:].T


def nullspace_projector(A: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthogonal projector onto the null space: A @ P = 0."""
    Z = nullspace_basis(A, rtol)
    return Z @ Z.T


def _stage_qp(G, d, W, lb, ub):
    """min ||G z - d||^2 subject to lb <= W z <= ub, from feasible z = 0.

    Primal active-set iteration; each working-set subproblem is a plain
    least squares solved by SVD (minimum norm in flat directions), which
    keeps the step accurate without squaring the conditioning through
    normal equations.  Problem sizes here are tens of rows and columns.
    """
    n = G.shape[1]
    z = np.zeros(n)
    if W is None or W.size == 0:
        return np.linalg.lstsq(G, d, rcond=None)[0]
    m = W.shape[0]
    if np.any(lb > 1e-9) or np.any(ub < -1e-9):
        # a primal active-set method cannot recover from this; the caller
        # owns the starting point and must seed it inside the bounds
        raise ConfigError("stage QP starting point violates its bounds")
    active: list[tuple[int, int]] = []   # (row, side); +1 upper, -1 lower
    for _ in range(30 * (n + m) + 30):
        if active:
            Z = nullspace_basis(np.vstack([W[j] for j, _ in active]))
        else:
            Z = np.eye(n)
        if Z.shape[1]:
            w, *_ = np.linalg.lstsq(G @ Z, d - G @ z, rcond=None)
            p = Z @ w
        else:
            p = np.zeros(n)
        if np.abs(p).max() <= 1e-9 * max(1.0, np.abs(z).max()):
            if not active:
                return z
            grad = G.T @ (G @ z - d)
            V = np.vstack([s * W[j] for j, s in active])
            lam, *_ = np.linalg.lstsq(V.T, -grad, rcond=None)
            worst = int(np.argmin(lam))
            if lam[worst] >= -1e-9 * max(1.0, float(np.abs(lam).max())):
                return z
            active.pop(worst)
            continue
        # step to the nearest blocking row
        alpha, hit = 1.0, None
        Wp = W @ p
        Wz = W @ z
        taken = {j for j, _ in active}
        for j in range(m):
            if j in taken:
                continue
            if Wp[j] > 1e-13 and np.isfinite(ub[j]):
                a = (ub[j] - Wz[j]) / Wp[j]
                if a < alpha:
                    alpha, hit = a, (j, 1)
            elif Wp[j] < -1e-13 and np.isfinite(lb[j]):
                a = (lb[j] - Wz[j]) / Wp[j]
                if a < alpha:
                    alpha, hit = a, (j, -1)
        z = z + max(alpha, 0.0) * p
        if hit is not None:
            active.append(hit)
    raise MaxIterations("stage QP active-set iteration did not settle")


def hqp_solve(tasks, ineq: RowBounds | None = None, ny: int | None = None,
              stage1_tol: float | None = None,
              y0: np.ndarray | None = None) -> HqpSolution:
    """Lexicographic least squares over a priority-ordered task list.

    Every stage minimizes its own residual inside the accumulated null
    space of all higher-priority task matrices; the inequality rows are
    carried unchanged into each stage.  ``y0`` seeds the first stage and
    must satisfy the inequality rows (each stage output stays feasible, so
    later stages start feasible automatically); it defaults to zero, which
    is only valid when the bounds contain the origin.  When ``stage1_tol``
    is given, a first-stage residual above ``stage1_tol * max(1, |a_1|_inf)``
    raises :class:`Stage1Infeasible` (the dynamics cannot be realized
    within the actuation and cone limits).
    """
    tasks = sorted(tasks, key=lambda task: task.rank)
    if not tasks:
        raise ConfigError("hqp_solve needs at least one task")
    if ny is None:
        ny = np.atleast_2d(tasks[0].A).shape[1]
    y = np.zeros(ny) if y0 is None else np.array(y0, dtype=float)
    Z = np.eye(ny)
    residuals, null_dims = [], []
    for idx, task in enumerate(tasks):
        A = np.atleast_2d(np.asarray(task.A, float))
        a = np.atleast_1d(np.asarray(task.a, float))
        if Z.shape[1]:
            G = A @ Z
            d = a - A @ y
            if ineq is None:
                w, *_ = np.linalg.lstsq(G, d, rcond=None)
            else:
                w = _stage_qp(G, d, ineq.B @ Z,
                              ineq.lb - ineq.B @ y, ineq.ub - ineq.B @ y)
            y = y + Z @ w
            Z = Z @ nullspace_basis(G)
        res = float(np.abs(A @ y - a).max()) if a.size else 0.0
        residuals.append(res)
        null_dims.append(Z.shape[1])
        if idx == 0 and stage1_tol is not None:
            scale = max(1.0, float(np.abs(a).max()))
            if res > stage1_tol * scale:
                raise Stage1Infeasible(
                    f"dynamics-stage residual {res:.3g} exceeds tolerance")
    return HqpSolution(y=y, stage_residuals=residuals, null_dims=null_dims)


# ----------------------------------------------------- whole-body control

def centroidal_bias(model: RobotModel, q, v, eps: float = 2.0 ** -17):
    """Momentum-matrix drift (dA_G/dt) v along the configuration flow.

    Central difference of A_G(q) v with q flowing along v; A_G depends on
    the configuration only, so this matches the analytic directional
    derivative to O(eps^2).
    """
    qp = mod.integrate_q(model, q, eps * v)
    qm = mod.integrate_q(model, q, -eps * v)
    hp = centroidal(model, qp, v).A_G @ v
    hm = centroidal(model, qm, v).A_G @ v
    return (hp - hm) / (2.0 * eps)


def momentum_policy(gains: WbcGains, m_tot: float, cen, cen_ref,
                    hdot_ref: np.ndarray) -> np.ndarray:
    """Commanded centroidal momentum rate (lx, ly, k) from tracking errors.

    Linear part: mass times the referenced CoM acceleration corrected by
    CoM position/velocity errors; angular part: referenced angular rate
    corrected by the angular-momentum error.
    """
    acc_ref = hdot_ref[:2] / m_tot
    ldot = m_tot * (acc_ref
                    + gains.momentum_kl * (cen_ref.p_G - cen.p_G)
                    + gains.momentum_dl * (cen_ref.v_G - cen.v_G))
    kdot = hdot_ref[2] + gains.momentum_dk * (cen_ref.k_G - cen.k_G)
    return np.array([ldot[0], ldot[1], kdot])


def wbc_seed(model: RobotModel, bounds: Bounds,
             cone: FrictionCone | None, n_contacts: int) -> np.ndarray:
    """A point inside the torque box and friction cones (zeros elsewhere).

    Torques sit at zero clipped into the box; each contact force starts on
    the cone axis at the minimum normal force, where every cone row holds.
    """
    nv, nu = model.nv, model.nu
    y = np.zeros(nv + nu + 2 * n_contacts)
    y[nv:nv + nu] = np.clip(0.0, bounds.u_lb, bounds.u_ub)
    if cone is not None and cone.lambda_min > 0:
        axis = cone.lambda_min * np.array([-np.sin(cone.rotation),
                                           np.cos(cone.rotation)])
        for k in range(n_contacts):
            y[nv + nu + 2 * k:nv + nu + 2 * k + 2] = axis
    return y


def wbc_inequality_rows(model: RobotModel, bounds: Bounds,
                        cone: FrictionCone | None,
                        n_contacts: int) -> RowBounds:
    """Torque box and per-contact cone rows on y = (vdot, u, lambda)."""
    nv, nu = model.nv, model.nu
    nf = 2 * n_contacts
    ny = nv + nu + nf
    Bu = np.zeros((nu, ny))
    Bu[:, nv:nv + nu] = np.eye(nu)
    rows = [Bu]
    lows = [bounds.u_lb]
    highs = [bounds.u_ub]
    if cone is not None and n_contacts:
        C, c = cone_matrices(cone)
        Bc = np.zeros((3 * n_contacts, ny))
        for k in range(n_contacts):
            Bc[3 * k:3 * k + 3, nv + nu + 2 * k:nv + nu + 2 * k + 2] = C
        rows.append(Bc)
        lows.append(np.tile(c, n_contacts))
        highs.append(np.full(3 * n_contacts, np.inf))
    return RowBounds(B=np.vstack(rows), lb=np.concatenate(lows),
                     ub=np.concatenate(highs))


def stance_tasks(model: RobotModel, gains: WbcGains, x, x_ref, u_ff,
                 frames, lam_ref) -> list[WbcTask]:
    """Build the stance hierarchy at one tick.

    Priorities: (0) contact dynamics, (1) swing feet, (2) centre of mass,
    (3) centroidal momentum, (4) contact forces.  All task references are
    evaluated on the rollout state ``x_ref`` under the feed-forward torque,
    so a perfectly tracking robot sees consistent, zero-error targets.
    """
    frames = tuple(frames)
    q, v = mod.split_state(model, x)
    q_d, v_d = mod.split_state(model, x_ref)
    nv, nu = model.nv, model.nu
    nf = 2 * len(frames)
    ny = nv + nu + nf

    M = mass_matrix(model, q)
    h = nonlinear_effects(model, q, v)
    Jc = contact_jacobian(model, q, frames)
    S = np.zeros((nv, nu))
    S[nv - nu:, :] = np.eye(nu)
    A1 = np.zeros((nv + nf, ny))
    A1[:nv, :nv] = M
    A1[:nv, nv:nv + nu] = -S
    A1[:nv, nv + nu:] = -Jc.T
    A1[nv:, :nv] = Jc
    a1 = np.concatenate([-h, -frame_acceleration_bias(model, q, v, frames)])
    tasks = [WbcTask(A1, a1, rank=0, name="dynamics")]

    # reference accelerations are contact-consistent under the feed-forward
    contacts = ct.ContactSet(frames=frames)
    vdot_ref = ct.contact_forward_dynamics(
        model, q_d, v_d, np.asarray(u_ff, float), contacts).vdot
    cen = centroidal(model, q, v)
    cen_ref = centroidal(model, q_d, v_d)
    adot_v = centroidal_bias(model, q, v)
    hdot_ref = cen_ref.A_G @ vdot_ref + centroidal_bias(model, q_d, v_d)
    m_tot = model.total_mass

    swing = tuple(f for f in range(len(model.contact_frames))
                  if f not in frames)
    if swing:
        kin = forward_kinematics(model, q)
        kin_d = forward_kinematics(model, q_d)
        pos = frame_positions(model, kin, swing).ravel()
        pos_d = frame_positions(model, kin_d, swing).ravel()
        vel = frame_velocities(model, q, v, swing, kin=kin).ravel()
        vel_d = frame_velocities(model, q_d, v_d, swing, kin=kin_d).ravel()
        acc_d = (contact_jacobian(model, q_d, swing, kin=kin_d) @ vdot_ref
                 + frame_acceleration_bias(model, q_d, v_d, swing, kin=kin_d))
        target = (acc_d + gains.swing_kp * (pos_d - pos)
                  + gains.swing_kd * (vel_d - vel))
        A = np.zeros((2 * len(swing), ny))
        A[:, :nv] = contact_jacobian(model, q, swing, kin=kin)
        tasks.append(WbcTask(A, target - frame_acceleration_bias(
            model, q, v, swing, kin=kin), rank=1, name="swing"))

    # CoM rows are the linear momentum rows scaled by the total mass
    acc_com_d = hdot_ref[:2] / m_tot
    target = (acc_com_d + gains.com_kp * (cen_ref.p_G - cen.p_G)
              + gains.com_kd * (cen_ref.v_G - cen.v_G))
    A = np.zeros((2, ny))
    A[:, :nv] = cen.A_G[:2] / m_tot
    tasks.append(WbcTask(A, target - adot_v[:2] / m_tot, rank=2, name="com"))

    hdot_c = momentum_policy(gains, m_tot, cen, cen_ref, hdot_ref)
    A = np.zeros((3, ny))
    A[:, :nv] = cen.A_G
    tasks.append(WbcTask(A, hdot_c - adot_v, rank=3, name="momentum"))

    A = np.zeros((nf, ny))
    A[:, nv + nu:] = np.eye(nf)
    tasks.append(WbcTask(A, np.asarray(lam_ref, float), rank=4,
                         name="forces"))
    return tasks


def flight_pd(u_ff, q_joints, v_joints, q_joints_ref, v_joints_ref,
              kp: float, kd: float, u_lb, u_ub) -> np.ndarray:
    """Joint-space PD around the feed-forward torque, clamped to the box."""
    u = (np.asarray(u_ff, float)
         + kp * (np.asarray(q_joints_ref) - np.asarray(q_joints))
         + kd * (np.asarray(v_joints_ref) - np.asarray(v_joints)))
    return np.clip(u, u_lb, u_ub)


class WholeBodyController(_MessageTracker):
    """Instantaneous task hierarchy tracking the planned motion.

    Stance ticks solve the QP cascade and command the torque block of its
    solution; planned intervals with fewer than two feet in contact use the
    flight PD; an infeasible dynamics stage re-issues the previous clamped
    torques with the degraded flag set.
    """

    def __init__(self, model: RobotModel, bounds: Bounds,
                 gains: WbcGains | None = None,
                 cone: FrictionCone | None = None,
                 control_dt: float = 1.0 / 400.0,
                 stage1_tol: float = 1e-6):
        super().__init__(model, bounds, control_dt)
        self.gains = gains if gains is not None else WbcGains()
        self.cone = cone
        self.stage1_tol = stage1_tol
        self.last_hqp: HqpSolution | None = None

    def control(self, x: np.ndarray, t: float) -> ControlCommand:
        if self._stale(t):
            return self._hold_last()
        msg = self.message
        i = msg.interval_at(t)
        x_ref = self.reference_at(t)
        frames = tuple(msg.contacts[i])
        u_ff = np.asarray(msg.us_ff[i], float)
        lam_ref = np.asarray(msg.forces_ref[i], float)
        q_d, v_d = mod.split_state(self.model, x_ref)
        degraded = False
        if len(frames) < 2:
            q, v = mod.split_state(self.model, x)
            u = flight_pd(u_ff, q[3:], v[3:], q_d[3:], v_d[3:],
                          self.gains.flight_kp, self.gains.flight_kd,
                          self.bounds.u_lb, self.bounds.u_ub)
            mode = "flight_pd"
        else:
            try:
                tasks = stance_tasks(self.model, self.gains, x, x_ref,
                                     u_ff, frames, lam_ref)
                ineq = wbc_inequality_rows(self.model, self.bounds,
                                           self.cone, len(frames))
                seed = wbc_seed(self.model, self.bounds, self.cone,
                                len(frames))
                sol = hqp_solve(tasks, ineq, ny=seed.size,
                                stage1_tol=self.stage1_tol, y0=seed)
                self.last_hqp = sol
                nv, nu = self.model.nv, self.model.nu
                u = np.clip(sol.y[nv:nv + nu],
                            self.bounds.u_lb, self.bounds.u_ub)
                mode = "wbc"
            except Stage1Infeasible:
                u = np.clip(self._u_prev, self.bounds.u_lb, self.bounds.u_ub)
                mode = "wbc"
                degraded = True
        cmd = ControlCommand(
            u=u, q_joints=q_d[3:], v_joints=v_d[3:], x_ref=np.array(x_ref),
            forces_ref=lam_ref, contacts=frames, mode=mode,
            degraded=degraded)
        self._u_prev = u
        self._last = cmd
        return cmd


# ------------------------------------------------------------ tick logging

def dense_forces(model: RobotModel, frames, stacked) -> np.ndarray:
    """Spread per-active-frame (fx, fy) pairs over all feet, zeros elsewhere."""
    out = np.zeros(2 * len(model.contact_frames))
    stacked = np.asarray(stacked, float)
    for k, f in enumerate(frames):
        out[2 * f:2 * f + 2] = stacked[2 * k:2 * k + 2]
    return out


def log_columns(model: RobotModel) -> list:
    """Fixed column order of the per-tick controller log."""
    nx = model.nq + model.nv
    feet = range(len(model.contact_frames))
    cols = ["t"]
    cols += [f"u_cmd_{i}" for i in range(model.nu)]
    cols += [f"u_meas_{i}" for i in range(model.nu)]
    cols += [f"x_{i}" for i in range(nx)]
    cols += [f"x_ref_{i}" for i in range(nx)]
    cols += ["k_G", "k_G_ref"]
    cols += [f"lam_{a}{f}" for f in feet for a in ("x", "y")]
    cols += [f"lam_ref_{a}{f}" for f in feet for a in ("x", "y")]
    cols += [f"contact_{f}" for f in feet]
    return cols


def log_row(model: RobotModel, t: float, u_cmd, u_meas, x, x_ref,
            lam_dense, lam_ref_dense, active_frames) -> list:
    """One log record matching :func:`log_columns` (dense force layout)."""
    k_g = centroidal(model, *mod.split_state(model, x)).k_G
    k_g_ref = centroidal(model, *mod.split_state(model, x_ref)).k_G
    flags = [1.0 if f in tuple(active_frames) else 0.0
             for f in range(len(model.contact_frames))]
    return ([float(t)] + list(map(float, u_cmd)) + list(map(float, u_meas))
            + list(map(float, x)) + list(map(float, x_ref))
            + [float(k_g), float(k_g_ref)]
            + list(map(float, lam_dense)) + list(map(float, lam_ref_dense))
            + flags)
