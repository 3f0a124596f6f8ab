"""Receding-horizon predictive control loop.

The loop owns one shooting problem and one solver instance for its whole
lifetime.  Each step retargets the problem window to the last completed node,
maps the previous solution onto the overlapping nodes (nominal posture and
quasi-static torques fill the receded tail), predicts the initial state across
the expected communication delay, runs a fixed number of solver iterations
(one by default), and emits the policy slice the tracking controller consumes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import contact as ct
from . import costs as co
from . import model as mod
from . import problem as pb
from .boxfddp import BoxFddp
from .dynamics import gravity_torque
from .errors import ConfigError, NoStepAccepted, RankDeficientContacts
from .model import RobotModel
from .schedule import ContactSchedule


@dataclass
class MpcConfig:
    horizon: float                  # optimization window, s
    node_dt: float                  # node period, s
    update_rate: float              # MPC step rate, Hz
    control_horizon_nodes: int = 4  # nodes shipped to the tracking controller
    expected_delay: float = 0.0     # communication + computation delay, s
    solver_tol: float = 1e-6
    iterations_per_step: int = 1    # >1 only for offline convergence studies

    def __post_init__(self):
        if self.horizon <= 0 or self.node_dt <= 0:
            raise ConfigError("horizon and node_dt must be positive")
        n = self.horizon / self.node_dt
        if abs(n - round(n)) > 1e-6:
            raise ConfigError(
                f"horizon {self.horizon} is not an integer multiple of "
                f"node_dt {self.node_dt}")
        if self.control_horizon_nodes < 1:
            raise ConfigError("control_horizon_nodes must be >= 1")
        if self.control_horizon_nodes > round(n):
            raise ConfigError("control horizon exceeds the optimization horizon")
        if self.update_rate <= 0:
            raise ConfigError("update_rate must be positive")
        if self.expected_delay < 0:
            raise ConfigError("expected_delay must be non-negative")
        if self.iterations_per_step < 1:
            raise ConfigError("iterations_per_step must be >= 1")

    @property
    def n_nodes(self) -> int:
        return int(round(self.horizon / self.node_dt))


_MESSAGE_FIELDS = ("stamp", "node_times", "xs_ref", "us_ff", "K_gains",
                   "forces_ref", "contacts", "diagnostics")


@dataclass
class PolicyMessage:
    """One control-horizon slice of the current plan.

    ``xs_ref`` holds ``len(us_ff) + 1`` states: one at each listed node time.
    Gains map tangent-space state error to torque as ``u_ff + K (x_ref - x)``.
    """

    stamp: float
    node_times: list      # absolute times, len(us_ff) + 1
    xs_ref: list          # full states at node_times
    us_ff: list           # feed-forward torques per control interval
    K_gains: list         # feedback gain matrix per control interval
    forces_ref: list      # stacked planar contact forces per interval
    contacts: list        # active contact frames per interval
    diagnostics: dict

    @property
    def validity_end(self) -> float:
        return float(self.node_times[-1])

    def interval_at(self, t: float) -> int:
        """Index of the control interval containing time t (clamped)."""
        times = self.node_times
        if t <= times[0]:
            return 0
        for i in range(len(self.us_ff)):
            if t < times[i + 1]:
                return i
        return len(self.us_ff) - 1

    def to_json(self) -> str:
        payload = {
            "stamp": float(self.stamp),
            "node_times": [float(t) for t in self.node_times],
            "xs_ref": [np.asarray(x, float).tolist() for x in self.xs_ref],
            "us_ff": [np.asarray(u, float).tolist() for u in self.us_ff],
            "K_gains": [np.asarray(K, float).tolist() for K in self.K_gains],
            "forces_ref": [np.asarray(f, float).tolist()
                           for f in self.forces_ref],
            "contacts": [[int(f) for f in c] for c in self.contacts],
            "diagnostics": self.diagnostics,
        }
        assert tuple(payload) == _MESSAGE_FIELDS
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "PolicyMessage":
        data = json.loads(text)
        return cls(
            stamp=float(data["stamp"]),
            node_times=[float(t) for t in data["node_times"]],
            xs_ref=[np.asarray(x, float) for x in data["xs_ref"]],
            us_ff=[np.asarray(u, float) for u in data["us_ff"]],
            K_gains=[np.asarray(K, float) for K in data["K_gains"]],
            forces_ref=[np.asarray(f, float) for f in data["forces_ref"]],
            contacts=[tuple(int(f) for f in c) for c in data["contacts"]],
            diagnostics=data["diagnostics"],
        )


# --------------------------------------------------------------- operations

def quasi_static_start(model: RobotModel, q_nom: np.ndarray,
                       contacts: ct.ContactSet):
    """Torques and contact forces holding the posture against gravity.

    Least-squares solve of ``[S  J_C^T] [u; lam] = g(q_nom)``; raises when
    the stacked matrix cannot realize the gravity load (residual > 1e-9).
    """
    if not contacts.frames:
        raise ConfigError("quasi-static start needs at least one contact")
    nv, nu = model.nv, model.nu
    g = gravity_torque(model, q_nom)
    S = np.zeros((nv, nu))
    S[nv - nu:, :] = np.eye(nu)
    J = ct.contact_jacobian_stack(model, q_nom, contacts.frames)
    A = np.hstack([S, J.T])
    sol = np.linalg.pinv(A) @ g
    residual = A @ sol - g
    if np.abs(residual).max() > 1e-9 * max(1.0, np.abs(g).max()):
        raise RankDeficientContacts(
            "quasi-static stacked matrix cannot balance gravity "
            f"(residual {np.abs(residual).max():.3g})")
    return sol[:nu], sol[nu:]


def predict_initial_state(model: RobotModel, x0: np.ndarray, u0: np.ndarray,
                          contacts: ct.ContactSet, dt_delay: float,
                          max_substep: float = 2.5e-3) -> np.ndarray:
    """Integrate x0 under constant u0 across the expected delay.

    Contact-consistent forward simulation with the current contact set;
    sub-stepped so longer delays stay accurate.
    """
    if dt_delay < 0:
        raise ConfigError("delay must be non-negative")
    x = np.asarray(x0, float)
    if dt_delay == 0.0:
        return np.array(x)
    n = max(1, int(math.ceil(dt_delay / max_substep - 1e-12)))
    h = dt_delay / n
    q, v = mod.split_state(model, x)
    for _ in range(n):
        sol = ct.contact_forward_dynamics(model, q, v, u0, contacts)
        q, v = mod.semi_implicit_step(model, q, v, sol.vdot, h)
    return mod.state(model, q, v)


# ---------------------------------------------------------------- main loop

class Mpc:
    """Predictive controller bound to one schedule, model, and cost set.

    All problem memory is allocated in the constructor (node pools cover
    every touchdown the schedule can bring into the window); ``step`` never
    constructs an action model.
    """

    _MU_WARM_CAP = 1e2

    def __init__(self, model: RobotModel, schedule: ContactSchedule,
                 weights: co.CostWeights, bounds: co.Bounds | None,
                 config: MpcConfig, x0: np.ndarray,
                 cone: co.FrictionCone | None = None):
        self.model = model
        self.schedule = schedule
        self.weights = weights
        self.bounds = bounds
        self.config = config
        self.cone = cone
        q_nom = weights.q_ref
        self.x_nominal = mod.state(model, q_nom, np.zeros(model.nv))
        N = config.n_nodes
        self.problem = pb.build_problem(model, schedule, weights, bounds, x0,
                                        N=N, dt=config.node_dt, cone=cone)
        n_touchdowns = len(schedule.touchdowns_in(0.0, schedule.end_time))
        self.problem.reserve(n_running=N, n_impulse=n_touchdowns)
        self.solver = BoxFddp(self.problem, tol=config.solver_tol)
        self._q_nom = q_nom
        self._useed_cache: dict[tuple, np.ndarray] = {}
        frames0 = self.problem.plan[0][2]
        if frames0:
            self.u_qs, self.lam_qs = quasi_static_start(
                model, q_nom, ct.ContactSet(frames=frames0))
        else:
            self.u_qs, self.lam_qs = np.zeros(model.nu), np.zeros(0)
        self.k0 = 0
        self.steps = 0
        self.last_message: PolicyMessage | None = None
        self._seed_candidate()

    def _u_seed(self, frames) -> np.ndarray:
        """Gravity-balancing torque guess for one contact configuration.

        Least-squares of the static balance; under-actuated configurations
        (flight, partial support) get the best-effort solution — zero torque
        when nothing touches the ground.
        """
        frames = tuple(frames)
        u = self._useed_cache.get(frames)
        if u is None:
            model = self.model
            if frames:
                nv, nu = model.nv, model.nu
                S = np.zeros((nv, nu))
                S[nv - nu:, :] = np.eye(nu)
                J = ct.contact_jacobian_stack(model, self._q_nom, frames)
                sol, *_ = np.linalg.lstsq(np.hstack([S, J.T]),
                                          gravity_torque(model, self._q_nom),
                                          rcond=None)
                u = sol[:nu]
            else:
                u = np.zeros(model.nu)
            self._useed_cache[frames] = u
        return u.copy()

    def _seed_candidate(self):
        """Startup guess: nominal posture, per-node quasi-static torques."""
        xs = [np.array(self.x_nominal)
              for _ in range(len(self.problem.nodes) + 1)]
        us = [self._u_seed(active) if kind == "running" else np.zeros(0)
              for kind, _t, active, _g in self.problem.plan]
        self.solver.set_candidate(xs=xs, us=us)

    # -- per-step pieces --------------------------------------------------

    def _feedforward_at(self, t: float) -> np.ndarray:
        """Torque the tracking controller is nominally applying at time t."""
        msg = self.last_message
        if msg is None:
            return self.u_qs
        return np.asarray(msg.us_ff[msg.interval_at(t)], float)

    def _shift_candidate(self, old_plan, old_xs, old_us, old_k_end: int):
        """Map the previous solution onto the new window by node time/kind.

        Nodes past the previous coverage are rolled out from the previous
        terminal state, reusing the last converged stance control when the
        contact set carries over (quasi-static torques otherwise).  This
        keeps the receded tail dynamically consistent instead of opening a
        gap against the nominal posture.
        """
        dt = self.config.node_dt
        index = {(kind, int(round(t / dt))): i
                 for i, (kind, t, *_rest) in enumerate(old_plan)}
        last_u, last_active = None, None
        for j in range(len(old_plan) - 1, -1, -1):
            if old_plan[j][0] == "running":
                last_u, last_active = old_us[j], tuple(old_plan[j][2])
                break
        xs, us = [], []
        tail_x = None
        for i, (kind, t, active, _gained) in enumerate(self.problem.plan):
            kt = int(round(t / dt))
            j = index.get((kind, kt))
            if j is not None:
                xs.append(old_xs[j])
                us.append(old_us[j])
                tail_x = None
                continue
            if tail_x is None:
                tail_x = np.array(old_xs[-1]) if kt == old_k_end \
                    else np.array(self.x_nominal)
            if kind != "running":
                u = np.zeros(0)
            elif tuple(active) == last_active and last_u is not None:
                # the appended node continues the previous window's last
                # stance: its converged control is a far better guess than
                # the static balance
                u = np.array(last_u)
            else:
                u = self._u_seed(active)
            xs.append(np.array(tail_x))
            us.append(u)
            with np.errstate(over="ignore", invalid="ignore"):
                nxt, _cost = self.problem.nodes[i].calc(tail_x, u)
            tail_x = nxt if np.all(np.isfinite(nxt)) \
                else np.array(self.x_nominal)
        xs.append(np.array(tail_x) if tail_x is not None
                  else np.array(old_xs[-1]))
        self.solver.set_candidate(xs=xs, us=us)

    def _emit(self, stamp: float, status: str) -> PolicyMessage:
        cfg = self.config
        nodes = self.problem.nodes
        plan = self.problem.plan
        xs, us = self.solver.xs, self.solver.us
        gains = self.solver.policy.K_fb
        sel = [i for i, n in enumerate(nodes)
               if n.kind == "running"][:cfg.control_horizon_nodes]
        node_times = [plan[i][1] for i in sel]
        node_times.append(plan[sel[-1]][1] + cfg.node_dt)
        forces = []
        for i in sel:
            node = nodes[i]
            q, v = mod.split_state(self.model, xs[i])
            sol = ct.contact_forward_dynamics(self.model, q, v, us[i],
                                              node.contacts)
            forces.append(sol.forces.copy())
        diag = {
            "status": status,
            "degraded": False,
            "cost": float(self.solver.cost),
            "gap_inf": float(self.solver.gap_norm),
            "qu_norm": float(self.solver.qu_norm),
            "mu": float(self.solver.mu),
            "step": int(self.steps),
        }
        return PolicyMessage(
            stamp=float(stamp),
            node_times=node_times,
            xs_ref=[np.array(xs[i]) for i in sel] + [np.array(xs[sel[-1] + 1])],
            us_ff=[np.array(us[i]) for i in sel],
            K_gains=[np.array(gains[i]) for i in sel],
            forces_ref=forces,
            contacts=[tuple(plan[i][2]) for i in sel],
            diagnostics=diag,
        )

    # -- public API --------------------------------------------------------

    def step(self, measurement: np.ndarray, wall_time: float) -> PolicyMessage:
        """One MPC update: shift, predict, iterate once, emit the policy."""
        cfg = self.config
        dt = cfg.node_dt
        k_now = int(math.floor(wall_time / dt + 1e-9))
        if k_now < self.k0:
            raise ConfigError("wall time moved backwards across the node grid")

        u_now = self._feedforward_at(wall_time)
        t_now = min(wall_time, self.schedule.end_time - 1e-12 * max(1.0, dt))
        contacts_now = ct.ContactSet(frames=self.schedule.active_set(t_now))
        x0_pred = predict_initial_state(self.model, measurement, u_now,
                                        contacts_now, cfg.expected_delay)

        old_plan = self.problem.plan
        old_k0, old_N, _ = self.problem.meta
        old_xs, old_us = self.solver.xs, self.solver.us
        pb.update_problem(self.problem, self.schedule, self.weights,
                          self.bounds, x0_pred, cfg.n_nodes, dt,
                          t0=k_now * dt, cone=self.cone)
        self._shift_candidate(old_plan, old_xs, old_us, old_k0 + old_N)
        self.k0 = k_now
        # inherit the previous step's regularization, but never the terminal
        # value of a failed solve -- that would dead-lock every later step
        self.solver.mu = min(self.solver.mu, self._MU_WARM_CAP)

        status = "stepped"
        stepped = False
        try:
            for _ in range(cfg.iterations_per_step):
                if self.solver.solve_one_iteration():
                    status = "converged"
                    break
                stepped = True
        except NoStepAccepted:
            # no progress at all this step: re-issue the previous policy,
            # marked degraded, rather than ship an unimproved warm start
            if not stepped:
                if self.last_message is None:
                    raise
                msg = replace(self.last_message, stamp=float(wall_time),
                              diagnostics={**self.last_message.diagnostics,
                                           "degraded": True})
                self.last_message = msg
                self.steps += 1
                return msg

        msg = self._emit(wall_time, status)
        self.last_message = msg
        self.steps += 1
        return msg
