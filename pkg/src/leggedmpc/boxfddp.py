"""Feasibility-driven differential dynamic programming with control boxes.

The backward pass builds a local quadratic model of the Hamiltonian around
the current trajectory, solving a projected-Newton box QP at every node for
the feed-forward term and restricting the feedback gains to the free (not
bound-clamped) control subspace.  The forward pass rolls the nonlinear
dynamics while contracting the multiple-shooting gaps by (1 - alpha), so
infeasible warm starts (e.g. plain state references without controls) are
first-class citizens.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import MaxIterations, NonPDHessian, NoStepAccepted

FEAS_TOL = 1e-9


# ----------------------------------------------------------------- box QP

@dataclass
class BoxQPResult:
    x: np.ndarray
    free: np.ndarray          # boolean mask
    clamped: np.ndarray       # boolean mask
    chol: tuple | None        # cho_factor of H[free][:, free]
    converged: bool
    iterations: int

    def solve_free(self, B: np.ndarray) -> np.ndarray:
        """Apply H_free^-1 to the free-row slice of B, zero elsewhere."""
        out = np.zeros_like(B, dtype=float)
        if self.chol is not None and self.free.any():
            out[self.free] = scipy.linalg.cho_solve(self.chol, B[self.free])
        return out


def boxqp(H: np.ndarray, g: np.ndarray, lo: np.ndarray, hi: np.ndarray,
          x_init: np.ndarray | None = None, max_iters: int = 100,
          tol: float = 1e-8) -> BoxQPResult:
    """Minimize 0.5 x'Hx + g'x subject to lo <= x <= hi (H positive definite).

    Projected-Newton iteration: clamp coordinates whose bound is active with
    an inward-pointing gradient, take a Newton step on the free block, and
    backtrack along the projected arc.  Returns the free/clamped split and
    the Cholesky factor of the free block for reuse by the caller.
    """
    n = g.shape[0]
    if n == 0:
        e = np.zeros(0, dtype=bool)
        return BoxQPResult(np.zeros(0), e, e, None, True, 0)
    x = np.clip(np.zeros(n) if x_init is None else np.asarray(x_init, float),
                lo, hi)

    def value(z):
        return 0.5 * float(z @ H @ z) + float(g @ z)

    chol = None
    free = np.ones(n, dtype=bool)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        grad = g + H @ x
        at_lo = x <= lo + 1e-12 * np.maximum(1.0, np.abs(x))
        at_hi = x >= hi - 1e-12 * np.maximum(1.0, np.abs(x))
        clamped = (at_lo & (grad > 0.0)) | (at_hi & (grad < 0.0))
        free = ~clamped
        chol = None
        if free.any():
            Hff = H[np.ix_(free, free)]
            try:
                chol = scipy.linalg.cho_factor(Hff, lower=True)
            except scipy.linalg.LinAlgError as exc:
                raise NonPDHessian(
                    "free-subspace Hessian is not positive definite") from exc
        if not free.any() or np.abs(grad[free]).max() < tol:
            converged = True
            break
        dx = np.zeros(n)
        dx[free] = -scipy.linalg.cho_solve(chol, grad[free])
        f0 = value(x)
        step = 1.0
        improved = False
        for _ in range(24):
            xc = np.clip(x + step * dx, lo, hi)
            if value(xc) <= f0 + 0.1 * float(grad @ (xc - x)):
                x = xc
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return BoxQPResult(x, free, ~free, chol, converged, it)


def boxqp_kkt_violation(H, g, lo, hi, x) -> float:
    """Max violation of the box-QP first-order conditions at x."""
    grad = g + H @ x
    viol = 0.0
    for i in range(len(g)):
        if x[i] <= lo[i] + 1e-10:
            viol = max(viol, max(0.0, -grad[i]))
        elif x[i] >= hi[i] - 1e-10:
            viol = max(viol, max(0.0, grad[i]))
        else:
            viol = max(viol, abs(grad[i]))
    return viol


# ----------------------------------------------------------------- solver

@dataclass
class SolverState:
    xs: list
    us: list
    gaps: list
    mu: float
    cost: float

    @property
    def feasible(self) -> bool:
        return self.gap_norm < FEAS_TOL

    @property
    def gap_norm(self) -> float:
        return max((float(np.abs(g).max()) if g.size else 0.0)
                   for g in self.gaps)


@dataclass
class Policy:
    k_ff: list = field(default_factory=list)
    K_fb: list = field(default_factory=list)
    V_x: list = field(default_factory=list)
    V_xx: list = field(default_factory=list)


class BoxFddp:
    """One solver instance bound to one shooting problem.

    The problem object supplies nodes with ``calc``/``calc_diff``, a terminal
    node, tangent-space ``diff``/``integrate`` helpers, and the initial state
    ``x0``.  Regularization persists across ``solve_one_iteration`` calls so
    receding-horizon users inherit the previous step's value.
    """

    alphas = tuple(0.5 ** i for i in range(11))
    mu_min = 1e-9
    mu_max = 1e6
    mu_factor = 10.0
    goldstein = 0.1
    # when the local model predicts a cost increase (possible only while
    # closing gaps), accept steps whose increase stays within this multiple
    # of the prediction; requiring strict decrease instead deadlocks the
    # forward pass on infeasible warm starts
    neg_step_factor = 2.0

    def __init__(self, problem, tol: float = 1e-6, mu: float = 1e-9):
        self.problem = problem
        self.tol = tol
        self.mu = mu
        self.xs = None
        self.us = None
        self.gaps = None
        self.cost = np.inf
        self.policy = Policy()
        self.qu_norm = np.inf
        self.iterations = 0
        self.accepted_steps = 0
        self.log: list[tuple] = []
        self._derivs = None
        self._dg = 0.0
        self._dq = 0.0
        self._fvxx = None

    # -- candidate management -------------------------------------------

    def set_candidate(self, xs=None, us=None):
        problem = self.problem
        if us is None:
            us = problem.zero_controls() if hasattr(problem, "zero_controls") \
                else [np.zeros(n.nu) for n in problem.nodes]
        self.us = [np.asarray(u, float) for u in us]
        if xs is None:
            xs = problem.rollout(self.us)
        self.xs = [np.asarray(x, float) for x in xs]
        self.cost, self.gaps = problem.calc(self.xs, self.us)

    @property
    def feasible(self) -> bool:
        return self.gap_norm < FEAS_TOL

    @property
    def gap_norm(self) -> float:
        return max((float(np.abs(g).max()) if g.size else 0.0)
                   for g in self.gaps)

    def state(self) -> SolverState:
        return SolverState(self.xs, self.us, self.gaps, self.mu, self.cost)

    # -- backward pass ----------------------------------------------------

    def compute_derivatives(self):
        # refresh cost/gaps from scratch so scaled-gap bookkeeping never drifts
        self.cost, self.gaps = self.problem.calc(self.xs, self.us)
        self._derivs = [node.calc_diff(x, u) for node, x, u
                        in zip(self.problem.nodes, self.xs, self.us)]

    def backward_pass(self):
        """Riccati sweep with gap terms and box-constrained feed-forward.

        Raises NonPDHessian when a free-subspace control Hessian fails its
        Cholesky factorization at the current regularization.
        """
        problem = self.problem
        nodes = problem.nodes
        ndx = problem.ndx
        mu = self.mu
        lx_T, lxx_T = problem.terminal.calc_diff(self.xs[-1])
        Vx = [None] * (len(nodes) + 1)
        Vxx = [None] * (len(nodes) + 1)
        Vx[-1], Vxx[-1] = lx_T, lxx_T
        k_ff = [None] * len(nodes)
        K_fb = [None] * len(nodes)
        dg = 0.0
        dq = 0.0
        fvxx = [None] * (len(nodes) + 1)
        fvxx[-1] = Vxx[-1] @ self.gaps[-1]
        dg -= float(Vx[-1] @ self.gaps[-1])
        dq += float(self.gaps[-1] @ fvxx[-1])
        qu_norm = 0.0
        mu_eye = mu * np.eye(ndx)
        for k in range(len(nodes) - 1, -1, -1):
            d = self._derivs[k]
            gap = self.gaps[k + 1]
            Vx_next = Vx[k + 1] + Vxx[k + 1] @ gap
            Vxx_reg = Vxx[k + 1] + mu_eye
            Qx = d.lx + d.fx.T @ Vx_next
            Qxx = d.lxx + d.fx.T @ Vxx_reg @ d.fx
            nu = nodes[k].nu
            if nu:
                Qu = d.lu + d.fu.T @ Vx_next
                Qux = d.lxu.T + d.fu.T @ Vxx_reg @ d.fx
                Quu = d.luu + d.fu.T @ Vxx_reg @ d.fu + mu * np.eye(nu)
                Quu = 0.5 * (Quu + Quu.T)
                lo = nodes[k].u_lb - self.us[k]
                hi = nodes[k].u_ub - self.us[k]
                qp = boxqp(Quu, Qu, lo, hi, x_init=k_ff_init(k_ff, k, nu))
                kf = qp.x
                K = qp.solve_free(Qux)
                k_ff[k] = kf
                K_fb[k] = K
                dg += float(Qu @ (-kf))
                dq -= float(kf @ Quu @ kf)
                qu_norm = max(qu_norm, _projected_qu_norm(Qu, kf, lo, hi))
                Vx[k] = Qx + Qux.T @ kf - K.T @ Qu - K.T @ (Quu @ kf)
                Vxx[k] = (Qxx - Qux.T @ K - K.T @ Qux + K.T @ Quu @ K)
                Vxx[k] = 0.5 * (Vxx[k] + Vxx[k].T)
            else:
                k_ff[k] = np.zeros(0)
                K_fb[k] = np.zeros((0, ndx))
                Vx[k] = Qx
                Vxx[k] = 0.5 * (Qxx + Qxx.T)
            fvxx[k] = Vxx[k] @ self.gaps[k]
            dg -= float(Vx[k] @ self.gaps[k])
            dq += float(self.gaps[k] @ fvxx[k])
            if not np.all(np.isfinite(Vx[k])):
                raise NonPDHessian("backward pass produced non-finite values")
        self.policy = Policy(k_ff, K_fb, Vx, Vxx)
        self._dg, self._dq, self._fvxx = dg, dq, fvxx
        self.qu_norm = qu_norm
        return self.policy

    # -- forward pass -----------------------------------------------------

    def forward_pass(self, alpha: float):
        """Nonlinear rollout at step length alpha with (1-alpha) gap opening.

        Returns None when the trial diverges (non-finite state or cost);
        numeric overflow along a rejected rollout is expected, not an error.
        """
        problem = self.problem
        nodes = problem.nodes
        policy = self.policy
        xs_try = [None] * len(self.xs)
        us_try = [None] * len(self.us)
        with np.errstate(over="ignore", invalid="ignore"):
            xs_try[0] = problem.integrate(problem.x0, (alpha - 1.0) * self.gaps[0]) \
                if not self.feasible else np.array(problem.x0, copy=True)
            cost = 0.0
            for k, node in enumerate(nodes):
                dx = problem.diff(xs_try[k], self.xs[k])
                if node.nu:
                    u = self.us[k] + alpha * policy.k_ff[k] - policy.K_fb[k] @ dx
                    u = np.clip(u, node.u_lb, node.u_ub)
                else:
                    u = self.us[k]
                us_try[k] = u
                xnext, c = node.calc(xs_try[k], u)
                cost += c
                if not np.isfinite(cost):
                    return None
                xs_try[k + 1] = xnext if self.feasible else \
                    problem.integrate(xnext, (alpha - 1.0) * self.gaps[k + 1])
                if not np.all(np.isfinite(xs_try[k + 1])):
                    return None
            cost += problem.terminal.calc(xs_try[-1])
        if not np.isfinite(cost):
            return None
        return xs_try, us_try, cost

    def expected_improvement(self, alpha: float, xs_try) -> float:
        dv = 0.0
        if not self.feasible:
            for k in range(len(xs_try)):
                dx = self.problem.diff(xs_try[k], self.xs[k])
                dv -= float(self._fvxx[k] @ dx)
        d1 = self._dg + dv
        d2 = self._dq - 2.0 * dv
        return alpha * (d1 + 0.5 * alpha * d2)

    # -- iteration loop ---------------------------------------------------

    def solve_one_iteration(self):
        """Derivatives, backward pass (with mu retries), one accepted step.

        Returns True when the iterate already satisfies the convergence test
        (nothing accepted); raises NoStepAccepted when no step length works
        at the maximum regularization.
        """
        self.compute_derivatives()
        while True:
            try:
                self.backward_pass()
            except NonPDHessian:
                if not self._increase_mu():
                    raise NoStepAccepted(
                        "backward pass not positive definite at mu_max")
                continue
            if self.qu_norm < self.tol and self.feasible:
                self._log_row(alpha=0.0)
                return True
            step = self._line_search()
            if step is not None:
                alpha, xs_try, us_try, cost_try = step
                self.xs, self.us = xs_try, us_try
                self.cost = cost_try
                self.gaps = [(1.0 - alpha) * g for g in self.gaps]
                self.mu = max(self.mu_min, self.mu / self.mu_factor)
                self.accepted_steps += 1
                self.iterations += 1
                self._log_row(alpha=alpha)
                return False
            if not self._increase_mu():
                raise NoStepAccepted("no step length accepted at mu_max")

    def _line_search(self):
        was_feasible = self.feasible
        for alpha in self.alphas:
            out = self.forward_pass(alpha)
            if out is None:
                continue
            xs_try, us_try, cost_try = out
            expected = self.expected_improvement(alpha, xs_try)
            actual = self.cost - cost_try
            if expected >= 0.0:
                if actual >= self.goldstein * expected:
                    # with zero gaps the model always predicts improvement,
                    # so feasible-start iterations are cost-monotone
                    assert not was_feasible or actual >= -1e-12
                    return alpha, xs_try, us_try, cost_try
            elif actual >= self.neg_step_factor * expected:
                return alpha, xs_try, us_try, cost_try
        return None

    def _increase_mu(self) -> bool:
        if self.mu >= self.mu_max:
            return False
        self.mu = min(self.mu_max, max(self.mu, self.mu_min) * self.mu_factor)
        return True

    def _log_row(self, alpha: float):
        self.log.append((len(self.log), self.cost, self.gap_norm, self.mu,
                         alpha, self.qu_norm))

    def solve(self, xs=None, us=None, max_iters: int = 100,
              raise_on_failure: bool = False):
        """Iterate to convergence; returns (SolverState, Policy).

        On failure to accept any further step the best iterate is returned
        with ``self.status`` set, unless ``raise_on_failure`` is true.
        """
        if self.xs is None or xs is not None or us is not None:
            self.set_candidate(xs, us)
        self.status = "max_iters"
        for _ in range(max_iters):
            try:
                done = self.solve_one_iteration()
            except NoStepAccepted:
                if raise_on_failure:
                    raise
                self.status = "no_step"
                return self.state(), self.policy
            if done:
                self.status = "converged"
                return self.state(), self.policy
        return self.state(), self.policy

    def iteration_log_csv(self) -> str:
        buf = io.StringIO()
        buf.write("iter,cost,gap_inf,mu,alpha,qu_norm\n")
        for row in self.log:
            buf.write("%d,%r,%r,%r,%r,%r\n" % row)
        return buf.getvalue()


def k_ff_init(k_ff, k, nu):
    prev = k_ff[k + 1] if k + 1 < len(k_ff) else None
    if prev is not None and prev.shape == (nu,):
        return prev
    return None


def _projected_qu_norm(Qu, kf, lo, hi) -> float:
    """Stationarity measure that ignores correctly-clamped coordinates.

    A coordinate pushed onto its bound with the gradient pointing outward
    cannot be improved, so it does not count against convergence; free
    coordinates contribute their plain gradient magnitude.
    """
    out = 0.0
    for i in range(Qu.shape[0]):
        if kf[i] <= lo[i] + 1e-12 and Qu[i] > 0.0:
            continue
        if kf[i] >= hi[i] - 1e-12 and Qu[i] < 0.0:
            continue
        out = max(out, abs(Qu[i]))
    return out
