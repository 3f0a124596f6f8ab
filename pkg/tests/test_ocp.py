import math

import numpy as np
import pytest

from leggedmpc import contact as ct
from leggedmpc import costs as co
from leggedmpc import model as mod
from leggedmpc import presets, problem, schedule
from leggedmpc.errors import ConfigError, ScheduleError

from helpers import random_state


@pytest.fixture(scope="module")
def quad():
    return presets.default_quadruped()


def foot_placements(model):
    from leggedmpc import kinematics
    kin = kinematics.forward_kinematics(model, presets.nominal_configuration(model))
    return {f: kinematics.frame_position(model, kin, f)
            for f in range(len(model.contact_frames))}


# ---------------------------------------------------------------- schedule

def test_stand_schedule_permanent(quad):
    sched = schedule.stand(range(4), foot_placements(quad))
    assert sched.active_set(0.0) == (0, 1, 2, 3)
    assert sched.active_set(123.0) == (0, 1, 2, 3)
    assert sched.touchdowns_in(0.0, 100.0) == []
    assert sched.covers(1e9)


def test_zero_duration_phases_removed(quad):
    placements = foot_placements(quad)
    segs = {f: [schedule.Segment(active=0.5, inactive=0.0),
                schedule.Segment(active=math.inf)] for f in range(4)}
    sched = schedule.ContactSchedule(segs, placements)
    # no swing phase was ever created: permanently in stance
    assert sched.touchdowns_in(0.0, 10.0) == []
    assert sched.in_contact(0, 0.5)
    assert sched.in_contact(2, 7.0)


def test_jump_timeline(quad):
    placements = foot_placements(quad)
    sched = schedule.jump(range(4), placements, stance=0.3, flight=0.4, n_jumps=2)
    assert sched.active_set(0.1) == (0, 1, 2, 3)
    assert sched.active_set(0.5) == ()
    assert sched.active_set(0.8) == (0, 1, 2, 3)
    assert sched.active_set(1.2) == ()
    assert sched.active_set(1.5) == (0, 1, 2, 3)
    tds = sched.touchdowns_in(0.0, 2.0)
    assert [t for t, _ in tds] == pytest.approx([0.7] * 4 + [1.4] * 4)


def test_swing_reference_endpoints(quad):
    placements = foot_placements(quad)
    sched = schedule.jump(range(4), placements, stance=0.3, flight=0.4,
                          n_jumps=1, apex=0.08)
    p0 = placements[1]
    pos, vel = sched.swing_reference(1, 0.3)
    assert np.allclose(pos, p0, atol=1e-12)
    assert np.allclose(vel, 0.0, atol=1e-12)
    pos, vel = sched.swing_reference(1, 0.5)  # mid swing: apex, moving up/none
    assert pos[1] == pytest.approx(p0[1] + 0.08)
    pos, vel = sched.swing_reference(1, 0.7 - 1e-9)
    assert np.allclose(pos, p0, atol=1e-7)
    assert np.allclose(vel, 0.0, atol=1e-5)


def test_swing_reference_consistent_with_fd(quad):
    placements = foot_placements(quad)
    sched = schedule.trot((0, 2), (1, 3), placements, lead_in=0.2, swing=0.3,
                          double_support=0.1, stride=0.15, cycles=2)
    eps = 1e-7
    for t in (0.25, 0.3, 0.42):
        pos_p, _ = sched.swing_reference(0, t + eps)
        pos_m, _ = sched.swing_reference(0, t - eps)
        _, vel = sched.swing_reference(0, t)
        assert np.abs((pos_p - pos_m) / (2 * eps) - vel).max() < 1e-5


def test_trot_alternates_and_strides(quad):
    placements = foot_placements(quad)
    stride = 0.12
    sched = schedule.trot((0, 2), (1, 3), placements, lead_in=0.2, swing=0.3,
                          double_support=0.1, stride=stride, cycles=2)
    assert sched.active_set(0.1) == (0, 1, 2, 3)
    assert sched.active_set(0.35) == (1, 3)     # pair A swinging
    assert sched.active_set(0.55) == (0, 1, 2, 3)
    assert sched.active_set(0.75) == (0, 2)     # pair B swinging
    # each foot advances one stride per cycle
    assert np.allclose(sched.placement(0, 0.55), placements[0] + [stride, 0.0])
    assert np.allclose(sched.placement(0, 1.5), placements[0] + [2 * stride, 0.0])


def test_grid_alignment_rejects_half_offset(quad):
    placements = foot_placements(quad)
    segs = {f: [schedule.Segment(active=0.105, inactive=0.2),
                schedule.Segment(active=math.inf)] for f in range(4)}
    sched = schedule.ContactSchedule(segs, placements)
    with pytest.raises(ScheduleError):
        sched.check_grid_alignment(0.01, t_end=0.5)
    # on-grid boundaries pass
    schedule.jump(range(4), placements, stance=0.3, flight=0.4).check_grid_alignment(0.01, t_end=1.0)


def test_schedule_too_short_raises(quad):
    placements = foot_placements(quad)
    segs = {f: [schedule.Segment(active=0.2)] for f in range(4)}
    sched = schedule.ContactSchedule(segs, placements)
    w = co.default_weights(quad, presets.nominal_configuration(quad))
    with pytest.raises(ScheduleError):
        problem.build_problem(quad, sched, w, None, presets.nominal_state(quad),
                              N=30, dt=0.02)


# ------------------------------------------------------------ friction cone

def test_cone_feasibility():
    C, c = co.cone_matrices(co.FrictionCone(mu=0.7))
    assert np.all(C @ np.array([0.5, 1.0]) >= c)
    assert not np.all(C @ np.array([0.8, 1.0]) >= c)


def test_cone_degenerate_mu_zero():
    C, c = co.cone_matrices(co.FrictionCone(mu=0.0, lambda_min=1.0))
    assert np.all(C @ np.array([0.0, 2.0]) >= c - 1e-12)
    assert not np.all(C @ np.array([1e-3, 2.0]) >= c)
    assert not np.all(C @ np.array([0.0, 0.5]) >= c)


def test_cone_rotation_equivariance():
    th = np.deg2rad(30.0)
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    C0, c0 = co.cone_matrices(co.FrictionCone(mu=0.5))
    C1, c1 = co.cone_matrices(co.FrictionCone(mu=0.5, rotation=th))
    rng = np.random.default_rng(0)
    for _ in range(20):
        lam = rng.normal(size=2)
        assert np.allclose(C0 @ lam - c0, C1 @ (R @ lam) - c1, atol=1e-12)


def test_cone_penalty_gradient_fd():
    C, c = co.cone_matrices(co.FrictionCone(mu=0.4, lambda_min=5.0))
    lam = np.array([2.0, 3.0])  # violates friction and min-normal rows
    w = 7.0
    val, grad, hess = co.cone_penalty(C, c, lam, w)
    assert val > 0
    eps = 1e-7
    for i in range(2):
        d = np.zeros(2)
        d[i] = eps
        vp = co.cone_penalty(C, c, lam + d, w)[0]
        vm = co.cone_penalty(C, c, lam - d, w)[0]
        assert abs((vp - vm) / (2 * eps) - grad[i]) < 1e-5 * max(1, abs(grad[i]))
    assert np.all(np.linalg.eigvalsh(hess) >= -1e-12)


def test_cone_penalty_zero_inside():
    C, c = co.cone_matrices(co.FrictionCone(mu=0.7, lambda_min=0.1))
    val, grad, _ = co.cone_penalty(C, c, np.array([0.1, 1.0]), 10.0)
    assert val == 0.0
    assert np.all(grad == 0.0)


def test_weights_validation(quad):
    q = presets.nominal_configuration(quad)
    w = co.default_weights(quad, q)
    with pytest.raises(ConfigError):
        co.CostWeights(Q=-w.Q, N=w.N, R=w.R, q_ref=q)
    with pytest.raises(ConfigError):
        co.FrictionCone(mu=-0.1)


# ------------------------------------------------------- problem structure

def make_problem(quad, kind="stand", N=10, dt=0.02, t0=0.0, w=None):
    placements = foot_placements(quad)
    if kind == "stand":
        sched = schedule.stand(range(4), placements)
    elif kind == "jump":
        sched = schedule.jump(range(4), placements, stance=0.2, flight=0.2)
    else:
        sched = schedule.trot((0, 2), (1, 3), placements, lead_in=0.2,
                              swing=0.2, double_support=0.1, stride=0.1,
                              cycles=3)
    if w is None:
        w = co.default_weights(quad, presets.nominal_configuration(quad))
    b = co.default_bounds(quad, presets.nominal_configuration(quad))
    return problem.build_problem(quad, sched, w, b, presets.nominal_state(quad),
                                 N=N, dt=dt, t0=t0)


def test_stand_problem_shape(quad):
    prob = make_problem(quad, "stand", N=10)
    assert len(prob.nodes) == 10
    assert all(n.kind == "running" for n in prob.nodes)
    assert prob.terminal.kind == "terminal"


def test_impulse_node_index(quad):
    # touchdown at t=0.4 with dt=0.02 -> impulse inserted at slot 20
    prob = make_problem(quad, "jump", N=30, dt=0.02)
    kinds = [n.kind for n in prob.nodes]
    assert kinds.count("impulse") == 1
    idx = kinds.index("impulse")
    assert idx == 20
    assert prob.nodes[idx].time == pytest.approx(0.4)
    assert prob.nodes[idx].nu == 0
    assert prob.nodes[idx].dt == 0.0
    # flight nodes carry no contacts, stance nodes all four
    assert prob.nodes[5].contacts.frames == (0, 1, 2, 3)
    assert prob.nodes[15].contacts.frames == ()
    assert prob.nodes[idx].contacts.frames == (0, 1, 2, 3)


def test_rollout_cost_is_sum_of_nodes(quad):
    prob = make_problem(quad, "jump", N=30)
    us = [np.zeros(n.nu) for n in prob.nodes]
    xs = prob.rollout(us)
    cost, gaps = prob.calc(xs, us)
    total = sum(n.calc(xs[k], us[k])[1] for k, n in enumerate(prob.nodes))
    total += prob.terminal.calc(xs[-1])
    assert cost == pytest.approx(total, rel=1e-12)
    assert max(np.abs(g).max() for g in gaps) < 1e-12


def test_receding_shift_equivalence(quad):
    # building one node later = dropping the first node of the longer window
    a = make_problem(quad, "trot", N=12, dt=0.02, t0=0.0)
    b = make_problem(quad, "trot", N=12, dt=0.02, t0=0.02)
    for na, nb in zip(a.nodes[1:], b.nodes[:-1]):
        assert na.kind == nb.kind
        assert na.time == nb.time
        assert na.contacts.frames == nb.contacts.frames
        if na.kind == "running":
            assert sorted(na.swing) == sorted(nb.swing)
            for f in na.swing:
                assert np.array_equal(na.swing[f].pos, nb.swing[f].pos)
                assert np.array_equal(na.swing[f].vel, nb.swing[f].vel)


def test_rebuild_determinism(quad):
    a = make_problem(quad, "trot", N=15)
    b = make_problem(quad, "trot", N=15)
    rng = np.random.default_rng(8)
    x = random_state(quad, rng, spread=0.1)
    for na, nb in zip(a.nodes, b.nodes):
        u = rng.normal(size=na.nu)
        xa, ca = na.calc(x, u)
        xb, cb = nb.calc(x, u)
        assert np.array_equal(xa, xb) and ca == cb


def test_update_problem_reuses_nodes(quad):
    placements = foot_placements(quad)
    sched = schedule.stand(range(4), placements)
    w = co.default_weights(quad, presets.nominal_configuration(quad))
    b = co.default_bounds(quad, presets.nominal_configuration(quad))
    x0 = presets.nominal_state(quad)
    prob = problem.build_problem(quad, sched, w, b, x0, N=10, dt=0.02)
    before = problem.NODE_ALLOCATIONS
    out = problem.update_problem(prob, sched, w, b, x0, N=10, dt=0.02, t0=0.02)
    assert out is prob
    assert problem.NODE_ALLOCATIONS == before
    assert prob.nodes[0].time == pytest.approx(0.02)


# ------------------------------------------------------- node calc_diff FD

def node_fd(prob, node, x, u, eps=1e-6):
    ndx, nu = prob.ndx, node.nu
    fx = np.empty((ndx, ndx))
    lx = np.empty(ndx)
    for i in range(ndx):
        d = np.zeros(ndx)
        d[i] = eps
        xp, cp = node.calc(prob.integrate(x, d), u)
        xm, cm = node.calc(prob.integrate(x, -d), u)
        fx[:, i] = prob.diff(xp, xm) / (2 * eps)
        lx[i] = (cp - cm) / (2 * eps)
    fu = np.empty((ndx, nu))
    lu = np.empty(nu)
    for i in range(nu):
        d = np.zeros(nu)
        d[i] = eps
        xp, cp = node.calc(x, u + d)
        xm, cm = node.calc(x, u - d)
        fu[:, i] = prob.diff(xp, xm) / (2 * eps)
        lu[i] = (cp - cm) / (2 * eps)
    return fx, fu, lx, lu


def check_node(prob, node, x, u, tol=2e-4):
    der = node.calc_diff(x, u) if node.kind != "terminal" else None
    fx, fu, lx, lu = node_fd(prob, node, x, u)
    for got, ref, name in ((der.fx, fx, "fx"), (der.fu, fu, "fu"),
                           (der.lx, lx, "lx"), (der.lu, lu, "lu")):
        scale = max(1.0, np.abs(ref).max())
        err = np.abs(got - ref).max() / scale
        assert err < tol, f"{name} FD mismatch: {err:.2e}"


def test_running_node_derivatives_stance(quad):
    prob = make_problem(quad, "stand", N=4)
    rng = np.random.default_rng(9)
    x = random_state(quad, rng, spread=0.1)
    u = rng.normal(size=quad.nu) * 5
    check_node(prob, prob.nodes[0], x, u)


def test_running_node_derivatives_swing_and_cone(quad):
    w = co.default_weights(quad, presets.nominal_configuration(quad))
    w.w_qstatic = 0.5  # exercise the full chain including the static residual
    prob = make_problem(quad, "trot", N=20, w=w)
    swing_nodes = [n for n in prob.nodes
                   if n.kind == "running" and n.swing and n.contacts.nf]
    node = swing_nodes[len(swing_nodes) // 2]
    rng = np.random.default_rng(10)
    x = random_state(quad, rng, spread=0.1)
    u = rng.normal(size=quad.nu) * 8  # large torques push forces out of cone
    check_node(prob, node, x, u)


def test_running_node_derivatives_flight(quad):
    prob = make_problem(quad, "jump", N=30)
    node = next(n for n in prob.nodes if n.kind == "running" and not n.contacts.nf)
    rng = np.random.default_rng(11)
    x = random_state(quad, rng, spread=0.2)
    u = rng.normal(size=quad.nu)
    check_node(prob, node, x, u)


def test_impulse_node_derivatives(quad):
    prob = make_problem(quad, "jump", N=30)
    node = next(n for n in prob.nodes if n.kind == "impulse")
    rng = np.random.default_rng(12)
    x = random_state(quad, rng, spread=0.1)
    der = node.calc_diff(x)
    assert der.fu.shape == (prob.ndx, 0)
    eps = 1e-6
    fx = np.empty((prob.ndx, prob.ndx))
    lx = np.empty(prob.ndx)
    for i in range(prob.ndx):
        d = np.zeros(prob.ndx)
        d[i] = eps
        xp, cp = node.calc(prob.integrate(x, d))
        xm, cm = node.calc(prob.integrate(x, -d))
        fx[:, i] = prob.diff(xp, xm) / (2 * eps)
        lx[i] = (cp - cm) / (2 * eps)
    assert np.abs(der.fx - fx).max() / max(1, np.abs(fx).max()) < 2e-4
    assert np.abs(der.lx - lx).max() / max(1, np.abs(lx).max()) < 2e-4


def test_terminal_node_derivatives(quad):
    prob = make_problem(quad, "stand", N=4)
    rng = np.random.default_rng(13)
    x = random_state(quad, rng, spread=0.3)
    lx, lxx = prob.terminal.calc_diff(x)
    eps = 1e-6
    for i in range(prob.ndx):
        d = np.zeros(prob.ndx)
        d[i] = eps
        cp = prob.terminal.calc(prob.integrate(x, d))
        cm = prob.terminal.calc(prob.integrate(x, -d))
        fd = (cp - cm) / (2 * eps)
        assert abs(lx[i] - fd) < 2e-4 * max(1.0, abs(fd))
    assert np.allclose(lxx, lxx.T, atol=1e-12)


def test_node_at_reference_zero_cost(quad):
    # posture at reference, zero velocity/control/forces-in-cone => only
    # force-regularization remains; with K zeroed the running cost vanishes
    placements = foot_placements(quad)
    sched = schedule.stand(range(4), placements)
    q0 = presets.nominal_configuration(quad)
    w = co.default_weights(quad, q0)
    w.K = np.zeros(2)
    b = co.default_bounds(quad, q0)
    prob = problem.build_problem(quad, sched, w, b, presets.nominal_state(quad),
                                 N=2, dt=0.02)
    x = presets.nominal_state(quad)
    _, cost = prob.nodes[0].calc(x, np.zeros(quad.nu))
    assert cost == pytest.approx(0.0, abs=1e-20)
    der = prob.nodes[0].calc_diff(x, np.zeros(quad.nu))
    assert np.abs(der.lx).max() < 1e-12


def test_quasi_static_residual_zero_at_equilibrium(quad):
    q = presets.nominal_configuration(quad)
    contacts = ct.ContactSet(frames=(0, 1, 2, 3))
    J = ct.contact_jacobian_stack(quad, q, contacts.frames)
    from leggedmpc import dynamics
    g = dynamics.gravity_torque(quad, q)
    S = np.zeros((quad.nv, quad.nu))
    S[3:, :] = np.eye(quad.nu)
    sol, *_ = np.linalg.lstsq(np.hstack([S, J.T]), g, rcond=None)
    u_qs, lam_qs = sol[: quad.nu], sol[quad.nu:]
    lam_map = {f: lam_qs[2 * k: 2 * k + 2] for k, f in enumerate(contacts.frames)}
    r = co.quasi_static_residual(quad, q, u_qs, lam_map)
    assert np.abs(r).max() < 1e-9
