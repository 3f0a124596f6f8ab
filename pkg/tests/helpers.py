"""Shared fixtures and finite-difference utilities for the test suite."""

from __future__ import annotations

import numpy as np

from leggedmpc import model as mod
from leggedmpc import presets


def fd_jacobian(f, x, eps=1e-6):
    """Central-difference Jacobian of f: R^n -> R^m at x."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = eps
        fp = np.atleast_1d(np.asarray(f(x + dx), dtype=float))
        fm = np.atleast_1d(np.asarray(f(x - dx), dtype=float))
        J[:, i] = (fp - fm) / (2.0 * eps)
    return J


def fd_config_jacobian(m, f, q, eps=1e-6):
    """Central-difference Jacobian w.r.t. right tangent perturbations of q."""
    f0 = np.atleast_1d(np.asarray(f(q), dtype=float))
    J = np.empty((f0.size, m.nv))
    for i in range(m.nv):
        dq = np.zeros(m.nv)
        dq[i] = eps
        fp = np.atleast_1d(np.asarray(f(mod.integrate_q(m, q, dq)), dtype=float))
        fm = np.atleast_1d(np.asarray(f(mod.integrate_q(m, q, -dq)), dtype=float))
        J[:, i] = (fp - fm) / (2.0 * eps)
    return J


def fd_state_jacobian(m, f, x, eps=1e-6):
    """Central-difference Jacobian w.r.t. the 2*nv state tangent, manifold-aware."""
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    J = np.empty((f0.size, 2 * m.nv))
    for i in range(2 * m.nv):
        dx = np.zeros(2 * m.nv)
        dx[i] = eps
        fp = np.atleast_1d(np.asarray(f(mod.integrate(m, x, dx)), dtype=float))
        fm = np.atleast_1d(np.asarray(f(mod.integrate(m, x, -dx)), dtype=float))
        J[:, i] = (fp - fm) / (2.0 * eps)
    return J


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b).max() / max(1.0, np.abs(b).max())


def random_state(m, rng, spread=0.3, base_height=None):
    q = presets.nominal_configuration(m) if m.name == "planar_quadruped" else np.zeros(m.nq)
    q = q + spread * rng.normal(size=m.nq)
    if base_height is not None:
        q[1] = base_height
    v = spread * rng.normal(size=m.nv)
    return np.concatenate([mod.normalize_q(q), v])
