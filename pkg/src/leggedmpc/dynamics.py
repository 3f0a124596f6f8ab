"""Inverse dynamics (recursive Newton-Euler) and the joint-space mass matrix.

Sign conventions: ``rnea(model, q, v, a, forces)`` returns the generalized
force tau with

    M(q) a + h(q, v) - J_C(q).T @ lambda = tau

so gravity enters as a bias (``rnea(q, 0, 0)`` is the force needed to hold
the robot statically) and contact forces ``lambda`` are world-frame forces
applied *on* the robot at contact frames.
"""

from __future__ import annotations

import numpy as np

from . import se2
from .kinematics import (
    Kinematics,
    crf,
    crm,
    forward_kinematics,
    spatial_inertia,
)
from .model import RobotModel


def _body_inertias(model: RobotModel) -> np.ndarray:
    cached = getattr(model, "_spatial_inertias", None)
    if cached is None:
        cached = np.array(
            [spatial_inertia(b.mass, np.asarray(b.com), b.inertia) for b in model.bodies]
        )
        model._spatial_inertias = cached
    return cached


def rnea(model: RobotModel, q: np.ndarray, v: np.ndarray, a: np.ndarray,
         contact_forces: dict[int, np.ndarray] | None = None,
         kin: Kinematics | None = None) -> np.ndarray:
    """Generalized force tau = M(q) a + h(q, v) - J_C.T lambda.

    ``contact_forces`` maps contact-frame index -> world-frame force (2,).
    """
    q = model.check_q(q)
    v = model.check_v(v)
    a = model.check_v(a)
    if kin is None:
        kin = forward_kinematics(model, q)
    nb = model.nbodies
    I = _body_inertias(model)

    # forward pass: twists and accelerations in body coordinates; gravity is
    # folded in as a fictitious upward world acceleration
    tw = np.empty((nb, 3))
    ac = np.empty((nb, 3))
    g_world = np.array([-model.gravity[0], -model.gravity[1], 0.0])
    tw[0] = v[:3]
    ac[0] = kin.X[0] @ g_world + a[:3]
    for i in range(1, nb):
        p = model.joints[i].parent
        Svj = np.array([0.0, 0.0, v[2 + i]])
        tw[i] = kin.X[i] @ tw[p] + Svj
        ac[i] = kin.X[i] @ ac[p] + np.array([0.0, 0.0, a[2 + i]]) + crm(tw[i]) @ Svj

    # net body forces
    f = np.empty((nb, 3))
    for i in range(nb):
        f[i] = I[i] @ ac[i] + crf(tw[i]) @ (I[i] @ tw[i])
    if contact_forces:
        for frame, lam in contact_forces.items():
            c = model.contact_frames[frame]
            RT = se2.rot(kin.pose[c.body, 2]).T
            fl = RT @ np.asarray(lam, dtype=float)
            rx, ry = c.offset
            f[c.body, :2] -= fl
            f[c.body, 2] -= rx * fl[1] - ry * fl[0]

    # backward pass
    tau = np.zeros(model.nv)
    for i in range(nb - 1, 0, -1):
        tau[2 + i] = f[i, 2] + model.reflected_inertia[i - 1] * a[2 + i]
        f[model.joints[i].parent] += kin.X[i].T @ f[i]
    tau[:3] = f[0]
    return tau


def nonlinear_effects(model: RobotModel, q: np.ndarray, v: np.ndarray,
                      kin: Kinematics | None = None) -> np.ndarray:
    """Coriolis, centrifugal and gravity bias h(q, v) = rnea(q, v, 0)."""
    return rnea(model, q, v, np.zeros(model.nv), kin=kin)


def gravity_torque(model: RobotModel, q: np.ndarray,
                   kin: Kinematics | None = None) -> np.ndarray:
    """Static bias g(q) = rnea(q, 0, 0)."""
    z = np.zeros(model.nv)
    return rnea(model, q, z, z, kin=kin)


def mass_matrix(model: RobotModel, q: np.ndarray,
                kin: Kinematics | None = None) -> np.ndarray:
    """Composite-rigid-body mass matrix, symmetric positive definite."""
    q = model.check_q(q)
    if kin is None:
        kin = forward_kinematics(model, q)
    nb, nv = model.nbodies, model.nv
    Ic = _body_inertias(model).copy()
    for i in range(nb - 1, 0, -1):
        p = model.joints[i].parent
        Ic[p] += kin.X[i].T @ Ic[i] @ kin.X[i]

    M = np.zeros((nv, nv))
    M[:3, :3] = Ic[0]
    for i in range(1, nb):
        # force transmitted through joint i's axis, pushed up the tree
        F = Ic[i][:, 2].copy()
        row = 2 + i
        M[row, row] = F[2] + model.reflected_inertia[i - 1]
        j = i
        while model.joints[j].parent >= 0:
            F = kin.X[j].T @ F
            j = model.joints[j].parent
            if j == 0:
                M[row, :3] = F
                M[:3, row] = F
            else:
                M[row, 2 + j] = F[2]
                M[2 + j, row] = F[2]
    return M
