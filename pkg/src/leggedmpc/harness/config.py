"""Model and scenario file schemas for the simulation harness.

Both files are YAML mappings with fixed keys.  A *model file* describes the
planar kinematic tree (bodies, joints, contact frames, torque limits) plus
a nominal ``posture``.  A *scenario file* references a model file and adds
everything a closed-loop run needs: task, duration, controller choice, MPC
configuration, gait parameters, disturbances, and noise/delay injection.
Unknown keys are rejected so typos fail loudly instead of running with
defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .. import costs as co
from .. import kinematics, model as mod, schedule
from ..errors import ConfigError
from ..model import (FLOATING, REVOLUTE, Body, ContactFrame, Joint,
                     RobotModel)
from ..mpc import MpcConfig

TASKS = ("stand", "balance-push", "walk", "jump", "multi-jump")
CONTROLLERS = ("riccati", "wbc")


def _read_yaml(path: str) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return data


def _check_keys(data: dict, allowed, required, where: str):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    missing = sorted(set(required) - set(data))
    if missing:
        raise ConfigError(f"{where}: missing keys {missing}")


def _vector(value, n: int, where: str) -> np.ndarray:
    try:
        out = np.asarray(value, dtype=float).reshape(n)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {n} numbers")
    if not np.all(np.isfinite(out)):
        raise ConfigError(f"{where}: entries must be finite")
    return out


# ----------------------------------------------------------------- models

_MODEL_KEYS = ("name", "gravity", "bodies", "joints", "contact_frames",
               "torque_limit", "reflected_inertia", "posture")


def model_from_dict(data: dict, where: str = "model") -> RobotModel:
    _check_keys(data, _MODEL_KEYS,
                ("name", "bodies", "joints", "contact_frames",
                 "torque_limit"), where)
    bodies = []
    for i, b in enumerate(data["bodies"]):
        _check_keys(b, ("name", "mass", "com", "inertia"),
                    ("name", "mass", "com", "inertia"),
                    f"{where}.bodies[{i}]")
        bodies.append(Body(str(b["name"]), float(b["mass"]),
                           tuple(_vector(b["com"], 2, f"body {b['name']} com")),
                           float(b["inertia"])))
    joints = []
    for i, j in enumerate(data["joints"]):
        _check_keys(j, ("kind", "parent", "placement"),
                    ("kind", "parent", "placement"), f"{where}.joints[{i}]")
        kind = str(j["kind"])
        if kind not in (FLOATING, REVOLUTE):
            raise ConfigError(f"{where}.joints[{i}]: kind must be "
                              f"'{FLOATING}' or '{REVOLUTE}'")
        joints.append(Joint(kind, int(j["parent"]),
                            tuple(_vector(j["placement"], 3,
                                          f"joint {i} placement"))))
    frames = []
    for i, c in enumerate(data["contact_frames"]):
        _check_keys(c, ("name", "body", "offset"),
                    ("name", "body", "offset"),
                    f"{where}.contact_frames[{i}]")
        frames.append(ContactFrame(str(c["name"]), int(c["body"]),
                                   tuple(_vector(c["offset"], 2,
                                                 f"frame {c['name']}"))))
    nu = len(joints) - 1
    tl = data["torque_limit"]
    torque_limit = (np.full(nu, float(tl)) if np.isscalar(tl)
                    else _vector(tl, nu, f"{where}.torque_limit"))
    kwargs = {}
    if "gravity" in data:
        kwargs["gravity"] = _vector(data["gravity"], 2, f"{where}.gravity")
    if "reflected_inertia" in data:
        kwargs["reflected_inertia"] = _vector(
            data["reflected_inertia"], nu, f"{where}.reflected_inertia")
    try:
        return RobotModel(name=str(data["name"]), bodies=bodies,
                          joints=joints, contact_frames=frames,
                          torque_limit=torque_limit, **kwargs)
    except Exception as exc:
        raise ConfigError(f"{where}: {exc}")


def load_model(path: str) -> RobotModel:
    """Build a robot model from its YAML description."""
    return model_from_dict(_read_yaml(path), where=path)


def model_to_dict(model: RobotModel, posture=None) -> dict:
    """Round-trippable plain-data form of a model (plus optional posture)."""
    data = {
        "name": model.name,
        "gravity": [float(g) for g in model.gravity],
        "bodies": [{"name": b.name, "mass": float(b.mass),
                    "com": [float(c) for c in b.com],
                    "inertia": float(b.inertia)} for b in model.bodies],
        "joints": [{"kind": j.kind, "parent": int(j.parent),
                    "placement": [float(p) for p in j.placement]}
                   for j in model.joints],
        "contact_frames": [{"name": c.name, "body": int(c.body),
                            "offset": [float(o) for o in c.offset]}
                           for c in model.contact_frames],
        "torque_limit": [float(t) for t in model.torque_limit],
    }
    if np.any(model.reflected_inertia):
        data["reflected_inertia"] = [float(r)
                                     for r in model.reflected_inertia]
    if posture is not None:
        data["posture"] = [float(x) for x in posture]
    return data


def save_model(model: RobotModel, path: str, posture=None):
    with open(path, "w") as fh:
        yaml.safe_dump(model_to_dict(model, posture), fh, sort_keys=False)


# -------------------------------------------------------------- scenarios

@dataclass
class Push:
    """Impulsive disturbance: a linear impulse applied at a body origin."""

    time: float
    body: str
    impulse: np.ndarray       # world-frame, N*s

    def __post_init__(self):
        self.impulse = np.asarray(self.impulse, dtype=float).reshape(2)
        if self.time < 0:
            raise ConfigError("push time must be non-negative")


@dataclass
class Scenario:
    """Everything a closed-loop run needs, fully validated and resolved."""

    name: str
    task: str
    model: RobotModel
    posture: np.ndarray
    duration: float
    controller: str
    mpc: MpcConfig
    weights: co.CostWeights
    bounds: co.Bounds
    cone: co.FrictionCone | None = None
    seed: int = 0
    rate: float = 400.0              # simulation and control rate, Hz
    restitution: float = 0.0
    message_delay: float = 0.0       # policy transport latency, s
    noise_std: float = 0.0           # measurement noise std (state tangent)
    conserve_flight_momentum: bool = True
    pushes: list = field(default_factory=list)
    gait: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.rate <= 0:
            raise ConfigError("rate must be positive")
        if not 0.0 <= self.restitution <= 1.0:
            raise ConfigError("restitution must be in [0, 1]")
        if self.message_delay < 0 or self.noise_std < 0:
            raise ConfigError("message_delay and noise_std must be "
                              "non-negative")
        self.posture = np.asarray(self.posture, dtype=float)
        if self.posture.shape != (self.model.nq,):
            raise ConfigError(f"posture needs {self.model.nq} entries")

    @property
    def x0(self) -> np.ndarray:
        return mod.state(self.model, self.posture,
                         np.zeros(self.model.nv))

    def foot_placements(self) -> dict:
        kin = kinematics.forward_kinematics(self.model, self.posture)
        return {f: kinematics.frame_position(self.model, kin, f)
                for f in range(len(self.model.contact_frames))}


_SCENARIO_KEYS = ("name", "task", "model", "duration", "controller", "seed",
                  "rate", "restitution", "message_delay", "noise_std",
                  "conserve_flight_momentum", "mpc", "cone", "gait",
                  "pushes", "weights", "bounds", "posture")
_MPC_KEYS = ("horizon", "node_dt", "update_rate", "control_horizon_nodes",
             "expected_delay", "solver_tol", "iterations_per_step")
_WEIGHT_SCALARS = ("w_cone", "w_placement", "w_placement_terminal",
                   "w_velocity", "w_statebounds", "w_qstatic",
                   "terminal_multiplier")


def _build_weights(model: RobotModel, posture, overrides: dict,
                   where: str) -> co.CostWeights:
    weights = co.default_weights(model, posture)
    if not overrides:
        return weights
    _check_keys(overrides, ("Q", "N", "R", "K") + _WEIGHT_SCALARS, (),
                where)
    for key in ("Q", "N"):
        if key in overrides:
            setattr(weights, key,
                    _vector(overrides[key], model.nv, f"{where}.{key}"))
    if "R" in overrides:
        weights.R = _vector(overrides["R"], model.nu, f"{where}.R")
    if "K" in overrides:
        weights.K = _vector(overrides["K"], 2, f"{where}.K")
    for key in _WEIGHT_SCALARS:
        if key in overrides:
            value = float(overrides[key])
            if value < 0:
                raise ConfigError(f"{where}.{key}: must be non-negative")
            setattr(weights, key, value)
    return weights


def load_scenario(path: str, overrides: dict | None = None) -> Scenario:
    """Parse and validate a scenario file.

    ``overrides`` (from CLI flags) replace scalar fields before validation:
    supported keys are ``seed``, ``node_dt``, ``rate``, ``delay`` and
    ``controller``.
    """
    data = _read_yaml(path)
    _check_keys(data, _SCENARIO_KEYS,
                ("name", "task", "model", "duration", "mpc"), path)
    overrides = dict(overrides or {})

    model_path = os.path.join(os.path.dirname(os.path.abspath(path)),
                              str(data["model"]))
    model_data = _read_yaml(model_path)
    model = model_from_dict(model_data, where=model_path)

    posture = data.get("posture", model_data.get("posture"))
    if posture is None:
        raise ConfigError(f"{path}: no posture given and the model file "
                          "does not define one")
    posture = _vector(posture, model.nq, f"{path}.posture")

    mpc_data = dict(data["mpc"])
    _check_keys(mpc_data, _MPC_KEYS, ("horizon", "node_dt", "update_rate"),
                f"{path}.mpc")
    if "node_dt" in overrides:
        mpc_data["node_dt"] = overrides.pop("node_dt")
    if "delay" in overrides:
        mpc_data["expected_delay"] = overrides["delay"]
    mpc_cfg = MpcConfig(**{k: (int(v) if k in ("control_horizon_nodes",
                                               "iterations_per_step")
                               else float(v))
                           for k, v in mpc_data.items()})

    cone = None
    if data.get("cone") is not None:
        cone_data = dict(data["cone"])
        _check_keys(cone_data, ("mu", "rotation", "lambda_min"), ("mu",),
                    f"{path}.cone")
        cone = co.FrictionCone(**{k: float(v) for k, v in cone_data.items()})

    pushes = []
    for i, p in enumerate(data.get("pushes") or []):
        _check_keys(p, ("time", "body", "impulse"),
                    ("time", "body", "impulse"), f"{path}.pushes[{i}]")
        body = str(p["body"])
        if body not in [b.name for b in model.bodies]:
            raise ConfigError(f"{path}.pushes[{i}]: unknown body '{body}'")
        pushes.append(Push(float(p["time"]), body,
                           _vector(p["impulse"], 2,
                                   f"{path}.pushes[{i}].impulse")))

    bounds_data = dict(data.get("bounds") or {})
    _check_keys(bounds_data, ("joint_range", "velocity_limit"), (),
                f"{path}.bounds")
    bounds = co.default_bounds(
        model, posture,
        joint_range=float(bounds_data.get("joint_range", 1.6)),
        v_limit=float(bounds_data.get("velocity_limit", 30.0)))

    weights = _build_weights(model, posture, data.get("weights") or {},
                             f"{path}.weights")

    return Scenario(
        name=str(data["name"]),
        task=str(data["task"]),
        model=model,
        posture=posture,
        duration=float(data["duration"]),
        controller=str(overrides.get("controller",
                                     data.get("controller", "riccati"))),
        mpc=mpc_cfg,
        weights=weights,
        bounds=bounds,
        cone=cone,
        seed=int(overrides.get("seed", data.get("seed", 0))),
        rate=float(overrides.get("rate", data.get("rate", 400.0))),
        restitution=float(data.get("restitution", 0.0)),
        message_delay=float(overrides.get("delay",
                                          data.get("message_delay", 0.0))),
        noise_std=float(data.get("noise_std", 0.0)),
        conserve_flight_momentum=bool(
            data.get("conserve_flight_momentum", True)),
        pushes=pushes,
        gait=dict(data.get("gait") or {}),
    )


# ---------------------------------------------------------------- gaits

def build_schedule(sc: Scenario) -> schedule.ContactSchedule:
    """Contact schedule for the scenario's task and gait parameters."""
    feet = tuple(range(len(sc.model.contact_frames)))
    placements = sc.foot_placements()
    g = dict(sc.gait)

    def take(key, default):
        return float(g.pop(key, default))

    if sc.task in ("stand", "balance-push"):
        if g:
            raise ConfigError(f"gait keys {sorted(g)} not valid for "
                              f"task '{sc.task}'")
        return schedule.stand(feet, placements)

    if sc.task in ("jump", "multi-jump"):
        stance = take("stance", 0.30)
        flight = take("flight", 0.24)
        apex = take("apex", 0.08)
        n_jumps = int(g.pop("n_jumps", 1 if sc.task == "jump" else 2))
        if g:
            raise ConfigError(f"gait keys {sorted(g)} not valid for "
                              f"task '{sc.task}'")
        if sc.task == "multi-jump" and n_jumps < 2:
            raise ConfigError("multi-jump needs n_jumps >= 2")
        return schedule.jump(feet, placements, stance=stance, flight=flight,
                             n_jumps=n_jumps, apex=apex)

    # walk: two diagonal pairs trotting
    pair_a = tuple(int(f) for f in g.pop("pair_a", (0, 3)))
    pair_b = tuple(int(f) for f in g.pop("pair_b", (1, 2)))
    if set(pair_a) | set(pair_b) != set(feet) or set(pair_a) & set(pair_b):
        raise ConfigError("walk pairs must split the feet into two groups")
    lead_in = take("lead_in", 0.3)
    swing = take("swing", 0.3)
    double_support = take("double_support", 0.1)
    stride = take("stride", 0.08)
    apex = take("apex", 0.05)
    cycles = int(g.pop("cycles", 3))
    if g:
        raise ConfigError(f"gait keys {sorted(g)} not valid for task 'walk'")
    return schedule.trot(pair_a, pair_b, placements, lead_in=lead_in,
                         swing=swing, double_support=double_support,
                         stride=stride, cycles=cycles, apex=apex)
