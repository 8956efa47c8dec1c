"""Structured-text (YAML) configuration: parsing, validation, serialization.

Every file carries ``schema_version`` and ``kind`` (robot, task or bundle).
Parse failures raise :class:`ParseError` with the file and line; semantic
problems raise :class:`ValidationError` naming the offending field (and its
line when known).  Precedence when merging is CLI > file > built-in.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .errors import ParseError, ValidationError

SCHEMA_VERSION = 1


class _LineDict(dict):
    """dict that remembers the source line of each key."""

    lines: dict


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise yaml.constructor.ConstructorError(
                None, None, f"duplicate key {key!r}", key_node.start_mark)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def parse_text(text: str, path="<string>"):
    try:
        return yaml.load(io.StringIO(text), Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(path, mark.line + 1 if mark else None, exc.problem or str(exc)) from None
    except yaml.YAMLError as exc:
        raise ParseError(path, None, str(exc)) from None


def read_file(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(path, None, f"cannot read file: {exc.strerror}") from None
    return parse_text(text, path)


def line_of(doc, key) -> Optional[int]:
    return getattr(doc, "lines", {}).get(key)


def _where(doc, key, prefix=""):
    line = line_of(doc, key)
    name = f"{prefix}{key}"
    return f"{name} (line {line})" if line else name


def require(doc, key, prefix="", types=None):
    if not isinstance(doc, dict) or key not in doc:
        raise ValidationError(f"{prefix}{key}", "required field missing")
    value = doc[key]
    if types is not None and not isinstance(value, types):
        raise ValidationError(_where(doc, key, prefix), f"expected {_typename(types)}, got {type(value).__name__}")
    return value


def _typename(types):
    if isinstance(types, tuple):
        return " or ".join(t.__name__ for t in types)
    return types.__name__


def check_header(doc, kind: str, path="<string>"):
    if not isinstance(doc, dict):
        raise ValidationError("<document>", f"{path}: top level must be a mapping")
    version = require(doc, "schema_version", types=int)
    if version != SCHEMA_VERSION:
        raise ValidationError(_where(doc, "schema_version"), f"unsupported schema version {version}")
    found = require(doc, "kind", types=str)
    if found != kind:
        raise ValidationError(_where(doc, "kind"), f"expected kind {kind!r}, got {found!r}")


def dump(doc: dict) -> str:
    """Canonical text form: key order preserved, flow style for leaf lists."""
    return yaml.safe_dump(_plain(doc), sort_keys=False, default_flow_style=None, width=100)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return obj.item()
    return obj


def data_path(*parts) -> Path:
    return Path(resources.files("safeguard").joinpath("data", *parts))


# ---------------------------------------------------------------------------
# robot files


def parse_robot(doc, path="<string>"):
    """Build a :class:`~safeguard.robots.RobotConfig` from a parsed robot document."""
    from .dynamics import DEFAULT_LIMITS, DynamicsModel
    from .kinematics import build_model
    from .robots import RobotConfig

    check_header(doc, "robot", path)
    name = require(doc, "name", types=str)
    order = require(doc, "dynamics_order", types=int)
    if order not in (1, 2):
        raise ValidationError(_where(doc, "dynamics_order"), "must be 1 or 2")
    base_kind = doc.get("base_kind", "fixed")
    if base_kind not in ("fixed", "mobile"):
        raise ValidationError(_where(doc, "base_kind"), "must be 'fixed' or 'mobile'")
    frames = require(doc, "frames", types=list)
    for i, f in enumerate(frames):
        prefix = f"frames[{i}]."
        require(f, "name", prefix, str)
        joint = f.get("joint")
        if joint is not None:
            jtype = require(joint, "type", prefix + "joint.", str)
            valid = ("revolute_x", "revolute_y", "revolute_z", "planar_x", "planar_y", "planar_yaw")
            if jtype not in valid:
                raise ValidationError(_where(joint, "type", prefix + "joint."),
                                      f"unknown joint type {jtype!r}; expected one of {', '.join(valid)}")
            lim = joint.get("limits")
            if lim is not None and (len(lim) != 2 or not lim[0] < lim[1]):
                raise ValidationError(_where(joint, "limits", prefix + "joint."), "limits must be [lo, hi] with lo < hi")
    limits = dict(DEFAULT_LIMITS[order])
    user_limits = doc.get("control_limits") or {}
    for key, value in user_limits.items():
        if key not in limits:
            raise ValidationError(_where(user_limits, key, "control_limits."), "unknown control limit")
        if not (isinstance(value, (int, float)) and value > 0):
            raise ValidationError(_where(user_limits, key, "control_limits."), "must be a positive number")
        limits[key] = float(value)
    try:
        model = build_model(
            doc.get("model", name), frames, [tuple(p) for p in doc.get("self_pairs", [])],
            base_kind, tuple(doc.get("hands", ())), doc.get("base_frame"),
        )
    except (ValueError, KeyError) as exc:
        raise ValidationError(f"{path}: frames", str(exc)) from None
    for h in model.hands:
        if h not in model.frame_names:
            raise ValidationError(_where(doc, "hands"), f"unknown hand frame {h!r}")
    dyn = DynamicsModel.for_model(model, order, limits)
    return RobotConfig(name, model, dyn, limits, bool(doc.get("sport_mode", False)), dict(doc))


def robot_document(cfg) -> dict:
    """Serialise a robot config back into its canonical document."""
    model = cfg.model
    frames = []
    for f in model.frames:
        item = {"name": f.name, "parent": "world" if f.parent < 0 else model.frames[f.parent].name,
                "xyz": list(f.xyz)}
        if tuple(f.quat) != (1.0, 0.0, 0.0, 0.0):
            item["quat"] = list(f.quat)
        if f.joint is not None:
            item["joint"] = {"type": f.joint.joint_type.value, "limits": list(f.joint.limits),
                             "home": f.joint.home}
        if f.radius is not None:
            item["sphere"] = f.radius
        item["env_collision"] = f.env_collision
        item["self_collision"] = f.self_collision
        frames.append(item)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "robot",
        "name": cfg.name,
        "model": model.name,
        "dynamics_order": cfg.dynamics.order,
        "base_kind": model.base_kind.value,
        "hands": list(model.hands),
        "control_limits": dict(cfg.control_limits),
        "frames": frames,
        "self_pairs": [[model.frames[i].name, model.frames[j].name] for i, j in model.self_pairs],
    }
    if cfg.sport_mode:
        doc["sport_mode"] = True
    if model.base_frame:
        doc["base_frame"] = model.base_frame
    return doc


def load_robot_file(path):
    return parse_robot(read_file(path), path)


# ---------------------------------------------------------------------------
# task files

_TASK_FIELDS = {
    # key: (types, required)
    "name": (str, True),
    "robot_config": (str, True),
    "num_obstacles": (int, True),
    "obstacle_velocity": ((int, float), False),
    "arm_goal_velocity": ((int, float), False),
    "base_goal_velocity": ((int, float, type(None)), False),
    "max_steps": (int, False),
    "dt": ((int, float), False),
    "workspace": (list, False),
    "obstacle_radius_range": (list, False),
    "goal_kind": (str, False),
    "box_fraction": ((int, float), False),
    "goal_motion": (str, False),
    "goal_motion_radius": ((int, float), False),
    "goal_motion_rate": ((int, float), False),
    "base_goal_range": (list, False),
    "base_goal_cone": ((int, float), False),
    "arm_goal_spread": ((int, float), False),
    "obstacle_placement": (str, False),
    "hyperparameters": (dict, False),
    "description": (str, False),
}
_ALGOS = ("ssa", "cbf", "sss", "pfm", "sma")


def _no_unknown(doc, allowed, prefix=""):
    for key in doc:
        if key not in allowed:
            raise ValidationError(_where(doc, key, prefix), f"unknown field; valid: {', '.join(allowed)}")


def parse_task(doc, path="<string>", header: bool = True):
    """Build a TaskConfig from a task document (or an inline task mapping)."""
    from . import robots
    from .env_task import TaskConfig

    if header:
        check_header(doc, "task", path)
    elif not isinstance(doc, dict):
        raise ValidationError("task", "inline task must be a mapping")
    body = {k: v for k, v in doc.items() if k not in ("schema_version", "kind")}
    _no_unknown(body, tuple(_TASK_FIELDS))
    kwargs = {}
    for key, (types, needed) in _TASK_FIELDS.items():
        if key in body:
            kwargs[key] = require(doc, key, types=types)
            if isinstance(kwargs[key], bool):
                raise ValidationError(_where(doc, key), "expected a number, got bool")
        elif needed:
            require(doc, key)
    if kwargs["robot_config"] not in robots.names(include_aliases=True):
        raise ValidationError(_where(doc, "robot_config"),
                              f"unknown robot config; valid: {', '.join(robots.names(True))}")
    hyper = kwargs.get("hyperparameters", {})
    for algo, value in hyper.items():
        if algo not in _ALGOS:
            raise ValidationError(_where(hyper, algo, "hyperparameters."), f"unknown algorithm; valid: {', '.join(_ALGOS)}")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
            raise ValidationError(_where(hyper, algo, "hyperparameters."), "must be a number >= 0")
    for key in ("obstacle_radius_range", "base_goal_range"):
        if key in kwargs:
            v = kwargs[key]
            if len(v) != 2 or not all(isinstance(x, (int, float)) for x in v) or not 0 < v[0] <= v[1]:
                raise ValidationError(_where(doc, key), "must be [lo, hi] with 0 < lo <= hi")
            kwargs[key] = tuple(float(x) for x in v)
    try:
        return TaskConfig(**kwargs)
    except ValidationError as exc:
        raise ValidationError(_where(doc, exc.field), exc.reason) from None
    except ValueError as exc:
        raise ValidationError(f"{path}", str(exc)) from None


def task_document(cfg) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "task"}
    for key in _TASK_FIELDS:
        value = getattr(cfg, key)
        if hasattr(value, "value"):
            value = value.value
        if key == "workspace":
            value = [list(value[0]), list(value[1])]
        elif isinstance(value, tuple):
            value = list(value)
        elif key == "hyperparameters":
            value = {a: float(value[a]) for a in _ALGOS if a in value}
        elif isinstance(value, float):
            value = float(value)
        doc[key] = value
    return doc


def load_task_file(path):
    return parse_task(read_file(path), path)


def write_task_files(directory=None) -> list:
    """Regenerate the bundled task files from the built-in registry."""
    from .env_task import BUILTIN_TASKS

    directory = Path(directory) if directory is not None else data_path("tasks")
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, cfg in BUILTIN_TASKS.items():
        p = directory / f"{name}.yaml"
        p.write_text(dump(task_document(cfg)))
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# run bundles


@dataclass(frozen=True, eq=False)
class RunBundle:
    task: object  # TaskConfig, with dt and max_steps already applied
    robot: str
    dyn: object  # DynamicsModel
    spec: object  # SafetyIndexSpec
    filter: object  # FilterParams
    policy: object  # PolicyConfig
    sigmas: object  # bench.Sigmas
    dt: float
    max_steps: int
    seeds: tuple

    @property
    def algorithm(self) -> str:
        return self.filter.algorithm.value

    @property
    def param(self) -> float:
        return float(self.filter.param)


_BUNDLE_FIELDS = ("schema_version", "kind", "task", "algorithm", "param", "safety_index", "filter", "policy",
                  "sigmas", "dt", "max_steps", "seeds")
_SPEC_FIELDS = ("order", "d_min_env", "d_min_self", "n", "k")
_FILTER_FIELDS = ("activation_tolerance", "q_weights", "slack_penalty", "dls_damping", "max_iter", "tol")
_POLICY_FIELDS = ("kp_arm", "kp_base_lin", "kp_base_yaw", "kd", "ik_damping")
_SIGMA_FIELDS = ("arm", "base", "self", "env")
OVERRIDE_KEYS = ("task", "algorithm", "param", "dt", "max_steps", "seed", "episodes")


def _section(doc, key, allowed):
    sec = doc.get(key) or {}
    if not isinstance(sec, dict):
        raise ValidationError(_where(doc, key), "must be a mapping")
    _no_unknown(sec, allowed, f"{key}.")
    for k, v in sec.items():
        if k == "q_weights":
            if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
                raise ValidationError(_where(sec, k, f"{key}."), "must be a list of numbers")
        elif isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(_where(sec, k, f"{key}."), f"expected a number, got {type(v).__name__}")
    return sec


def _merge(base: dict, doc: dict) -> dict:
    out = dict(base)
    for key, value in doc.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "task":
            merged = dict(out[key])
            merged.update(value)
            out[key] = merged
        else:
            out[key] = value
    return out


def _resolve_task(value, path):
    from .env_task import get_task

    if isinstance(value, dict):
        return parse_task(value, path, header="kind" in value)
    if not isinstance(value, str):
        raise ValidationError("task", "must be a task name, a task file path or an inline mapping")
    if value.endswith((".yaml", ".yml")):
        base = Path(path).parent if path not in (None, "<string>", "<cli>") else Path.cwd()
        p = Path(value) if Path(value).is_absolute() else base / value
        return load_task_file(p)
    return get_task(value)


def load_bundle(paths=(), overrides: Optional[dict] = None, text: Optional[str] = None):
    """Merge bundle/task files and CLI overrides into a validated RunBundle.

    Precedence is overrides > files (later files win) > built-in defaults.
    A task file counts as a bundle whose ``task`` is that file.
    """
    from . import robots
    from .bench import Sigmas
    from .policy import PolicyConfig
    from .safe_control import Algorithm, FilterParams
    from .safety_index import SafetyIndexSpec

    merged: dict = {}
    source = "<cli>"
    docs = [(p, read_file(p)) for p in (paths or ())]
    if text is not None:
        docs.append(("<string>", parse_text(text)))
    for path, doc in docs:
        if isinstance(doc, dict) and doc.get("kind") == "task":
            parse_task(doc, path)  # validate with line numbers
            doc = {"task": doc}
        else:
            check_header(doc, "bundle", path)
            _no_unknown(doc, _BUNDLE_FIELDS)
            for key, allowed in (("safety_index", _SPEC_FIELDS), ("filter", _FILTER_FIELDS),
                                 ("policy", _POLICY_FIELDS), ("sigmas", _SIGMA_FIELDS)):
                _section(doc, key, allowed)
            doc = {k: v for k, v in doc.items() if k not in ("schema_version", "kind")}
        if "task" in doc:
            source = path
            doc["task"] = _resolve_task(doc["task"], path)
        merged = _merge(merged, doc)

    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    for key in ov:
        if key not in OVERRIDE_KEYS:
            raise ValidationError(key, f"unknown override; valid: {', '.join(OVERRIDE_KEYS)}")
    if "task" in ov:
        merged["task"] = _resolve_task(ov["task"], "<cli>")
    if "task" not in merged:
        raise ValidationError("task", "no task given (use a task name, a task file or a bundle)")
    task = merged["task"]

    algo_name = ov.get("algorithm", merged.get("algorithm", "ssa"))
    try:
        algo = Algorithm(str(algo_name).lower())
    except ValueError:
        raise ValidationError("algorithm", f"unknown algorithm {algo_name!r}; valid: {', '.join(_ALGOS)}") from None
    if "param" in ov:
        param = ov["param"]
    elif "param" in merged:
        param = merged["param"]
    elif algo.value in task.hyperparameters:
        param = task.hyperparameters[algo.value]
    else:
        raise ValidationError("param", f"task {task.name!r} has no default {algo.param_name}; pass --param")
    if isinstance(param, bool) or not isinstance(param, (int, float)):
        raise ValidationError("param", "must be a number")

    dt = ov.get("dt", merged.get("dt", task.dt))
    max_steps = ov.get("max_steps", merged.get("max_steps", task.max_steps))
    if not (isinstance(dt, (int, float)) and dt > 0):
        raise ValidationError("dt", "must be a positive number")
    if not (isinstance(max_steps, int) and max_steps >= 1):
        raise ValidationError("max_steps", "must be an integer >= 1")
    task = replace(task, dt=float(dt), max_steps=int(max_steps))

    rc = robots.get(task.robot_config)
    spec_doc = dict(merged.get("safety_index") or {})
    spec_doc.setdefault("order", rc.order)
    if int(spec_doc["order"]) != rc.order:
        raise ValidationError("safety_index.order",
                              f"order {spec_doc['order']} does not match the order-{rc.order} dynamics of {rc.name}")
    try:
        spec = SafetyIndexSpec(**spec_doc)
        fdoc = dict(merged.get("filter") or {})
        if "q_weights" in fdoc:
            fdoc["q_weights"] = tuple(fdoc["q_weights"])
            if len(fdoc["q_weights"]) != rc.control_dim:
                raise ValidationError("filter.q_weights",
                                      f"{len(fdoc['q_weights'])} weights for {rc.control_dim} control channels")
        if "max_iter" in fdoc:
            fdoc["max_iter"] = int(fdoc["max_iter"])
        filt = FilterParams(algo, float(param), **fdoc)
        policy = PolicyConfig(**(merged.get("policy") or {}))
        sig = dict(merged.get("sigmas") or {})
        if "self" in sig:
            sig["self_"] = sig.pop("self")
        sigmas = Sigmas(**sig)
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError("bundle", str(exc)) from None

    if "seed" in ov or "episodes" in ov:
        start = int(ov.get("seed", 0))
        count = int(ov.get("episodes", 1))
        if count < 1:
            raise ValidationError("episodes", "must be >= 1")
        seeds = tuple(range(start, start + count))
    else:
        seeds = merged.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ValidationError("seeds", "must be a non-empty list of integers")
        seeds = tuple(seeds)
    return RunBundle(task, task.robot_config, rc.dynamics, spec, filt, policy, sigmas, float(dt), int(max_steps),
                     seeds)


def bundle_document(b: RunBundle) -> dict:
    """Canonical, fully expanded bundle document (inline task)."""
    task = task_document(b.task)
    del task["schema_version"], task["kind"]
    f = b.filter
    filt = {"activation_tolerance": f.activation_tolerance, "slack_penalty": f.slack_penalty,
            "dls_damping": f.dls_damping, "max_iter": f.max_iter, "tol": f.tol}
    if f.q_weights is not None:
        filt["q_weights"] = list(f.q_weights)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "bundle",
        "task": task,
        "algorithm": b.algorithm,
        "param": b.param,
        "safety_index": {"order": int(b.spec.order), "d_min_env": b.spec.d_min_env,
                         "d_min_self": b.spec.d_min_self, "n": b.spec.n, "k": b.spec.k},
        "filter": filt,
        "policy": {k: getattr(b.policy, k) for k in _POLICY_FIELDS},
        "sigmas": b.sigmas.as_dict(),
        "dt": b.dt,
        "max_steps": b.max_steps,
        "seeds": list(b.seeds),
    }


def builtin_bundle(task: str, algorithm: str, **overrides):
    """One of the benchmark bundles by task name, hyperparameter auto-filled."""
    return load_bundle(overrides={"task": task, "algorithm": algorithm, **overrides})
