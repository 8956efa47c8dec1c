"""Registry of the bundled robot configurations (model + dynamics order)."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .dynamics import DynamicsModel
from .errors import ValidationError
from .kinematics import RobotModel

BUILTIN = (
    "G1RightArm_D1", "G1RightArm_D2",
    "G1FixedBase_D1", "G1FixedBase_D2",
    "G1MobileBase_D1", "G1MobileBase_D2",
)

# the learned locomotion mapping is not modelled, so sport mode reuses the mobile chains
ALIASES = {"G1SportMode_D1": "G1MobileBase_D1", "G1SportMode_D2": "G1MobileBase_D2"}


@dataclass(frozen=True, eq=False)
class RobotConfig:
    name: str
    model: RobotModel
    dynamics: DynamicsModel
    control_limits: dict
    sport_mode: bool = False
    source: dict = field(default_factory=dict, repr=False)

    @property
    def order(self) -> int:
        return self.dynamics.order

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def state_dim(self) -> int:
        return self.dynamics.state_dim

    @property
    def control_dim(self) -> int:
        return self.dynamics.control_dim

    @property
    def dims(self) -> tuple:
        return self.n, self.state_dim, self.control_dim


@lru_cache(maxsize=None)
def _load_builtin(name: str) -> RobotConfig:
    from .config_io import data_path, load_robot_file

    return load_robot_file(data_path("robots", f"{name}.yaml"))


def names(include_aliases: bool = False) -> list:
    out = list(BUILTIN)
    if include_aliases:
        out += list(ALIASES) + ["Point2D_D1", "Point2D_D2"]
    return out


def get(name: str) -> RobotConfig:
    """Look up a robot config by registry key (sport-mode aliases included)."""
    if name in ALIASES:
        base = _load_builtin(ALIASES[name])
        return RobotConfig(name, base.model, base.dynamics, base.control_limits, True, base.source)
    if name in ("Point2D_D1", "Point2D_D2"):
        return point_robot_config(int(name[-1]))
    if name not in BUILTIN:
        raise ValidationError("robot", f"unknown robot config {name!r}; valid: {', '.join(names(True))}")
    return _load_builtin(name)


@lru_cache(maxsize=None)
def point_robot_config(order: int = 1, radius: float = 0.05, limit: float = 1.0) -> RobotConfig:
    """Planar point robot used by the forward-invariance checks."""
    from .kinematics import point_robot_2d

    model = point_robot_2d(radius)
    limits = {"joint": float(limit), "base_linear": float(limit), "base_yaw": float(limit)}
    return RobotConfig("Point2D_D%d" % order, model, DynamicsModel.for_model(model, order, limits), limits)
