"""Regenerate the bundled G1 robot files under src/safeguard/data/robots.

Link offsets are approximations (the real URDF is not bundled): shoulder
span ~0.30 m, upper arm 0.22 m, forearm 0.22 m, pelvis-to-shoulder stack
~0.30 m.  Frame names, sphere radii, collision flags and self-collision
pairs follow the published G1 benchmark tables.

    python tools/gen_models.py
"""
from pathlib import Path

import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "safeguard" / "data" / "robots"

HEADER = """\
# {name}: simplified Unitree G1 kinematic chain, dynamics order {order}.
# Link offsets are approximate artifact parameters, NOT measured robot data.
# Generated by tools/gen_models.py; see docs/schemas.md for the format.
"""

PELVIS_HEIGHT = 0.75

# (name, joint type, limits, home, left/right mirrored?)
ARM = [
    ("ShoulderPitch", "revolute_y", (-3.0, 2.6), 0.0, (0.0, 0.15, 0.26)),
    ("ShoulderRoll", "revolute_x", (-1.6, 2.2), 0.25, (0.0, 0.04, 0.0)),
    ("ShoulderYaw", "revolute_z", (-2.6, 2.6), 0.0, (0.0, 0.0, -0.10)),
    ("Elbow", "revolute_y", (-1.0, 2.1), 0.0, (0.0, 0.0, -0.12)),
    ("WristRoll", "revolute_x", (-1.97, 1.97), 0.0, (0.10, 0.0, 0.0)),
    ("WristPitch", "revolute_y", (-1.6, 1.6), 0.0, (0.04, 0.0, 0.0)),
    ("WristYaw", "revolute_z", (-1.6, 1.6), 0.0, (0.04, 0.0, 0.0)),
]

RADIUS = {"ShoulderRoll": 0.06}
SELF = {"ShoulderRoll", "Elbow"}

SELF_PAIRS_TABLE = [
    ("left_shoulder_roll_joint", "left_elbow_joint"),
    ("left_shoulder_roll_joint", "right_shoulder_roll_joint"),
    ("left_shoulder_roll_joint", "right_elbow_joint"),
    ("left_shoulder_roll_joint", "L_ee"),
    ("left_shoulder_roll_joint", "R_ee"),
    ("left_shoulder_roll_joint", "torso_link_3"),
    ("left_elbow_joint", "right_shoulder_roll_joint"),
    ("left_elbow_joint", "right_elbow_joint"),
    ("left_elbow_joint", "L_ee"),
    ("left_elbow_joint", "R_ee"),
    ("left_elbow_joint", "torso_link_1"),
    ("left_elbow_joint", "torso_link_2"),
    ("left_elbow_joint", "torso_link_3"),
    ("right_shoulder_roll_joint", "right_elbow_joint"),
    ("right_shoulder_roll_joint", "L_ee"),
    ("right_shoulder_roll_joint", "R_ee"),
    ("right_shoulder_roll_joint", "torso_link_3"),
    ("right_elbow_joint", "L_ee"),
    ("right_elbow_joint", "R_ee"),
    ("right_elbow_joint", "torso_link_1"),
    ("right_elbow_joint", "torso_link_2"),
    ("right_elbow_joint", "torso_link_3"),
    ("L_ee", "R_ee"),
    ("L_ee", "torso_link_1"),
    ("L_ee", "torso_link_2"),
    ("L_ee", "torso_link_3"),
    ("R_ee", "torso_link_1"),
    ("R_ee", "torso_link_2"),
    ("R_ee", "torso_link_3"),
]

TABLE_NAME = {
    "left_shoulder_roll_joint": "LeftShoulderRoll",
    "left_elbow_joint": "LeftElbow",
    "right_shoulder_roll_joint": "RightShoulderRoll",
    "right_elbow_joint": "RightElbow",
    "L_ee": "L_ee",
    "R_ee": "R_ee",
    "torso_link_1": "TorsoLink1",
    "torso_link_2": "TorsoLink2",
    "torso_link_3": "TorsoLink3",
}

LIMITS = {
    1: {"joint": 3.0, "base_linear": 1.0, "base_yaw": 1.0},
    2: {"joint": 20.0, "base_linear": 3.0, "base_yaw": 3.0},
}


def _joint(jtype, limits, home, active):
    return {"type": jtype, "limits": list(limits), "home": home} if active else None


def _rot_quat(jtype, angle):
    """Quaternion of a locked joint at ``angle`` (baked into a fixed origin)."""
    import math

    axis = {"revolute_x": (1, 0, 0), "revolute_y": (0, 1, 0), "revolute_z": (0, 0, 1)}[jtype]
    s = math.sin(angle / 2)
    return [round(math.cos(angle / 2), 15)] + [round(a * s, 15) for a in axis]


def frames_for(variant):
    mobile = variant == "mobile"
    waist_active = variant in ("fixed", "mobile")
    left_active = variant in ("fixed", "mobile")
    frames = []

    def add(name, parent, xyz, jtype=None, limits=None, home=0.0, active=False, sphere=None,
            env=False, self_=False):
        f = {"name": name, "parent": parent, "xyz": [float(v) for v in xyz]}
        if jtype is not None:
            if active:
                f["joint"] = _joint(jtype, limits, home, True)
            elif home:
                f["quat"] = _rot_quat(jtype, home)
        if sphere is not None:
            f["sphere"] = sphere
        f["env_collision"] = env
        f["self_collision"] = self_
        frames.append(f)

    root = "world"
    if mobile:
        add("LinearX", "world", (0, 0, 0), "planar_x", (-5.0, 5.0), active=True)
        add("LinearY", "LinearX", (0, 0, 0), "planar_y", (-5.0, 5.0), active=True)
        add("RotYaw", "LinearY", (0, 0, 0), "planar_yaw", (-1e3, 1e3), active=True)
        root = "RotYaw"
    add("PelvisLink1", root, (0, 0, PELVIS_HEIGHT), sphere=0.05)
    add("PelvisLink2", "PelvisLink1", (0, 0.07, -0.02), sphere=0.05)
    add("PelvisLink3", "PelvisLink1", (0, -0.07, -0.02), sphere=0.05)
    add("WaistYaw", "PelvisLink1", (0, 0, 0.05), "revolute_z", (-2.6, 2.6), active=waist_active, sphere=0.05)
    add("WaistRoll", "WaistYaw", (0, 0, 0.02), "revolute_x", (-0.52, 0.52), active=waist_active, sphere=0.05)
    add("WaistPitch", "WaistRoll", (0, 0, 0.02), "revolute_y", (-0.52, 0.52), active=waist_active, sphere=0.05)
    add("TorsoLink1", "WaistPitch", (0, 0, 0.06), sphere=0.10, env=True, self_=True)
    add("TorsoLink2", "WaistPitch", (0, 0, 0.15), sphere=0.10, env=True, self_=True)
    add("TorsoLink3", "WaistPitch", (0, 0, 0.22), sphere=0.08, env=True, self_=True)
    for side, sign in (("Left", 1.0), ("Right", -1.0)):
        active = left_active if side == "Left" else True
        parent = "WaistPitch"
        for base, jtype, (lo, hi), home, (x, y, z) in ARM:
            if sign < 0 and jtype in ("revolute_x", "revolute_z"):
                lo, hi, home = -hi, -lo, -home
            name = f"{side}{base}"
            add(name, parent, (x, sign * y, z), jtype, (lo, hi), home, active=active,
                sphere=RADIUS.get(base, 0.05), env=True, self_=base in SELF)
            parent = name
        ee = "L_ee" if side == "Left" else "R_ee"
        add(ee, parent, (0.04, 0, 0), sphere=0.05, env=True, self_=True)
    return frames


def document(config_name, variant, order):
    model = {"right_arm": "G1RightArm", "fixed": "G1FixedBase", "mobile": "G1MobileBase"}[variant]
    doc = {
        "schema_version": 1,
        "kind": "robot",
        "name": config_name,
        "model": model,
        "dynamics_order": order,
        "base_kind": "mobile" if variant == "mobile" else "fixed",
        "hands": ["R_ee"] if variant == "right_arm" else ["L_ee", "R_ee"],
        "control_limits": LIMITS[order],
        "frames": frames_for(variant),
        "self_pairs": [[TABLE_NAME[a], TABLE_NAME[b]] for a, b in SELF_PAIRS_TABLE],
    }
    if variant == "mobile":
        doc["base_frame"] = "PelvisLink1"
    return doc


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for variant, stem in (("right_arm", "G1RightArm"), ("fixed", "G1FixedBase"), ("mobile", "G1MobileBase")):
        for order in (1, 2):
            name = f"{stem}_D{order}"
            text = HEADER.format(name=name, order=order) + yaml.safe_dump(
                document(name, variant, order), sort_keys=False, default_flow_style=None, width=100)
            (OUT / f"{name}.yaml").write_text(text)
            print("wrote", OUT / f"{name}.yaml")


if __name__ == "__main__":
    main()
