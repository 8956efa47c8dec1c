from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safeguard import robots
from safeguard.env_task import (BENCHMARK_TASKS, BUILTIN_TASKS, Environment, GoalKind, Motion, TaskConfig,
                                generate_task, get_task, step_goals, step_obstacles, streams)
from safeguard.errors import ValidationError
from safeguard.geom import PairCategory, all_pairs

# Task configuration table: obstacles, obstacle velocity, arm goal velocity, base goal velocity
TABLE = {
    "G1FixedBase_D1_AG_SO_v0": (10, 0.0, 0.0, None),
    "G1FixedBase_D1_AG_SO_v1": (50, 0.0, 0.0, None),
    "G1FixedBase_D1_AG_DO_v0": (10, 0.005, 0.0, None),
    "G1FixedBase_D1_AG_DO_v1": (50, 0.005, 0.0, None),
    "G1MobileBase_D1_WG_SO_v0": (10, 0.0, 0.0, 0.0),
    "G1MobileBase_D1_WG_SO_v1": (50, 0.0, 0.0, 0.0),
    "G1MobileBase_D1_WG_DO_v0": (10, 0.005, 0.0, 0.0),
    "G1MobileBase_D1_WG_DO_v1": (50, 0.005, 0.0, 0.0),
}


def gen(name, seed):
    cfg = get_task(name)
    return cfg, robots.get(cfg.robot_config), generate_task(cfg, robots.get(cfg.robot_config).model, seed)


def test_benchmark_tasks_match_table():
    assert tuple(TABLE) == BENCHMARK_TASKS
    for name, (n, v, ag, bg) in TABLE.items():
        cfg = get_task(name)
        assert (cfg.num_obstacles, cfg.obstacle_velocity, cfg.arm_goal_velocity, cfg.base_goal_velocity) == (n, v, ag, bg)
        assert cfg.goal_motion is Motion.STATIC and cfg.max_steps == 200
        assert cfg.robot_config == name.split("_AG")[0].split("_WG")[0]


@pytest.mark.parametrize("name", list(TABLE))
def test_generated_counts_goals_and_feasible_start(name):
    for seed in range(2):
        cfg, rc, env = gen(name, seed)
        m = rc.model
        assert len(env.obstacles) == TABLE[name][0]
        assert env.goals.arm_goals.shape == (len(m.hand_frames), 3)
        assert (env.goals.base_goal is not None) == (cfg.goal_kind is GoalKind.WG)
        # clearance computed at the object level, independently of the sampler
        pairs = all_pairs(m.volumes(env.x0[:m.n]), env.obstacles.volumes())
        assert min(p.d for p in pairs if p.category is PairCategory.ENV) > 0.05 + 0.02
        np.testing.assert_array_equal(env.x0, m.home)


def test_same_seed_same_environment():
    _, _, a = gen("G1MobileBase_D1_WG_DO_v1", 3)
    _, _, b = gen("G1MobileBase_D1_WG_DO_v1", 3)
    for f in ("centers", "radii", "half", "rotations", "is_box"):
        assert getattr(a.obstacles, f).tobytes() == getattr(b.obstacles, f).tobytes()
    assert a.goals.arm_goals.tobytes() == b.goals.arm_goals.tobytes()
    assert a.goals.base_goal.tobytes() == b.goals.base_goal.tobytes()
    _, _, c = gen("G1MobileBase_D1_WG_DO_v1", 4)
    assert a.obstacles.centers.tobytes() != c.obstacles.centers.tobytes()


def test_static_obstacles_do_not_move():
    cfg, _, env = gen("G1FixedBase_D1_AG_SO_v0", 0)
    rng = streams(0)[1]
    nxt = step_obstacles(env, cfg, rng)
    np.testing.assert_array_equal(nxt.obstacles.centers, env.obstacles.centers)
    assert not nxt.obstacles.velocities.any() and nxt.step_count == 1


def test_brownian_random_walk_spread():
    cfg = TaskConfig("walk", "G1FixedBase_D1", 4, obstacle_velocity=0.005,
                     workspace=((-50, -50, -50), (50, 50, 50)))
    disp = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        from safeguard.geom import ObstacleSet, Volume
        obs = ObstacleSet.from_volumes([Volume.sphere(f"o{i}", [0, 0, 0], 0.05) for i in range(4)])
        env = Environment(obs, None, seed)
        for _ in range(1000):
            env = step_obstacles(env, cfg, rng)
        disp.append(env.obstacles.centers)
    std = np.std(np.concatenate(disp), axis=0)
    expect = 0.005 * np.sqrt(1000)
    assert np.all(np.abs(std - expect) < 0.2 * expect)


def test_boundary_reflection():
    from safeguard.geom import ObstacleSet, Volume

    cfg = TaskConfig("wall", "G1FixedBase_D1", 1, obstacle_velocity=0.5, workspace=((0, 0, 0), (1, 1, 1)))
    obs = ObstacleSet.from_volumes([Volume.sphere("o", [0.999, 0.5, 0.5], 0.05)])
    env = Environment(obs, None, 0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        env = step_obstacles(env, cfg, rng)
        c = env.obstacles.centers[0]
        assert np.all(c >= 0) and np.all(c <= 1)


def test_circular_goal_is_periodic():
    cfg = replace(get_task("G1FixedBase_D1_AG_SO_v0"), goal_motion="circular", goal_motion_rate=2 * np.pi)
    _, rc, _ = gen("G1FixedBase_D1_AG_SO_v0", 0)
    env = generate_task(cfg, rc.model, 0)
    g = env.goals
    steps = int(round(2 * np.pi / cfg.goal_motion_rate / cfg.dt))
    for t in range(steps):
        g = step_goals(g, cfg, t)
    np.testing.assert_allclose(g.arm_goals, env.goals.arm_goals, atol=1e-9)
    assert np.abs(step_goals(env.goals, cfg, 10).arm_goals - env.goals.arm_goals).max() > 0.01


def test_static_goals_are_identity():
    cfg, _, env = gen("G1MobileBase_D1_WG_SO_v0", 1)
    assert step_goals(env.goals, cfg, 5) is env.goals


def test_unknown_task_lists_valid_names():
    with pytest.raises(ValidationError, match="G1FixedBase_D1_AG_SO_v0"):
        get_task("nope")


@pytest.mark.parametrize("field,value", [("num_obstacles", -1), ("max_steps", 0), ("dt", 0.0),
                                         ("obstacle_radius_range", (0.0, 0.1)), ("box_fraction", 2.0),
                                         ("obstacle_placement", "grid")])
def test_task_validation(field, value):
    with pytest.raises(ValidationError):
        replace(get_task("G1FixedBase_D1_AG_SO_v0"), **{field: value})


def test_wg_needs_base_goal_velocity():
    with pytest.raises(ValidationError):
        TaskConfig("t", "G1MobileBase_D1", 1, goal_kind="WG")


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from(["Point2D_D1_AG_SO_v0", "G1RightArm_D1_AG_SO_v0"]))
def test_path_placement_generates_feasible_scenes(seed, name):
    cfg, rc, env = gen(name, seed)
    m = rc.model
    pairs = all_pairs(m.volumes(env.x0), env.obstacles.volumes())
    assert len(env.obstacles) == 10
    assert min(p.d for p in pairs) > 0.07


def test_mixed_boxes(rng):
    cfg = replace(get_task("G1FixedBase_D1_AG_SO_v0"), box_fraction=0.5)
    env = generate_task(cfg, robots.get(cfg.robot_config).model, 2)
    assert env.obstacles.is_box.any() and (~env.obstacles.is_box).any()


def test_extra_tasks_registered():
    assert set(BUILTIN_TASKS) - set(BENCHMARK_TASKS) == {"Point2D_D1_AG_SO_v0", "G1RightArm_D1_AG_SO_v0"}
