import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from safeguard import robots
from safeguard.errors import DegenerateConfiguration, UnsupportedPair
from safeguard.geom import (ObstacleSet, PairCategory, Volume, all_pairs, matrix_to_quat, pair_batch,
                            quat_to_matrix, signed_distance)

from conftest import random_rotation
from oracles import SurfaceSampler, central_diff

coord = st.floats(-1.0, 1.0)
vec3 = st.tuples(coord, coord, coord).map(np.array)
radius = st.floats(0.01, 0.3)
edges = st.tuples(*[st.floats(0.02, 0.6)] * 3).map(np.array)
quat = st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda q: np.linalg.norm(q) > 0.1).map(
    lambda q: np.array(q) / np.linalg.norm(q))


def test_sphere_sphere_example(backend):
    p = signed_distance(Volume.sphere("a", [0, 0, 0], 0.05), Volume.sphere("b", [0.2, 0, 0], 0.05))
    assert p.d == pytest.approx(0.1, abs=1e-15)
    np.testing.assert_allclose(p.grad_a, [-1, 0, 0])
    np.testing.assert_allclose(p.grad_b, [1, 0, 0])


def test_sphere_box_example(backend):
    a = Volume.sphere("a", [0, 0, 0], 0.05)
    b = Volume.box("b", [0.5, 0, 0], [0.2, 0.2, 0.2])
    assert signed_distance(a, b).d == pytest.approx(0.35, abs=1e-15)
    assert SurfaceSampler().sphere_box(a.center, 0.05, b.center, b.size, b.orientation) == pytest.approx(
        0.35, abs=1e-6)


def test_coincident_spheres_raise(backend):
    with pytest.raises(DegenerateConfiguration):
        signed_distance(Volume.sphere("a", [0, 0, 0], 0.05), Volume.sphere("b", [0, 0, 0], 0.05))


def test_sphere_at_box_center_raises(backend):
    with pytest.raises(DegenerateConfiguration):
        signed_distance(Volume.sphere("a", [1, 2, 3], 0.05), Volume.box("b", [1, 2, 3], [0.2, 0.3, 0.4]))


def test_box_box_unsupported():
    with pytest.raises(UnsupportedPair):
        signed_distance(Volume.box("a", [0, 0, 0], [1, 1, 1]), Volume.box("b", [3, 0, 0], [1, 1, 1]))


@pytest.mark.parametrize("kw", [dict(radius=0.0), dict(radius=-1.0)])
def test_sphere_radius_must_be_positive(kw):
    with pytest.raises(ValueError):
        Volume.sphere("a", [0, 0, 0], kw["radius"])


def test_box_validation():
    with pytest.raises(ValueError):
        Volume.box("b", [0, 0, 0], [0.1, 0.0, 0.1])
    with pytest.raises(ValueError):
        Volume.box("b", [0, 0, 0], [0.1, 0.1, 0.1], orientation=[1, 0, 0, 1e-3])


def test_inside_box_continues_negative(backend):
    # center 0.02 inside the +x face: distance = -(0.02) - r
    p = signed_distance(Volume.sphere("a", [0.08, 0.01, 0], 0.03), Volume.box("b", [0, 0, 0], [0.2, 0.2, 0.2]))
    assert p.d == pytest.approx(-0.05, abs=1e-15)
    np.testing.assert_allclose(p.grad_a, [1, 0, 0])


def test_all_pairs_cardinality(backend):
    robot = [Volume.sphere(f"r{i}", [i, 0, 0], 0.1, frame=i) for i in range(2)]
    env = [Volume.sphere(f"o{j}", [0, 2 + j, 0], 0.1) for j in range(3)]
    pairs = all_pairs(robot, env)
    assert len(pairs) == 6
    assert all(p.category is PairCategory.ENV for p in pairs)
    assert [p.pair_id for p in pairs] == sorted(p.pair_id for p in pairs)


def test_all_pairs_on_registry_robot(backend, rng):
    cfg = robots.get("G1FixedBase_D1")
    m = cfg.model
    vols = m.volumes(m.home)
    env = [Volume.sphere(f"o{j}", [2.0 + j, 2.0, 1.0], 0.05) for j in range(10)]
    pairs = all_pairs(vols, env, m.volume_self_pairs())
    n_env = sum(p.category is PairCategory.ENV for p in pairs)
    n_self = sum(p.category is PairCategory.SELF for p in pairs)
    assert sum(v.env_collision for v in vols) == 19
    assert (n_env, n_self) == (190, 29)


def test_self_pair_requires_flag():
    a = Volume.sphere("a", [0, 0, 0], 0.1, frame=0, self_collision=True)
    b = Volume.sphere("b", [1, 0, 0], 0.1, frame=1, self_collision=False)
    with pytest.raises(ValueError):
        all_pairs([a, b], [], [(0, 1)])


def _dist_fn(kind_b, cb, size_b, q_b, ra):
    def f_a(ca):
        return signed_distance(Volume.sphere("a", ca, ra), _vol(kind_b, cb, size_b, q_b)).d
    return f_a


def _vol(kind, c, size, q=None):
    if kind == "sphere":
        return Volume.sphere("b", c, size)
    return Volume.box("b", c, size, orientation=q)


@settings(max_examples=60, deadline=None)
@given(vec3, radius, vec3, radius)
def test_sphere_sphere_properties(ca, ra, cb, rb):
    if np.linalg.norm(ca - cb) < 1e-3:
        return
    a, b = Volume.sphere("a", ca, ra), Volume.sphere("b", cb, rb)
    p, q = signed_distance(a, b), signed_distance(b, a)
    assert abs(p.d - q.d) <= 1e-12
    np.testing.assert_allclose(p.grad_a, -p.grad_b, atol=0)
    assert np.linalg.norm(p.grad_a) == pytest.approx(1.0, abs=1e-12)
    g = central_diff(lambda c: signed_distance(Volume.sphere("a", c, ra), b).d, ca)
    np.testing.assert_allclose(g, p.grad_a, atol=1e-5)


@settings(max_examples=60, deadline=None)
@given(vec3, radius, vec3, edges, quat)
def test_sphere_box_gradient_and_symmetry(ca, ra, cb, w, q):
    box = Volume.box("b", cb, w, orientation=q)
    a = Volume.sphere("a", ca, ra)
    local = quat_to_matrix(q).T @ (ca - cb)
    if np.max(np.abs(local)) < 1e-3:
        return
    gap = np.abs(local) - w / 2
    # stay away from kinks of the distance field (faces, edges and the medial axes)
    if np.min(np.abs(gap)) < 1e-3:
        return
    if np.all(gap < 0):
        depth = np.sort(-gap)
        if depth[1] - depth[0] < 1e-3:
            return
    p = signed_distance(a, box)
    assert abs(p.d - signed_distance(box, a).d) <= 1e-12
    assert np.linalg.norm(p.grad_a) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(p.grad_a, -p.grad_b)
    ga = central_diff(_dist_fn("box", cb, w, q, ra), ca)
    np.testing.assert_allclose(ga, p.grad_a, atol=1e-5)
    gb = central_diff(lambda c: signed_distance(a, Volume.box("b", c, w, orientation=q)).d, cb)
    np.testing.assert_allclose(gb, p.grad_b, atol=1e-5)


@settings(max_examples=40, deadline=None)
@given(vec3, vec3, vec3, vec3, st.booleans())
def test_distance_rate_matches_motion(ca, cb, va, vb, use_box):
    if np.linalg.norm(ca - cb) < 0.2:
        return
    h = 1e-5

    def at(t):
        a = Volume.sphere("a", ca + t * va, 0.05, linear_velocity=va)
        b = (Volume.box("b", cb + t * vb, [0.1, 0.2, 0.15], linear_velocity=vb) if use_box
             else Volume.sphere("b", cb + t * vb, 0.07, linear_velocity=vb))
        return signed_distance(a, b)

    fd = (at(h).d - at(-h).d) / (2 * h)
    assert at(0.0).d_dot == pytest.approx(fd, abs=1e-6)


@pytest.fixture(scope="module")
def sampler():
    return SurfaceSampler()


def test_sampling_oracle_sphere_box(backend, rng, sampler):
    for _ in range(100):
        c = rng.uniform(-0.6, 0.6, 3)
        r = rng.uniform(0.02, 0.1)
        q = random_rotation(rng)
        w = rng.uniform(0.05, 0.4, 3)
        box = Volume.box("b", np.zeros(3), w, orientation=q)
        d = signed_distance(Volume.sphere("a", c, r), box).d
        assert d == pytest.approx(sampler.sphere_box(c, r, np.zeros(3), w, q), abs=1e-3)


def test_sampling_oracle_sphere_sphere(backend, rng, sampler):
    for _ in range(100):
        ca, cb = rng.uniform(-0.5, 0.5, (2, 3))
        ra, rb = rng.uniform(0.02, 0.2, 2)
        d = signed_distance(Volume.sphere("a", ca, ra), Volume.sphere("b", cb, rb)).d
        assert d == pytest.approx(sampler.sphere_sphere(ca, ra, cb, rb), abs=1e-3)


def test_quaternion_round_trip(rng):
    for _ in range(20):
        q = random_rotation(rng)
        q = q if q[0] >= 0 else -q
        np.testing.assert_allclose(matrix_to_quat(quat_to_matrix(q)), q, atol=1e-12)


def test_pair_batch_matches_object_level(backend, rng):
    m = robots.get("G1FixedBase_D1").model
    theta = m.home + rng.normal(size=m.n) * 0.2
    pos = m.fk_full(theta)[0]
    vols = []
    for j in range(8):
        c = rng.uniform([-0.5, -0.6, 0.35], [0.7, 0.6, 1.55])
        v = rng.normal(size=3) * 0.1
        if j % 2:
            vols.append(Volume.box(f"o{j}", c, rng.uniform(0.05, 0.2, 3),
                                   orientation=random_rotation(rng), linear_velocity=v))
        else:
            vols.append(Volume.sphere(f"o{j}", c, rng.uniform(0.03, 0.08), linear_velocity=v))
    obs = ObstacleSet.from_volumes(vols)
    vel = rng.normal(size=pos.shape) * 0.1
    pb = pair_batch(pos, m.radii, vel, m.env_frames, obs, m.self_pair_array, need_hessian=True)
    k = 0
    for f in m.env_frames:
        a = Volume.sphere("r", pos[f], m.radii[f], linear_velocity=vel[f])
        for b in vols:
            ref = signed_distance(a, b)
            assert pb.d[k] == pytest.approx(ref.d, abs=1e-12)
            np.testing.assert_allclose(pb.grad_a[k], ref.grad_a, atol=1e-12)
            assert pb.d_dot[k] == pytest.approx(ref.d_dot, abs=1e-12)
            np.testing.assert_allclose(pb.hess[k], ref.hess, atol=1e-9)
            k += 1
    assert pb.n_env == k and len(pb) == k + len(m.self_pair_array)
    # Hessian oracle: finite differences of the gradient
    for k in (0, 1, 3):
        f = pb.frame_a[k]
        b = vols[pb.obstacle[k]]
        H = central_diff(lambda c: signed_distance(Volume.sphere("r", c, m.radii[f]), b).grad_a, pos[f])
        np.testing.assert_allclose(H, pb.hess[k], atol=1e-5)


def test_obstacle_set_volume_round_trip(rng):
    vols = [Volume.sphere("obs000", [0, 0, 1], 0.05), Volume.box("obs001", [1, 0, 0], [0.1, 0.2, 0.3],
                                                                  orientation=random_rotation(rng))]
    back = ObstacleSet.from_volumes(vols).volumes()
    assert back[0].size == 0.05
    np.testing.assert_allclose(back[1].size, [0.1, 0.2, 0.3])
    np.testing.assert_allclose(back[1].rotation, vols[1].rotation, atol=1e-12)
