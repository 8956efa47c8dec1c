"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and repeated in the pytest terminal
summary (see ``conftest.pytest_terminal_summary``).
"""
import json
import math
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from safeguard import bench, cli, robots
from safeguard.bench import DEFAULT_SIGMAS, score, upper_right_hull
from safeguard.env_task import BENCHMARK_TASKS, get_task
from safeguard.geom import Volume, signed_distance
from safeguard.kinematics import jacobian, jacobian_dot_qdot
from safeguard.safe_control import (Algorithm, FilterParams, QPProblem, Status, apply_filter, cbf_filter,
                                    sma_filter, solve_qp)
from safeguard.safety_index import ConstraintBatch, SafetyIndexSpec
from safeguard.sim import EpisodeJob, activation_band, run_batch

from conftest import random_rotation
from oracles import SurfaceSampler, central_diff, grid_qp_2d

RESULTS = []

ROBOT_DIMS = {
    "G1RightArm_D1": (7, 7, 7), "G1RightArm_D2": (7, 14, 7),
    "G1FixedBase_D1": (17, 17, 17), "G1FixedBase_D2": (17, 34, 17),
    "G1MobileBase_D1": (20, 20, 20), "G1MobileBase_D2": (20, 40, 20),
}


@contextmanager
def criterion(number, title, budget=None):
    """Record PASS/FAIL for one criterion; ``budget`` is a wall-clock limit in seconds."""
    info = {}
    t0 = time.perf_counter()
    status = "FAIL"
    try:
        yield info
        elapsed = time.perf_counter() - t0
        info.setdefault("time", f"{elapsed:.1f} s")
        if budget is not None:
            assert elapsed < budget, f"took {elapsed:.1f} s, budget {budget} s"
        status = "PASS"
    except AssertionError as exc:
        info["error"] = str(exc).splitlines()[0] if str(exc) else "assertion failed"
        raise
    finally:
        detail = ", ".join(f"{k}={v}" for k, v in info.items())
        line = f"[{status}] criterion {number:2d} {title}: {detail}"
        RESULTS.append((number, line))
        print(line)


def toy(phi, Lg, Lf=None):
    Lg = np.atleast_2d(np.asarray(Lg, float))
    M = len(Lg)
    Lf = np.zeros(M) if Lf is None else np.asarray(Lf, float)
    return ConstraintBatch(np.asarray(phi, float).reshape(M), Lf, Lg, np.zeros((M, 2, 3)), np.full((M, 2), -1),
                           np.zeros(M, np.int8), np.full(M, np.nan), None, None)


# ---------------------------------------------------------------------------


def test_01_score_function():
    with criterion(1, "score function", budget=1.0) as info:
        assert score(0.0, 0.002) == 1.0
        assert score(0.0, 0.05) == 1.0
        err = abs(score(0.01, 0.002) - math.exp(-0.05))
        info["err"] = f"{err:.1e}"
        assert err <= 1e-12
        assert (DEFAULT_SIGMAS.arm, DEFAULT_SIGMAS.base, DEFAULT_SIGMAS.self_, DEFAULT_SIGMAS.env) == (
            0.002, 0.05, 0.0002, 0.0002)


def test_02_geometry_oracle():
    rng = np.random.default_rng(2)
    sampler = SurfaceSampler(10 ** 6)
    with criterion(2, "geometry oracle", budget=60.0) as info:
        d_err = g_err = 0.0
        for k in range(1000):
            ca = rng.uniform(-0.6, 0.6, 3)
            ra = rng.uniform(0.02, 0.15)
            a = Volume.sphere("a", ca, ra)
            if k % 2 == 0:
                cb, rb = rng.uniform(-0.6, 0.6, 3), rng.uniform(0.02, 0.15)
                b = Volume.sphere("b", cb, rb)
                ref = sampler.sphere_sphere(ca, ra, cb, rb)
                make_b = lambda c: Volume.sphere("b", c, rb)
            else:
                cb, w, q = rng.uniform(-0.3, 0.3, 3), rng.uniform(0.05, 0.5, 3), random_rotation(rng)
                b = Volume.box("b", cb, w, orientation=q)
                ref = sampler.sphere_box(ca, ra, cb, w, q)
                make_b = lambda c: Volume.box("b", c, w, orientation=q)
            p = signed_distance(a, b)
            d_err = max(d_err, abs(p.d - ref))
            ga = central_diff(lambda c: signed_distance(Volume.sphere("a", c, ra), b).d, ca)
            gb = central_diff(lambda c: signed_distance(a, make_b(c)).d, cb)
            g_err = max(g_err, np.abs(ga - p.grad_a).max(), np.abs(gb - p.grad_b).max())
        info["pairs"] = 1000
        info["max |d - oracle|"] = f"{d_err:.2e}"
        info["max grad err"] = f"{g_err:.2e}"
        assert d_err <= 1e-3
        assert g_err <= 1e-5


def positions(model, theta):
    return model.fk_full(np.asarray(theta, float))[0]


def test_03_kinematics_oracle():
    rng = np.random.default_rng(3)
    h = 1e-4
    with criterion(3, "kinematics oracle", budget=30.0) as info:
        j_err = jd_err = 0.0
        for name, dims in ROBOT_DIMS.items():
            rc = robots.get(name)
            m = rc.model
            assert rc.dims == dims, name
            assert (m.n, rc.dynamics.state_dim, rc.dynamics.control_dim) == dims, name
            for _ in range(100):
                theta = m.home + rng.normal(size=m.n) * 0.5
                qd = rng.normal(size=m.n)
                J = jacobian(m, theta)
                assert J.shape == (3 * m.m, dims[0])
                fd = central_diff(lambda t: positions(m, t).reshape(-1), theta)
                j_err = max(j_err, np.abs(J - fd).max())
                # hand acceleration along theta + t qd, by second differences of FK
                acc = (positions(m, theta + h * qd) - 2 * positions(m, theta) + positions(m, theta - h * qd)) / h ** 2
                jd_err = max(jd_err, np.abs(jacobian_dot_qdot(m, theta, qd) - acc.reshape(-1)).max())
        info["models"] = len(ROBOT_DIMS)
        info["max J err"] = f"{j_err:.2e}"
        info["max Jdot qdot err"] = f"{jd_err:.2e}"
        assert j_err <= 1e-5
        assert jd_err <= 1e-5


def test_04_qp_correctness():
    rng = np.random.default_rng(4)
    with criterion(4, "QP correctness", budget=60.0) as info:
        kkt = proj = grid = 0.0
        counts = {"general": 0, "single": 0, "two": 0}
        for k in range(1000):
            kind = ("general", "single", "two")[k % 3]
            if kind == "general":
                n, m = int(rng.integers(1, 9)), int(rng.integers(1, 9))
                A = rng.normal(size=(m, n))
                b = A @ rng.uniform(-1, 1, n) + rng.exponential(0.3, m)
                box = rng.random() < 0.5
                p = QPProblem(rng.normal(size=n) * 2, A, b, rng.uniform(0.2, 3, n),
                              -np.full(n, 1.5) if box else None, np.full(n, 1.5) if box else None)
                r = solve_qp(p)
            elif kind == "single":
                n = int(rng.integers(1, 8))
                a, bb, Q, u_ref = rng.normal(size=n), rng.normal(), rng.uniform(0.2, 3, n), rng.normal(size=n)
                r = solve_qp(QPProblem(u_ref, a[None], [bb], Q))
                qa = a / Q
                expect = u_ref - max(0.0, a @ u_ref - bb) * qa / (a @ qa)
                proj = max(proj, np.abs(r.u_safe - expect).max())
            else:
                A = rng.normal(size=(2, 2))
                b = A @ rng.uniform(-1, 1, 2) + rng.exponential(0.3, 2)
                u_ref = rng.uniform(-1.8, 1.8, 2)
                r = solve_qp(QPProblem(u_ref, A, b, None, -np.full(2, 2.0), np.full(2, 2.0)))
                grid = max(grid, np.abs(r.u_safe - grid_qp_2d(u_ref, A, b)).max())
            counts[kind] += 1
            assert r.status is Status.OPTIMAL
            kkt = max(kkt, r.kkt_residual)
        info.update(counts)
        info["max KKT"] = f"{kkt:.1e}"
        info["max projection err"] = f"{proj:.1e}"
        info["max grid err"] = f"{grid:.1e}"
        assert kkt <= 1e-6
        assert proj <= 1e-6
        assert grid <= 2e-3


def test_05_filter_contracts():
    rng = np.random.default_rng(5)
    with criterion(5, "filter contracts", budget=10.0) as info:
        eps = FilterParams(Algorithm.SSA, 0.1).activation_tolerance
        for algo, param in (("ssa", 0.1), ("sss", 10.0), ("sma", 6.0)):
            for _ in range(200):
                nu, M = int(rng.integers(1, 8)), int(rng.integers(1, 10))
                u_ref = rng.normal(size=nu)
                b = toy(-rng.uniform(2 * eps, 1.0, M), rng.normal(size=(M, nu)), rng.normal(size=M))
                r = apply_filter(u_ref, b, FilterParams(Algorithm(algo), param))
                assert r.u_safe.tobytes() == u_ref.tobytes(), algo
        worst = -np.inf
        for _ in range(300):
            nu, M = int(rng.integers(1, 6)), int(rng.integers(1, 8))
            b = toy(rng.normal(size=M) * 0.1, rng.normal(size=(M, nu)), rng.normal(size=M) * 0.1)
            lam = rng.uniform(0.1, 20)
            r = cbf_filter(rng.normal(size=nu), b, FilterParams(Algorithm.CBF, lam))
            if r.status is Status.OPTIMAL:
                worst = max(worst, float(np.max(b.Lf + b.Lg @ r.u_safe + lam * b.phi)))
        info["max CBF row residual"] = f"{worst:.1e}"
        assert worst <= 1e-6
        d_min, x, dt = 0.1, 0.09, 0.01
        for c in (1.0, 6.0, 40.0):
            r = sma_filter(np.array([-0.5]), toy([d_min - x], [[-1.0]]), FilterParams(Algorithm.SMA, c))
            assert d_min - (x + dt * r.u_safe[0]) < d_min - x, c
        info["SMA descent c"] = "1,6,40"


def _invariance_jobs(eps_for):
    jobs = []
    for task in ("Point2D_D1_AG_SO_v0", "G1RightArm_D1_AG_SO_v0"):
        cfg = get_task(task)
        rc = robots.get(cfg.robot_config)
        opts = () if eps_for is None else (("activation_tolerance", eps_for(rc, cfg)),)
        jobs += [EpisodeJob(cfg, Algorithm.SSA, 0.2, s, SafetyIndexSpec(1), filter_options=opts) for s in range(50)]
    return jobs


def _worst_margin(logs, spec=SafetyIndexSpec(1)):
    out = {}
    for log in logs:
        env = min((r.min_env_d - spec.d_min_env for r in log.records if r.min_env_d is not None), default=np.inf)
        slf = min((r.min_self_d - spec.d_min_self for r in log.records if r.min_self_d is not None), default=np.inf)
        out[log.task] = min(out.get(log.task, np.inf), env, slf)
    return out


def test_06_forward_invariance():
    with criterion(6, "forward invariance (SSA eta=0.2)", budget=120.0) as info:
        band = lambda rc, cfg: activation_band(rc.model, rc.dynamics, cfg.dt)
        t0 = time.perf_counter()
        logs = run_batch(_invariance_jobs(band))
        info["band run"] = f"{time.perf_counter() - t0:.1f} s"
        worst = _worst_margin(logs)
        for task, v in worst.items():
            info[f"worst margin {task.split('_')[0]}"] = f"{v:+.4f} m"
        steps = max(len(l.records) for l in logs)
        assert steps <= 1000 and all(l.termination.value != "Error" for l in logs)
        assert all(v >= -1e-3 for v in worst.values()), worst
    # the library default activation tolerance, for information only
    default = _worst_margin(run_batch(_invariance_jobs(None)))
    print("  default eps_act=1e-6 (reported, not asserted): "
          + ", ".join(f"{t}: {v:+.4f} m" for t, v in default.items()))


def _matrix_run(out):
    code = cli.main(["matrix", "--episodes", "10", "--seed", "0", "--out", str(out), "--no-timings",
                     "--format", "json"])
    assert code == 0
    return (out / "matrix.json").read_bytes()


@pytest.mark.slow
def test_07_benchmark_protocol(tmp_path):
    with criterion(7, "benchmark protocol end-to-end", budget=600.0) as info:
        first = _matrix_run(tmp_path / "a")
        second = _matrix_run(tmp_path / "b")
        info["bitwise equal"] = first == second
        assert first == second
        doc = json.loads(first)
        eps = doc["episodes"]
        assert len(eps) == 8 * 5 * 10
        assert {e["task"] for e in eps} == set(BENCHMARK_TASKS)
        assert all(e["steps"] <= 200 for e in eps)
        for e in eps:
            hyper = get_task(e["task"]).hyperparameters
            assert e["param"] == hyper[e["algorithm"]]
            assert all(e[k] is None or 0.0 <= e[k] <= 1.0 for k in ("J_arm", "J_base", "M_self", "M_env"))
        assert len(doc["success"]) == 8
        rates = []
        for m in doc["success"]:
            algos = m["algorithms"]
            assert algos == list(bench.ALGORITHM_ORDER)
            wins = {a: set(m["successes"][a]) for a in algos}
            for i, a in enumerate(algos):
                na = len(wins[a])
                for j, b in enumerate(algos):
                    assert m["joint"][i][j] == len(wins[a] & wins[b])
                    v = m["conditional"][i][j]
                    if na == 0:
                        assert v is None
                        continue
                    # the emitted float is the nearest double to the exact fraction
                    assert Fraction(v).limit_denominator(na) * na == m["joint"][i][j]
                    assert v == float(Fraction(m["joint"][i][j], na))
                if na:
                    assert m["conditional"][i][i] == 1.0
            rates.append(f"{m['task']}: " + " ".join(f"{a}={m['marginal'][a]:.1f}" for a in algos))
        _, matrices, _ = bench.load_results(tmp_path / "a" / "matrix.json")
        for mat in matrices:
            for i, a in enumerate(mat.algorithms):
                for j, b in enumerate(mat.algorithms):
                    v = mat.conditional[i][j]
                    if v is not None:
                        assert isinstance(v, Fraction) and v * mat.count(a) == mat.joint(a, b)
        info["episodes"] = len(eps)
    for r in rates:
        print("  " + r)


@pytest.mark.slow
def test_08_qualitative_ordering():
    task = "G1FixedBase_D1_AG_SO_v1"
    cfg = get_task(task)
    with criterion(8, f"PFM success <= SSA/SSS/CBF on {task}") as info:
        jobs = [EpisodeJob(cfg, Algorithm(a), cfg.hyperparameters[a], s)
                for a in ("ssa", "sss", "cbf", "pfm") for s in range(50)]
        m = bench.success_stats(run_batch(jobs), task=task)
        rates = {a: m.marginal(a) for a in m.algorithms}
        info.update({a: f"{v:.2f}" for a, v in rates.items()})
        for a in ("ssa", "sss", "cbf"):
            assert rates["pfm"] <= rates[a], rates


def test_09_loop_time():
    task = "G1MobileBase_D1_WG_SO_v1"
    cfg = get_task(task)
    assert cfg.num_obstacles == 50 and cfg.robot_config == "G1MobileBase_D1"
    with criterion(9, f"control loop time on {task}") as info:
        jobs = [EpisodeJob(cfg, Algorithm(a), cfg.hyperparameters[a], s) for a in ("ssa",) for s in range(5)]
        logs = run_batch(jobs, workers=1)
        times = np.concatenate([[r.loop_time for r in l.records] for l in logs])
        mean = float(times.mean())
        info["steps"] = len(times)
        info["mean loop"] = f"{mean * 1e3:.3f} ms"
        info["p95"] = f"{np.percentile(times, 95) * 1e3:.3f} ms"
        assert mean <= 2e-3


def test_10_sweep_machinery():
    with criterion(10, "sweep machinery", budget=1.0) as info:
        assert upper_right_hull([(0.2, 0.9), (0.5, 0.9), (0.5, 0.5)]) == [(0.2, 0.9), (0.5, 0.9)]
        assert upper_right_hull([(0.4, 0.6)]) == [(0.4, 0.6)]
        cloud = [(0.1, 0.95), (0.3, 0.9), (0.35, 0.7), (0.6, 0.8), (0.7, 0.5), (0.9, 0.3), (0.5, 0.4), (0.9, 0.1)]
        # by hand: the chain (0.1,.95) -> (0.3,.9) -> (0.6,.8) -> (0.9,.3); (0.7,.5) lies under the last edge
        assert upper_right_hull(cloud) == [(0.1, 0.95), (0.3, 0.9), (0.6, 0.8), (0.9, 0.3)]
        assert bench.pareto_front(cloud) == [(0.1, 0.95), (0.3, 0.9), (0.6, 0.8), (0.7, 0.5), (0.9, 0.3)]
        grid = bench.default_grid()
        quoted = ([round(0.1 * i, 10) for i in range(10)] + list(map(float, range(1, 10)))
                  + list(map(float, range(10, 100, 10))) + list(map(float, range(100, 1000, 10))))
        assert grid == quoted and len(grid) == 10 + 9 + 9 + 90
        info["grid size"] = len(grid)
