"""Metrics, success statistics, parameter sweeps and result emission.

Scores map a distance error to ``exp(-dd^2 / sigma)``.  Efficiency averages
the arm and base tracking scores, safety averages the self and environment
margin scores; a sweep over the filter parameter traces the trade-off
between the two.
"""
from __future__ import annotations

import csv
import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyLog, MismatchedSeedSets
from .safety_index import SafetyIndexSpec
from .sim import EpisodeLog, Termination

RESULTS_SCHEMA = 1
ALGORITHM_ORDER = ("ssa", "cbf", "sss", "pfm", "sma")


@dataclass(frozen=True)
class Sigmas:
    arm: float = 0.002
    base: float = 0.05
    self_: float = 0.0002
    env: float = 0.0002

    def __post_init__(self):
        for name in ("arm", "base", "self_", "env"):
            if not getattr(self, name) > 0:
                raise ValueError(f"sigma {name.rstrip('_')} must be positive")

    def as_dict(self) -> dict:
        return {"arm": self.arm, "base": self.base, "self": self.self_, "env": self.env}


DEFAULT_SIGMAS = Sigmas()


def score(dd, sigma: float):
    """Gaussian score ``exp(-dd^2 / sigma)``; works on scalars and arrays."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    out = np.exp(-np.square(dd) / sigma)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# per-episode metrics


@dataclass(frozen=True)
class MetricReport:
    J_arm: Optional[float]
    J_base: Optional[float]  # None for arm-goal-only tasks
    M_self: float
    M_env: float
    sigmas: Sigmas
    T: int

    @property
    def efficiency(self) -> float:
        parts = [v for v in (self.J_arm, self.J_base) if v is not None]
        return float(np.mean(parts)) if parts else float("nan")

    @property
    def safety(self) -> float:
        return 0.5 * (self.M_self + self.M_env)


def _violation(values, d_min: float) -> np.ndarray:
    # missing distances (no pairs of that kind) never violate
    d = np.array([np.inf if v is None else v for v in values], float)
    return np.minimum(0.0, d - d_min)


def compute_metrics(log: EpisodeLog, spec: SafetyIndexSpec = SafetyIndexSpec(),
                    sigmas: Sigmas = DEFAULT_SIGMAS) -> MetricReport:
    recs = log.records
    if not recs:
        raise EmptyLog(f"episode {log.task}/{log.algorithm}/seed {log.seed} has no steps")
    J_arm = None
    if recs[0].arm_goal_dists:
        J_arm = float(np.mean([np.mean(score(np.asarray(r.arm_goal_dists), sigmas.arm)) for r in recs]))
    J_base = None
    if recs[0].base_goal_dist is not None:
        J_base = float(np.mean(score(np.array([r.base_goal_dist for r in recs]), sigmas.base)))
    M_env = float(np.mean(score(_violation([r.min_env_d for r in recs], spec.d_min_env), sigmas.env)))
    M_self = float(np.mean(score(_violation([r.min_self_d for r in recs], spec.d_min_self), sigmas.self_)))
    return MetricReport(J_arm, J_base, M_self, M_env, sigmas, len(recs))


@dataclass(frozen=True)
class EpisodeSummary:
    """One row of the metric table."""
    task: str
    algorithm: str
    param: float
    seed: int
    termination: str
    steps: int
    metrics: Optional[MetricReport]
    loop_time: float = 0.0  # mean seconds per step
    filter_time: float = 0.0
    diagnostic: str = ""

    @property
    def success(self) -> bool:
        return self.termination == Termination.GOAL_REACHED.value


def summarize(log: EpisodeLog, spec: SafetyIndexSpec = SafetyIndexSpec(),
              sigmas: Sigmas = DEFAULT_SIGMAS) -> EpisodeSummary:
    metrics = compute_metrics(log, spec, sigmas) if log.records else None
    lt = float(np.mean([r.loop_time for r in log.records])) if log.records else 0.0
    ft = float(np.mean([r.filter_time for r in log.records])) if log.records else 0.0
    return EpisodeSummary(log.task, log.algorithm, float(log.param), int(log.seed), log.termination.value,
                          len(log.records), metrics, lt, ft, log.diagnostic)


# ---------------------------------------------------------------------------
# success statistics


@dataclass(frozen=True)
class SuccessMatrix:
    algorithms: tuple
    success_sets: dict  # algorithm -> frozenset of seeds
    seeds: frozenset
    conditional: tuple  # rows A, columns B: Fraction P(B|A), None when #A = 0
    task: str = ""

    def count(self, a: str) -> int:
        return len(self.success_sets[a])

    def joint(self, a: str, b: str) -> int:
        return len(self.success_sets[a] & self.success_sets[b])

    def marginal(self, a: str) -> float:
        return len(self.success_sets[a]) / len(self.seeds) if self.seeds else float("nan")

    def as_array(self) -> np.ndarray:
        return np.array([[np.nan if v is None else float(v) for v in row] for row in self.conditional])


def _success(log: EpisodeLog) -> bool:
    # a collision ends the episode, so GoalReached already implies zero collision steps
    return log.termination is Termination.GOAL_REACHED


def success_stats(logs, task: str = "") -> SuccessMatrix:
    """Conditional success matrix from logs grouped by algorithm.

    ``logs`` is a mapping algorithm -> logs, or a flat iterable of logs that
    is grouped on ``log.algorithm``.
    """
    if isinstance(logs, Mapping):
        groups = {str(k): list(v) for k, v in logs.items()}
    else:
        groups = defaultdict(list)
        for log in logs:
            groups[log.algorithm].append(log)
    algos = sorted(groups, key=lambda a: (ALGORITHM_ORDER.index(a) if a in ALGORITHM_ORDER else 99, a))
    seed_sets = {a: frozenset(int(l.seed) for l in groups[a]) for a in algos}
    seeds = next(iter(seed_sets.values()), frozenset())
    for a in algos:
        if seed_sets[a] != seeds:
            raise MismatchedSeedSets(
                f"algorithm {a!r} ran seeds {sorted(seed_sets[a])}, expected {sorted(seeds)}")
    wins = {a: frozenset(int(l.seed) for l in groups[a] if _success(l)) for a in algos}
    rows = []
    for a in algos:
        n_a = len(wins[a])
        rows.append(tuple(None if n_a == 0 else Fraction(len(wins[a] & wins[b]), n_a) for b in algos))
    return SuccessMatrix(tuple(algos), wins, seeds, tuple(rows), task)


# ---------------------------------------------------------------------------
# parameter sweeps and trade-off hulls


def default_grid() -> list:
    """0..0.9 by 0.1, 1..9 by 1, 10..90 by 10, 100..990 by 10 (118 values)."""
    grid = [round(0.1 * i, 10) for i in range(10)]
    grid += [float(i) for i in range(1, 10)]
    grid += [float(i) for i in range(10, 100, 10)]
    grid += [float(i) for i in range(100, 1000, 10)]
    return grid


@dataclass(frozen=True)
class TradeoffPoint:
    param: float
    efficiency: float
    safety: float
    J_arm: Optional[float] = None
    J_base: Optional[float] = None
    M_self: Optional[float] = None
    M_env: Optional[float] = None
    episodes: int = 0
    errors: int = 0
    diagnostic: str = ""

    @property
    def flagged(self) -> bool:
        return self.errors > 0

    @property
    def valid(self) -> bool:
        return math.isfinite(self.efficiency) and math.isfinite(self.safety)


def _cross(o, a, b):
    # exact orientation test; float products underflow on tiny coordinate gaps
    o, a, b = ([Fraction(v) for v in p] for p in (o, a, b))
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def upper_right_hull(points) -> list:
    """Vertices of the convex hull chain from the top-most to the right-most point.

    ``points`` holds (efficiency, safety) pairs or TradeoffPoints; the result
    keeps the input objects, ordered by increasing efficiency.
    """
    items = [p for p in points if _xy(p) is not None]
    if not items:
        return []
    # upper hull by Andrew's monotone chain, collinear points dropped
    items = sorted(items, key=lambda p: _xy(p))
    chain = []
    for p in items:
        while len(chain) >= 2 and _cross(_xy(chain[-2]), _xy(chain[-1]), _xy(p)) >= 0:
            chain.pop()
        if chain and _xy(chain[-1]) == _xy(p):
            continue
        chain.append(p)
    top = max(_xy(p)[1] for p in chain)
    start = next(i for i, p in enumerate(chain) if _xy(p)[1] == top)
    return chain[start:]


def pareto_front(points) -> list:
    """Points not dominated in (efficiency, safety), ordered by efficiency."""
    items = [p for p in points if _xy(p) is not None]
    out = []
    for p in items:
        x, y = _xy(p)
        dominated = any(
            qx >= x and qy >= y and (qx > x or qy > y) for qx, qy in (_xy(q) for q in items))
        if not dominated and all(_xy(q) != (x, y) for q in out):
            out.append(p)
    return sorted(out, key=lambda p: _xy(p))


def _xy(p):
    x, y = (p.efficiency, p.safety) if isinstance(p, TradeoffPoint) else (p[0], p[1])
    x, y = float(x), float(y)
    if not (math.isfinite(x) and math.isfinite(y)):
        return None
    return x, y


@dataclass(frozen=True)
class SweepResult:
    task: str
    algorithm: str
    points: tuple
    hull: tuple
    pareto: tuple


def point_from_logs(param: float, logs, spec: SafetyIndexSpec = SafetyIndexSpec(),
                    sigmas: Sigmas = DEFAULT_SIGMAS) -> TradeoffPoint:
    """Average metrics over the episodes of one grid value; failed episodes flag the point."""
    logs = list(logs)
    bad = [l for l in logs if l.termination is Termination.ERROR or not l.records]
    good = [compute_metrics(l, spec, sigmas) for l in logs if l not in bad]
    diag = "; ".join(f"seed {l.seed}: {l.diagnostic or 'no steps'}" for l in bad)
    if not good:
        nan = float("nan")
        return TradeoffPoint(float(param), nan, nan, episodes=len(logs), errors=len(bad), diagnostic=diag)

    def avg(name):
        vals = [getattr(m, name) for m in good]
        return None if vals[0] is None else float(np.mean(vals))

    J_arm, J_base, M_self, M_env = avg("J_arm"), avg("J_base"), avg("M_self"), avg("M_env")
    eff = float(np.mean([v for v in (J_arm, J_base) if v is not None]))
    return TradeoffPoint(float(param), eff, 0.5 * (M_self + M_env), J_arm, J_base, M_self, M_env,
                         len(logs), len(bad), diag)


def parameter_sweep(task, algorithm, grid: Optional[Sequence[float]] = None, episodes: int = 10,
                    seed: int = 0, seeds: Optional[Iterable[int]] = None,
                    spec: Optional[SafetyIndexSpec] = None, policy=None, sigmas: Sigmas = DEFAULT_SIGMAS,
                    max_steps: Optional[int] = None, workers: Optional[int] = None) -> SweepResult:
    """Run ``episodes`` seeded episodes per grid value and build the trade-off cloud."""
    from . import robots
    from .env_task import get_task
    from .policy import PolicyConfig
    from .safe_control import Algorithm
    from .sim import EpisodeJob, run_batch

    cfg = get_task(task) if isinstance(task, str) else task
    algo = Algorithm(algorithm)
    grid = default_grid() if grid is None else [float(g) for g in grid]
    if not grid:
        raise ValueError("sweep grid is empty")
    seeds = list(range(seed, seed + episodes)) if seeds is None else [int(s) for s in seeds]
    if spec is None:
        spec = SafetyIndexSpec(robots.get(cfg.robot_config).order)
    policy = PolicyConfig() if policy is None else policy
    jobs = [EpisodeJob(cfg, algo, g, s, spec, policy, (), max_steps) for g in grid for s in seeds]
    by_param = defaultdict(list)
    for log in run_batch(jobs, workers):
        by_param[float(log.param)].append(log)
    points = tuple(point_from_logs(g, by_param[g], spec, sigmas) for g in grid)
    return SweepResult(cfg.name, algo.value, points, tuple(upper_right_hull(points)),
                       tuple(pareto_front(points)))


# ---------------------------------------------------------------------------
# emission


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _metric_dict(m: Optional[MetricReport]) -> dict:
    if m is None:
        return {"J_arm": None, "J_base": None, "M_self": None, "M_env": None, "efficiency": None, "safety": None}
    return {"J_arm": _num(m.J_arm), "J_base": _num(m.J_base), "M_self": m.M_self, "M_env": m.M_env,
            "efficiency": _num(m.efficiency), "safety": m.safety}


def episode_row(s: EpisodeSummary, timings: bool = True) -> dict:
    row = {"task": s.task, "algorithm": s.algorithm, "param": s.param, "seed": s.seed,
           "termination": s.termination, "success": s.success, "steps": s.steps}
    row.update(_metric_dict(s.metrics))
    if timings:
        row["loop_time_ms"] = s.loop_time * 1e3
        row["filter_time_ms"] = s.filter_time * 1e3
    row["diagnostic"] = s.diagnostic
    return row


def matrix_dict(m: SuccessMatrix) -> dict:
    return {
        "task": m.task,
        "algorithms": list(m.algorithms),
        "seeds": sorted(m.seeds),
        "successes": {a: sorted(m.success_sets[a]) for a in m.algorithms},
        "marginal": {a: _num(m.marginal(a)) for a in m.algorithms},
        "conditional": [[None if v is None else float(v) for v in row] for row in m.conditional],
        "joint": [[m.joint(a, b) for b in m.algorithms] for a in m.algorithms],
    }


def point_dict(p: TradeoffPoint, on_hull: bool = False, on_pareto: bool = False) -> dict:
    return {"param": p.param, "efficiency": _num(p.efficiency), "safety": _num(p.safety),
            "J_arm": _num(p.J_arm), "J_base": _num(p.J_base), "M_self": _num(p.M_self),
            "M_env": _num(p.M_env), "episodes": p.episodes, "errors": p.errors, "flagged": p.flagged,
            "on_hull": on_hull, "on_pareto": on_pareto, "diagnostic": p.diagnostic}


def sweep_dict(s: SweepResult) -> dict:
    hull = {id(p) for p in s.hull}
    par = {id(p) for p in s.pareto}
    return {"task": s.task, "algorithm": s.algorithm,
            "points": [point_dict(p, id(p) in hull, id(p) in par) for p in s.points],
            "hull": [[p.efficiency, p.safety] for p in s.hull],
            "pareto": [[p.efficiency, p.safety] for p in s.pareto]}


def results_document(reports=(), matrices=(), sweeps=(), timings: bool = True,
                     sigmas: Sigmas = DEFAULT_SIGMAS) -> dict:
    return {
        "schema_version": RESULTS_SCHEMA,
        "kind": "results",
        "sigmas": sigmas.as_dict(),
        "episodes": [episode_row(r, timings) for r in reports],
        "success": [matrix_dict(m) for m in matrices],
        "sweeps": [sweep_dict(s) for s in sweeps],
    }


EPISODE_COLUMNS = ("task", "algorithm", "param", "seed", "termination", "success", "steps", "J_arm", "J_base",
                   "M_self", "M_env", "efficiency", "safety", "loop_time_ms", "filter_time_ms", "diagnostic")
SUCCESS_COLUMNS = ("task", "algorithm_a", "algorithm_b", "successes_a", "joint", "conditional", "marginal_a")
SWEEP_COLUMNS = ("task", "algorithm", "param", "efficiency", "safety", "J_arm", "J_base", "M_self", "M_env",
                 "episodes", "errors", "flagged", "on_hull", "on_pareto", "diagnostic")


def _csv(path: Path, columns, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if r.get(k) is None else r.get(k) for k in columns})
    return path


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text) or "all"


def emit_results(out_dir, reports=(), matrices=(), sweeps=(), fmt: str = "json",
                 timings: bool = True, stem: str = "results", sigmas: Sigmas = DEFAULT_SIGMAS) -> list:
    """Write results in one of ``csv``, ``json`` or ``svg``; returns the paths written."""
    fmt = str(fmt).lower()
    if fmt not in ("csv", "json", "svg"):
        raise ValueError(f"unknown format {fmt!r}; valid: csv, json, svg")
    out = Path(out_dir)
    reports, matrices, sweeps = list(reports), list(matrices), list(sweeps)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path = out / f"{stem}.json"
            doc = results_document(reports, matrices, sweeps, timings, sigmas)
            path.write_text(json.dumps(doc, indent=1) + "\n")
            written.append(path)
        elif fmt == "csv":
            cols = EPISODE_COLUMNS if timings else tuple(c for c in EPISODE_COLUMNS if not c.endswith("_ms"))
            written.append(_csv(out / f"{stem}_episodes.csv", cols, (episode_row(r, timings) for r in reports)))
            rows = []
            for m in matrices:
                d = matrix_dict(m)
                for i, a in enumerate(m.algorithms):
                    for j, b in enumerate(m.algorithms):
                        rows.append({"task": m.task, "algorithm_a": a, "algorithm_b": b,
                                     "successes_a": m.count(a), "joint": d["joint"][i][j],
                                     "conditional": d["conditional"][i][j], "marginal_a": d["marginal"][a]})
            written.append(_csv(out / f"{stem}_success.csv", SUCCESS_COLUMNS, rows))
            rows = []
            for s in sweeps:
                for p in sweep_dict(s)["points"]:
                    rows.append({"task": s.task, "algorithm": s.algorithm, **p})
            written.append(_csv(out / f"{stem}_sweeps.csv", SWEEP_COLUMNS, rows))
        else:
            from . import svg

            by_task = defaultdict(list)
            for s in sweeps:
                by_task[s.task].append(s)
            for task, group in by_task.items():
                path = out / f"tradeoff_{_slug(task)}.svg"
                path.write_text(svg.tradeoff(group, title=f"{task} trade-off"))
                written.append(path)
            rep_by_task = defaultdict(list)
            for r in reports:
                if r.metrics is not None:
                    rep_by_task[r.task].append(r)
            for task, group in rep_by_task.items():
                path = out / f"radar_{_slug(task)}.svg"
                path.write_text(svg.radar(radar_series(group), title=task))
                written.append(path)
            for m in matrices:
                path = out / f"heatmap_{_slug(m.task)}.svg"
                path.write_text(svg.heatmap(m.algorithms, m.as_array(), title=f"{m.task} P(B|A)"))
                written.append(path)
    except OSError as exc:
        target = exc.filename or out
        raise OSError(exc.errno, f"cannot write results under {out}: {exc.strerror}", str(target)) from exc
    return written


def load_results(path):
    """Rebuild (reports, matrices, sweeps) from a results JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read results {path}: {exc.strerror}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}: not valid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or doc.get("kind") != "results" or doc.get("schema_version") != RESULTS_SCHEMA:
        raise ValueError(f"{path}: not a results file (schema {RESULTS_SCHEMA})")
    sd = doc.get("sigmas", {})
    sig = Sigmas(sd.get("arm", 0.002), sd.get("base", 0.05), sd.get("self", 0.0002), sd.get("env", 0.0002))
    reports = []
    for r in doc.get("episodes", []):
        m = None
        if r.get("M_env") is not None:
            m = MetricReport(r["J_arm"], r["J_base"], r["M_self"], r["M_env"], sig, r["steps"])
        reports.append(EpisodeSummary(r["task"], r["algorithm"], r["param"], r["seed"], r["termination"],
                                      r["steps"], m, r.get("loop_time_ms", 0.0) / 1e3,
                                      r.get("filter_time_ms", 0.0) / 1e3, r.get("diagnostic", "")))
    matrices = []
    for m in doc.get("success", []):
        algos = tuple(m["algorithms"])
        wins = {a: frozenset(m["successes"][a]) for a in algos}
        rows = tuple(tuple(None if not wins[a] else Fraction(len(wins[a] & wins[b]), len(wins[a])) for b in algos)
                     for a in algos)
        matrices.append(SuccessMatrix(algos, wins, frozenset(m["seeds"]), rows, m.get("task", "")))
    sweeps = []
    for s in doc.get("sweeps", []):
        pts, hull, par = [], [], []
        for d in s["points"]:
            nan = float("nan")
            p = TradeoffPoint(d["param"], nan if d["efficiency"] is None else d["efficiency"],
                              nan if d["safety"] is None else d["safety"], d["J_arm"], d["J_base"], d["M_self"],
                              d["M_env"], d["episodes"], d["errors"], d.get("diagnostic", ""))
            pts.append(p)
            if d.get("on_hull"):
                hull.append(p)
            if d.get("on_pareto"):
                par.append(p)
        key = lambda p: (p.efficiency, p.safety)
        sweeps.append(SweepResult(s["task"], s["algorithm"], tuple(pts), tuple(sorted(hull, key=key)),
                                  tuple(sorted(par, key=key))))
    return reports, matrices, sweeps


RADAR_AXES = ("J_arm", "J_base", "M_self", "M_env")


def radar_series(reports) -> dict:
    """Mean of the four metrics per algorithm; an absent metric (NA) plots as 0."""
    acc = defaultdict(list)
    for r in reports:
        if r.metrics is not None:
            acc[r.algorithm].append(r.metrics)
    out = {}
    for a in sorted(acc, key=lambda a: (ALGORITHM_ORDER.index(a) if a in ALGORITHM_ORDER else 99, a)):
        vals = []
        for name in RADAR_AXES:
            xs = [getattr(m, name) for m in acc[a] if getattr(m, name) is not None]
            vals.append(float(np.mean(xs)) if xs else 0.0)
        out[a] = vals
    return out
