"""Command-line interface: ``safeguard {run,sweep,matrix,plot,list-tasks}``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
SAFEGUARD_THREADS bounds the worker pool of batch commands.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench, config_io
from .errors import ConfigError, SafeguardError

log = logging.getLogger("safeguard")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
ALGOS = ("ssa", "cbf", "sss", "pfm", "sma")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def parse_grid(text: str) -> list:
    """Comma-separated values; ``a:b:s`` expands to a, a+s, ... < b (b excluded)."""
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        try:
            if ":" in tok:
                a, b, s = (float(v) for v in tok.split(":"))
                if not s > 0:
                    raise ValueError
                n = int(round((b - a) / s))
                out += [round(a + i * s, 10) for i in range(n) if a + i * s < b - 1e-12]
            else:
                out.append(float(tok))
        except ValueError:
            raise ConfigError(f"--grid: cannot parse {tok!r} (expected numbers or start:stop:step)") from None
    if not out:
        raise ConfigError("--grid: no values")
    return out


def _common(p, task_required=False):
    p.add_argument("--config", action="append", default=[], metavar="FILE",
                   help="bundle or task file (repeatable; later files win)")
    p.add_argument("--task", required=task_required, help="task name or task file")
    p.add_argument("--dt", type=float)
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--episodes", type=int, help="number of seeds, starting at --seed")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--format", choices=("csv", "json", "svg"), default="json")
    p.add_argument("--no-timings", dest="timings", action="store_false",
                   help="omit wall-clock fields so outputs are bitwise reproducible")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="safeguard", description="Safe-control benchmark for humanoid collision avoidance.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run episodes of one task/algorithm/parameter")
    _common(p)
    p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--param", type=float)
    p.add_argument("--trace", action="store_true", help="write one trace file per episode under --out")

    p = sub.add_parser("sweep", help="sweep the filter parameter and build the trade-off hull")
    _common(p)
    p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--grid", help="parameter values, e.g. '0.1,1,10' or '0:1:0.1,1:10:1'")

    p = sub.add_parser("matrix", help="benchmark tasks x algorithms and conditional success matrices")
    _common(p)
    p.add_argument("--algo", choices=ALGOS, action="append", help="restrict algorithms (repeatable)")

    p = sub.add_parser("plot", help="render SVG figures from a results JSON file")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("list-tasks", help="list the built-in tasks")
    p.add_argument("--format", choices=("text", "json"), default="text")
    return ap


def _overrides(args, **extra) -> dict:
    ov = {"task": args.task, "dt": args.dt, "max_steps": args.max_steps, "seed": args.seed,
          "episodes": args.episodes}
    ov.update(extra)
    return ov


def _emit(args, reports=(), matrices=(), sweeps=(), sigmas=bench.DEFAULT_SIGMAS):
    if args.out is None:
        return []
    paths = bench.emit_results(args.out, reports, matrices, sweeps, args.format, args.timings,
                               stem=args.command, sigmas=sigmas)
    for p in paths:
        print(f"wrote {p}")
    return paths


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.4f}"


def cmd_run(args) -> int:
    from .sim import EpisodeJob, run_batch, write_trace

    b = config_io.load_bundle(args.config, _overrides(args, algorithm=args.algo, param=args.param))
    jobs = [EpisodeJob(b.task, b.filter.algorithm, b.param, s, b.spec, b.policy, _filter_options(b))
            for s in b.seeds]
    logs = run_batch(jobs)
    reports = [bench.summarize(l, b.spec, b.sigmas) for l in logs]
    for r in reports:
        m = r.metrics
        print(f"{r.task} {r.algorithm} param={r.param:g} seed={r.seed}: {r.termination} after {r.steps} steps"
              + (f"  J_arm={_fmt(m.J_arm)} J_base={_fmt(m.J_base)} M_self={_fmt(m.M_self)} M_env={_fmt(m.M_env)}"
                 if m else "")
              + (f"  loop={r.loop_time * 1e3:.3f} ms" if args.timings else ""))
        if r.diagnostic:
            print(f"  diagnostic: {r.diagnostic}")
    if args.trace and args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        for l in logs:
            p = write_trace(l, args.out / f"trace_{l.task}_{l.algorithm}_{l.seed}.jsonl", args.timings)
            print(f"wrote {p}")
    _emit(args, reports, sigmas=b.sigmas)
    return EXIT_RUNTIME if any(l.termination.value == "Error" for l in logs) else EXIT_OK


def _filter_options(b) -> tuple:
    f = b.filter
    opts = {"activation_tolerance": f.activation_tolerance, "slack_penalty": f.slack_penalty,
            "dls_damping": f.dls_damping, "max_iter": f.max_iter, "tol": f.tol, "q_weights": f.q_weights}
    return tuple(opts.items())


def cmd_sweep(args) -> int:
    b = config_io.load_bundle(args.config, _overrides(args, algorithm=args.algo, param=0.0))
    grid = parse_grid(args.grid) if args.grid else None
    res = bench.parameter_sweep(b.task, b.algorithm, grid, seeds=b.seeds if args.episodes or args.config or args.seed
                                is not None else range(10), spec=b.spec, policy=b.policy, sigmas=b.sigmas,
                                max_steps=b.max_steps)
    for p in res.points:
        flag = "  FLAGGED: " + p.diagnostic if p.flagged else ""
        print(f"{res.algorithm} param={p.param:g}: efficiency={_fmt(p.efficiency if p.valid else None)} "
              f"safety={_fmt(p.safety if p.valid else None)}{flag}")
    print("hull: " + ", ".join(f"{p.param:g}" for p in res.hull))
    _emit(args, sweeps=[res], sigmas=b.sigmas)
    return EXIT_OK


def cmd_matrix(args) -> int:
    from .env_task import BENCHMARK_TASKS
    from .safe_control import Algorithm
    from .sim import EpisodeJob, run_batch

    algos = args.algo or list(ALGOS)
    tasks = [args.task] if args.task else list(BENCHMARK_TASKS)
    episodes = args.episodes if args.episodes is not None else 10
    seed0 = args.seed if args.seed is not None else 0
    bundles = {}
    jobs = []
    for t in tasks:
        for a in algos:
            b = config_io.load_bundle(args.config, {"task": t, "algorithm": a, "dt": args.dt,
                                                    "max_steps": args.max_steps, "seed": seed0,
                                                    "episodes": episodes})
            bundles[(b.task.name, a)] = b
            jobs += [EpisodeJob(b.task, Algorithm(a), b.param, s, b.spec, b.policy, _filter_options(b))
                     for s in b.seeds]
    logs = run_batch(jobs)
    reports, matrices = [], []
    for t in dict.fromkeys(b.task.name for b in bundles.values()):
        group = [l for l in logs if l.task == t]
        b0 = bundles[(t, algos[0])]
        reports += [bench.summarize(l, b0.spec, b0.sigmas) for l in group]
        m = bench.success_stats(group, task=t)
        matrices.append(m)
        print(f"{t}: success " + "  ".join(f"{a}={m.marginal(a):.2f}" for a in m.algorithms))
        for a, row in zip(m.algorithms, m.as_array()):
            print(f"  P(.|{a}) " + " ".join("  NA" if v != v else f"{v:.2f}" for v in row))
    _emit(args, reports, matrices, sigmas=bundles[next(iter(bundles))].sigmas)
    return EXIT_OK


def cmd_plot(args) -> int:
    reports, matrices, sweeps = bench.load_results(args.input)
    out = args.out if args.out is not None else args.input.parent
    for p in bench.emit_results(out, reports, matrices, sweeps, "svg"):
        print(f"wrote {p}")
    return EXIT_OK


def cmd_list_tasks(args) -> int:
    from .env_task import BENCHMARK_TASKS, BUILTIN_TASKS

    if args.format == "json":
        docs = [config_io.task_document(t) for t in BUILTIN_TASKS.values()]
        print(json.dumps(docs, indent=1))
        return EXIT_OK
    for name, t in BUILTIN_TASKS.items():
        tag = "benchmark" if name in BENCHMARK_TASKS else "extra"
        hyper = " ".join(f"{a}={v:g}" for a, v in t.hyperparameters.items())
        print(f"{name:28s} {t.robot_config:16s} obstacles={t.num_obstacles:<3d} "
              f"{'dynamic' if t.dynamic else 'static':7s} steps={t.max_steps:<5d} [{tag}] {hyper}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "matrix": cmd_matrix, "plot": cmd_plot,
            "list-tasks": cmd_list_tasks}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"safeguard: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SafeguardError, OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"safeguard: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
