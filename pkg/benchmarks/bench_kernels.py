"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--number N]

Each kernel is timed on inputs sized like one control step of the mobile
50-obstacle task; both backends get identical inputs and their outputs are
checked for agreement before timing.
"""
import argparse
import timeit

import numpy as np

from safeguard import _kernels, robots


def _inputs(rng):
    m = 19 * 50
    pa, pb = rng.normal(size=(m, 3)), rng.normal(size=(m, 3))
    ra, rb = rng.uniform(0.02, 0.1, m), rng.uniform(0.02, 0.1, m)
    from scipy.spatial.transform import Rotation

    rot = np.ascontiguousarray(Rotation.random(m, random_state=1).as_matrix())
    half = rng.uniform(0.05, 0.2, (m, 3))
    nu, k = 20, 12
    A = rng.normal(size=(k, nu))
    b = rng.normal(size=k)
    model = robots.get("G1MobileBase_D1").model
    theta = model.home.copy() + rng.normal(scale=0.2, size=model.n)
    return {
        "sphere_sphere": (pa, ra, pb, rb),
        "sphere_box": (pa, ra, pb, rot, half),
        "hildreth": (A, b, np.full(nu, 0.5), np.zeros(nu), np.zeros(k), np.zeros(nu),
                     np.full(nu, -1.0), np.full(nu, 1.0), 0.0, 1e-8, 5000, 1.5),
        "fk_chain": model._arrays[:5] + (theta,),
    }


def _call(mod, name, args):
    if name == "hildreth":
        # the kernel updates u, lam and nu in place
        args = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)
        mod.hildreth(*args)
        return args[3]
    return getattr(mod, name)(*args)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--number", type=int, default=100, help="calls per timing sample")
    opts = ap.parse_args()
    mods = {m.BACKEND: m for m in _kernels.backends()}
    if len(mods) < 2:
        print("compiled extension not built; only the fallback is available")
    inputs = _inputs(np.random.default_rng(0))
    print(f"{'kernel':14s}" + "".join(f"{b:>14s}" for b in mods) + "   speedup")
    for name, kargs in inputs.items():
        outs = [_call(m, name, kargs) for m in mods.values()]
        for o in outs[1:]:
            a = outs[0] if isinstance(outs[0], tuple) else (outs[0],)
            c = o if isinstance(o, tuple) else (o,)
            for x, y in zip(a, c):
                np.testing.assert_allclose(np.asarray(x), np.asarray(y), rtol=1e-9, atol=1e-12)
        times = [min(timeit.repeat(lambda: _call(m, name, kargs), number=opts.number, repeat=3)) / opts.number
                 for m in mods.values()]
        row = "".join(f"{t * 1e6:11.1f} us" for t in times)
        speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
        print(f"{name:14s}{row}{speed}")


if __name__ == "__main__":
    main()
