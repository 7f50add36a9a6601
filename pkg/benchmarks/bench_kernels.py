"""Compare the compiled and pure-Python kernels on deflated root exhaustion.

    python3 benchmarks/bench_kernels.py --n 3 --states 20
"""

import argparse
import json
import math
import time

import numpy as np

from tocsynth import _backend
from tocsynth.newton import SolveOptions, deflated_solve
from tocsynth.sysgen import system_factory


def run(n: int, states: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1, 1, size=(states, n))
    factory = system_factory(n, None)
    systems = [factory.instantiate(x, u0) for x in xs for u0 in (1, -1)]
    opts = SolveOptions.for_dimension(n, n_roots=math.factorial(n))
    out = {}
    roots = {}
    for name in _backend.available():
        _backend.use(name)
        t0 = time.perf_counter()
        found = [deflated_solve(cs, opts) for cs in systems]
        out[name] = time.perf_counter() - t0
        roots[name] = [np.array(r.roots) for r in found]
    if len(roots) == 2:
        a, b = roots.values()
        out["identical_roots"] = all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))
        out["speedup"] = out["python"] / out["compiled"]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--states", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(json.dumps({"n": args.n, "systems": 2 * args.states, **run(args.n, args.states, args.seed)}, indent=2))


if __name__ == "__main__":
    main()
