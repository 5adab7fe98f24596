"""Compare the compiled kernels with the numpy fallback.

Times the four hot kernels on representative inputs plus one full 1-D and
one 2-D solve, checks that both backends agree, and prints a table::

    python benchmarks/bench_kernels.py            # default sizes
    python benchmarks/bench_kernels.py --repeat 5 --nodes-2d 201
    python benchmarks/bench_kernels.py --json out.json

Without the compiled extension only the fallback column is filled.
"""

import argparse
import json
import math
import sys
import time

import numpy as np

from hjbopt import _backend
from hjbopt.grid import RectGrid
from hjbopt.objectives import builtin_objective
from hjbopt.solver import SolverOptions, control_set, solve


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(args):
    rng = np.random.default_rng(0)
    n2 = args.nodes_2d
    nodes = np.array([n2, n2], dtype=np.int64)
    lo, hi = np.array([-2.0, -2.0]), np.array([2.0, 2.0])
    h = (hi - lo) / (nodes - 1)
    u2 = rng.random(int(nodes.prod()))
    X = rng.uniform(lo, hi, size=(args.points, 2))
    ctr = control_set(2, 5.0, 16, 32)

    n1 = args.nodes_1d
    u1 = rng.random(n1)
    f1 = rng.random(n1)
    M = 8.0
    ladder = np.linspace(-M, M, 33)
    dtau = 0.005
    disc = math.exp(-0.1 * dtau)

    dw = builtin_objective("double_well")
    ric2 = builtin_objective("riccati_dist", c=1.0, dim=2)
    g1 = RectGrid(dw.lower, dw.upper, (n1,))
    g2 = RectGrid(ric2.lower, ric2.upper, (n2 // 2 + 1,) * 2)

    return [
        (f"interp_many  2-D {n2}^2, {args.points} pts",
         lambda k: k.interp_many(u2, lo, h, nodes, X)),
        (f"gradient_many 2-D {n2}^2, {args.points} pts",
         lambda k: k.gradient_many(u2, lo, hi, h, nodes, X)),
        (f"sweep_1d     {n1} nodes",
         lambda k: k.sweep_1d(u1, f1, -2.0, 4.0 / (n1 - 1), dtau, disc, ladder, M, 1)[0]),
        (f"sweep_nd     2-D {n2}^2, {len(ctr)} controls",
         lambda k: k.sweep_nd(u2, u2, lo, hi, h, nodes, 0.05, disc, ctr, 1)[0]),
        (f"solve        double_well {n1} nodes",
         lambda k: solve(dw, g1, 0.1, backend=k.NAME).values),
        (f"solve        riccati 2-D {g2.nodes[0]}^2",
         lambda k: solve(ric2, g2, 0.1, SolverOptions(dtau=0.1), backend=k.NAME).values),
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--nodes-1d", type=int, default=801)
    p.add_argument("--nodes-2d", type=int, default=101)
    p.add_argument("--points", type=int, default=100_000)
    p.add_argument("--json", help="also write the results to this file")
    args = p.parse_args(argv)

    names = _backend.available()
    kernels = {n: _backend.load(n) for n in names}
    print(f"backends: {', '.join(names)} (selected at import: {_backend.NAME})")
    print(f"{'case':44s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s} {'max diff':>10s}")
    results = []
    for label, fn in cases(args):
        row = {"case": label}
        outs = {}
        for n in ("python", "cython"):
            if n in kernels:
                # the fallback is slow; one run is enough for the full solves
                rep = 1 if (n == "python" and label.startswith("solve")) else args.repeat
                row[n], outs[n] = best_of(lambda: fn(kernels[n]), rep)
        if len(outs) == 2:
            row["speedup"] = row["python"] / row["cython"]
            row["max_diff"] = float(np.max(np.abs(np.asarray(outs["python"]) -
                                                  np.asarray(outs["cython"]))))
        results.append(row)
        fmt = lambda v, f: (f % v) if v is not None else "-"
        print(f"{label:44s} {fmt(row.get('python'), '%11.4f'):>11s} "
              f"{fmt(row.get('cython'), '%11.4f'):>11s} {fmt(row.get('speedup'), '%8.1fx'):>9s} "
              f"{fmt(row.get('max_diff'), '%10.1e'):>10s}", flush=True)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
