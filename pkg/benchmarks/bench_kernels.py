"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--points 100000] [--grid 65]

Times expression evaluation (a polynomial and a transcendental-heavy
expression), banded Jacobian assembly and a full Scherk
solve under each available backend, and checks that the results agree.
"""
import argparse
import timeit

import numpy as np

from unifield import kernels
from unifield.bundles import LagrangianProblem
from unifield.chart import Chart
from unifield.parser import parse
from unifield.program import compile_expr
from unifield.solver import Grid, solve_dirichlet

L = "sqrt(1 + v1_1^2 + v1_2^2)"
POLY = "x1*x2*v1_1 + y1*v1_1^3 - 0.5*v1_2^2*x1 + (1 + y1^2)*(v1_1 - v1_2)^2"
TRIG = "(1 + v1_2^2)/sqrt(1 + v1_1^2 + v1_2^2)^3 + ln(cos(x1)) - ln(cos(x2)) + y1*sin(v1_1)"


def scherk(X1, X2):
    return np.log(np.cos(X1)) - np.log(np.cos(X2))


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def run(backend, args, prob):
    kernels.use(backend)
    ch = prob.chart
    rng = np.random.default_rng(0)
    X = np.column_stack([
        rng.uniform(-1, 1, (args.points, 2)), rng.uniform(-1, 1, (args.points, 1)),
        rng.uniform(-1, 1, (args.points, 2)),
    ])
    poly = compile_expr(parse(POLY, ch.jet_coords), ch.jet_coords)
    trig = compile_expr(parse(TRIG, ch.jet_coords), ch.jet_coords)
    n = args.grid
    c = [np.ascontiguousarray(rng.normal(size=(n, n))) for _ in range(7)]
    grid = Grid(-0.5, 0.5, -0.5, 0.5, n, n)
    out = {
        "eval polynomial": best(lambda: poly(X), args.repeat),
        "eval transcend.": best(lambda: trig(X), args.repeat),
        "assemble_banded": best(lambda: kernels.assemble_banded(*c, 0.1, 0.1), args.repeat),
        "solve": best(lambda: solve_dirichlet(prob, grid, scherk), args.repeat),
    }
    values = (poly(X), trig(X), np.asarray(kernels.assemble_banded(*c, 0.1, 0.1)), solve_dirichlet(prob, grid, scherk).y)
    return out, values


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--points", type=int, default=100_000)
    ap.add_argument("--grid", type=int, default=65)
    args = ap.parse_args()
    ch = Chart(2, 1)
    prob = LagrangianProblem(ch, parse(L, ch.coords))
    before = kernels.BACKEND
    backends = ["python"] + (["cython"] if kernels.compiled_available() else [])
    results = {b: run(b, args, prob) for b in backends}
    kernels.use(before)

    print(f"points={args.points} grid={args.grid}x{args.grid} repeat={args.repeat} (best of)")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name in ("eval polynomial", "eval transcend.", "assemble_banded", "solve"):
        row = f"{name:<16}" + "".join(f"{results[b][0][name] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            row += f"{results['python'][0][name] / results['cython'][0][name]:>11.1f}x"
        print(row)
    if len(backends) > 1:
        diffs = [float(np.max(np.abs(a - b))) for a, b in zip(results["python"][1], results["cython"][1])]
        print("max |python - cython|: " + ", ".join(f"{d:.1e}" for d in diffs))
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
