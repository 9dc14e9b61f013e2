"""Compiled kernels vs the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Times the three hot paths (allocation run loop, batched union-find used by
the Monte-Carlo threshold estimator, sliding-window union connectivity) on
both backends and checks that they agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lossyalloc._backend import available_backends, get_kernels
from lossyalloc.graph import GraphModelSpec, assign_weights, generate
from lossyalloc.objectives import NonlinearMap, ObjectiveArrays, random_objectives


def _best(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_run_block(k, repeat, rows=20000):
    g = assign_weights(generate(GraphModelSpec("er", {"n": 20, "p": 0.3}, seed=33)), 0, 10, 0)
    objs = ObjectiveArrays.stack(random_objectives(20, 0, box=(2, 7)))
    u, v, w = g.edge_arrays
    rng = np.random.default_rng(1)
    masks = np.ascontiguousarray(rng.random((rows, g.n_edges)) > 0.6, dtype=np.uint8)
    gn, gl = NonlinearMap("cubic"), NonlinearMap("log-quantizer", rho=1 / 256)

    def call():
        x = np.full(20, 5.0)
        F, S, D = np.empty(rows), np.empty(rows), np.empty(rows)
        C = np.empty(rows, dtype=np.int64)
        k.run_block(x, u, v, w, masks, *objs.columns(), gn.code, *gn.params, gl.code, *gl.params,
                    1e-3, 0.0, rows, F, S, C, D, np.empty((0, 0)))
        return x

    return _best(call, repeat)


def bench_union_find(k, repeat):
    g = generate(GraphModelSpec("grid", {"rows": 30, "cols": 30}))
    u, v, _ = g.edge_arrays
    rng = np.random.default_rng(2)
    masks = np.ascontiguousarray(rng.random((50, g.n_edges)) < 0.5, dtype=np.uint8)
    return _best(lambda: k.component_labels_batch(g.n, u, v, masks), repeat)


def bench_sliding(k, repeat, rows=5000, B=23):
    g = generate(GraphModelSpec("er", {"n": 20, "p": 0.3}, seed=33))
    u, v, _ = g.edge_arrays
    rng = np.random.default_rng(3)
    masks = np.ascontiguousarray(rng.random((rows, g.n_edges)) > 0.9271, dtype=np.uint8)
    return _best(lambda: k.sliding_union_connected(g.n, u, v, masks, B), repeat)


CASES = {
    "run_block (n=20, 20k steps)": bench_run_block,
    "component_labels (30x30 grid, 50 masks)": bench_union_find,
    "sliding_union (5k steps, B=23)": bench_sliding,
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':42s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup   agree")
    for name, fn in CASES.items():
        times, outs = [], []
        for b in backends:
            t, out = fn(get_kernels(b), args.repeat)
            times.append(t)
            outs.append(np.asarray(out))
        speed = times[-1] / times[0] if len(times) > 1 else float("nan")
        agree = all(np.allclose(o, outs[0], rtol=1e-9, atol=1e-12) for o in outs[1:])
        print(f"{name:42s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + f"{speed:11.1f}x   {agree}")


if __name__ == "__main__":
    main()
