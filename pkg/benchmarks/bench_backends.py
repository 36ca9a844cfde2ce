"""Compare the compiled split-search core with the numpy fallback.

    python benchmarks/bench_backends.py [--rows 4000] [--trees 50] [--repeat 3]

Trains the same forest on both backends, checks the tree arrays are
identical, and reports best-of-N wall time for training and prediction.
"""
import argparse
import time

import numpy as np

from fairaudit.forest import TrainConfig, train, tree_vote_matrix
from fairaudit.forest._backend import get_kernels
from fairaudit.preprocess import run_pipeline
from fairaudit.synth import SynthSpec, generate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4000)
    ap.add_argument("--trees", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    try:
        get_kernels("compiled")
    except ImportError:
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation` first")

    split = run_pipeline(generate(SynthSpec(seed=0, n_rows=args.rows)))
    data = split.train
    cfg = TrainConfig(n_trees=args.trees, seed=0)
    print(f"{len(data)} training rows, {args.trees} trees, best of {args.repeat}")

    results = {}
    for name in ("compiled", "python"):
        t_train, model = best_of(lambda: train(data, cfg, backend=name), args.repeat)
        X = model.encoder.encode(split.test)
        t_pred, votes = best_of(lambda: tree_vote_matrix(model, X, backend=name), args.repeat)
        results[name] = (t_train, t_pred, model, votes)
        print(f"{name:>9}: train {t_train * 1000:9.1f} ms   predict {t_pred * 1000:8.1f} ms")

    c, p = results["compiled"], results["python"]
    same = all(np.array_equal(getattr(c[2], k), getattr(p[2], k))
               for k in ("feature", "threshold", "left", "right", "members", "n_pos", "n_neg"))
    same &= np.array_equal(c[3], p[3])
    print(f"speedup: train x{p[0] / c[0]:.1f}, predict x{p[1] / c[1]:.1f}; identical output: {same}")


if __name__ == "__main__":
    main()
