"""Time the compiled and numpy kernel backends on the same workloads.

    python bench/benchmark_backends.py [--models 200] [--grid 40] [--repeat 3]

Workloads:
  local_min   single-model subproblem on random 2-D Taylor-like cubics
  batch       shift-ladder batch over the same models
  fractal     one Himmelblau third-order pass over a grid of starts
Outcomes of the two backends are compared on every model.
"""

import argparse
import time

import numpy as np

from tonewton import _kernels
from tonewton.cubic_model import symmetrize_tensor
from tonewton.objectives import himmelblau
from tonewton.optimizers import OptimizerConfig, _run_batch


def random_models(n_models, n, seed):
    rng = np.random.default_rng(seed)
    H = symmetrize_tensor(rng.normal(size=(n_models, n, n, n)))
    A = rng.normal(size=(n_models, n, n))
    Q = A @ np.swapaxes(A, -1, -2) / n + rng.normal(scale=0.5, size=(n_models, 1, 1)) * np.eye(n)
    b = rng.normal(size=(n_models, n))
    return H, Q, b


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def fractal_pass(mod, grid):
    f = himmelblau()
    xs = np.linspace(-6, 6, grid)
    X0 = np.stack(np.meshgrid(xs, xs), axis=-1).reshape(-1, 2)
    cfg = OptimizerConfig(max_iters=50, shifts=(0.0,))
    kw = cfg.localmin.kernel_kwargs()

    def step(X, G):
        T = symmetrize_tensor(f.tensor(X))
        Hs = f.hessian(X)
        Q = 0.5 * (Hs + np.swapaxes(Hs, -1, -2))
        o, pts, *_ = mod.local_min_batch(T, Q, G, np.array(cfg.shifts), **kw)
        ok = (o == _kernels.LOCAL_MIN) | (o == _kernels.SECOND_ORDER_POINT)
        return X + np.where(ok[:, None], pts, 0.0), ok

    return _run_batch(f, X0, cfg, step)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=200)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--grid", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    mods = _kernels.backends()
    if len(mods) < 2:
        print("compiled backend not built; only numpy is available")
    H, Q, b = random_models(args.models, args.dim, args.seed)
    shifts = np.array([0.0, 5.0, 10.0])
    results = {}
    print(f"{'workload':<12}{'backend':<10}{'seconds':>10}{'per item (ms)':>16}")
    for name, mod in mods.items():
        t, out = best_of(lambda: [mod.local_min(H[i], Q[i], b[i]) for i in range(args.models)],
                         args.repeat)
        results[(name, "local_min")] = [r[0] for r in out]
        print(f"{'local_min':<12}{name:<10}{t:>10.3f}{1e3 * t / args.models:>16.3f}")
        t, out = best_of(lambda: mod.local_min_batch(H, Q, b, shifts), args.repeat)
        results[(name, "batch")] = list(out[0])
        print(f"{'batch':<12}{name:<10}{t:>10.3f}{1e3 * t / args.models:>16.3f}")
        t, out = best_of(lambda: fractal_pass(mod, args.grid), 1)
        results[(name, "fractal")] = list(out.termination)
        print(f"{'fractal':<12}{name:<10}{t:>10.3f}{1e3 * t / args.grid ** 2:>16.3f}")
    if len(mods) == 2:
        for w in ("local_min", "batch", "fractal"):
            a, c = (results[(k, w)] for k in mods)
            same = sum(int(x) == int(y) for x, y in zip(a, c))
            print(f"{w}: identical outcomes on {same}/{len(a)}")


if __name__ == "__main__":
    main()
