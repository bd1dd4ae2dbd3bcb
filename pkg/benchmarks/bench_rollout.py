"""Time one batch of K rollouts on the compiled kernel and on the numpy path.

    python3 benchmarks/bench_rollout.py --tasks hovercraft car --K 1000 --repeats 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pintegra import backend, tasks
from pintegra.core import PathIntegralConfig, sample_noise


def time_backend(name, dyn, cost, x0, mean, eps, threads, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = backend.rollout_costs(dyn, cost, x0, mean, eps, threads=threads, backend=name)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--tasks", nargs="+", default=list(tasks.TASKS))
    p.add_argument("--K", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args(argv)

    print(f"backends available: {', '.join(backend.available())}; K={args.K}, threads={args.threads}, "
          f"best of {args.repeats}")
    print(f"{'task':12s} {'T':>4s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s} {'max rel diff':>13s}")
    for name in args.tasks:
        t = tasks.get(name)
        dyn, cost = t.dynamics(), t.cost()
        cfg = PathIntegralConfig(K=args.K, sigma=t.sigma, horizon=t.horizon)
        eps = sample_noise(cfg, 0, t.horizon).epsilon
        x0 = t.initial_state(0)
        mean = np.zeros((dyn.m, t.horizon))
        if name == "quadrotor":
            mean += dyn.params.hover_speed
        py, ref = time_backend("python", dyn, cost, x0, mean, eps, args.threads, args.repeats)
        if backend.HAVE_COMPILED:
            cc, out = time_backend("compiled", dyn, cost, x0, mean, eps, args.threads, args.repeats)
            finite = np.isfinite(ref)
            diff = np.max(np.abs(out[finite] - ref[finite]) / np.maximum(np.abs(ref[finite]), 1e-300))
            print(f"{name:12s} {t.horizon:4d} {py * 1e3:10.2f} {cc * 1e3:12.2f} {py / cc:8.1f} {diff:13.2e}")
        else:
            print(f"{name:12s} {t.horizon:4d} {py * 1e3:10.2f} {'-':>12s} {'-':>8s} {'-':>13s}")


if __name__ == "__main__":
    main()
