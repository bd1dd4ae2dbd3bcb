"""Numpy rollout path: used for custom models and when the extension is absent."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Fixed block size keeps the arithmetic of every rollout independent of the
# number of worker threads.
BLOCK = 128


def _block_costs(dynamics, cost, x0, mean, eps):
    B = eps.shape[0]
    x = np.repeat(x0[None, :], B, axis=0)
    total = np.zeros(B)
    with np.errstate(all="ignore"):
        for t in range(mean.shape[1]):
            total = total + cost.q_batch(x)
            u = mean[:, t][None, :] + eps[:, :, t]
            x = dynamics.step_batch(x, u)
        total = total + cost.terminal_batch(x)
    total[~np.isfinite(total)] = np.inf
    return total


def rollout_costs(dynamics, cost, x0, mean, eps, threads=1):
    K = eps.shape[0]
    out = np.empty(K)
    starts = range(0, K, BLOCK)

    def work(s):
        out[s:s + BLOCK] = _block_costs(dynamics, cost, x0, mean, eps[s:s + BLOCK])

    if threads > 1 and K > BLOCK:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return out
