"""Rollout backend selection.

The compiled kernel (``pintegra._rollout``) is used when it imported
successfully and both the plant and the cost are built-in; everything else
goes through the numpy implementation in ``pintegra._fallback``. Setting the
environment variable ``PINTEGRA_PURE_PYTHON=1`` disables the kernel at
import time.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("PINTEGRA_PURE_PYTHON"):
        raise ImportError("disabled by PINTEGRA_PURE_PYTHON")
    from . import _rollout as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

HAVE_COMPILED = _compiled is not None


def available() -> list[str]:
    return ["compiled", "python"] if HAVE_COMPILED else ["python"]


def _kernel_ok(dynamics, cost) -> bool:
    return (
        HAVE_COMPILED
        and getattr(dynamics, "kernel_id", None) is not None
        and getattr(cost, "kernel_id", None) is not None
    )


def resolve(backend: str, dynamics, cost) -> str:
    """Name of the backend that will actually run for this model pair."""
    if backend not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "python":
        return "python"
    if backend == "compiled" and not _kernel_ok(dynamics, cost):
        raise RuntimeError("compiled backend unavailable for this model")
    return "compiled" if _kernel_ok(dynamics, cost) else "python"


def rollout_costs(dynamics, cost, x0, mean, eps, threads: int = 1, backend: str = "auto") -> np.ndarray:
    """State cost ``S_x`` of each rollout ``u_k = clamp(mean + eps[k])``.

    ``mean`` is ``(m, T)`` and ``eps`` ``(K, m, T)``. Rollouts that leave the
    finite range get ``+inf``.
    """
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    mean = np.ascontiguousarray(mean, dtype=np.float64)
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    if resolve(backend, dynamics, cost) == "compiled":
        out = np.empty(eps.shape[0])
        _compiled.rollout_costs(
            dynamics.kernel_id,
            np.ascontiguousarray(dynamics.kernel_params(), dtype=np.float64),
            cost.kernel_id,
            np.ascontiguousarray(cost.kernel_params(), dtype=np.float64),
            x0, mean, eps,
            np.ascontiguousarray(dynamics.u_min, dtype=np.float64),
            np.ascontiguousarray(dynamics.u_max, dtype=np.float64),
            out, int(threads),
        )
        return out
    return _fallback.rollout_costs(dynamics, cost, x0, mean, eps, threads=threads)
