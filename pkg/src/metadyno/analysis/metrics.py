"""Performance metrics over run traces (maximization convention)."""
from __future__ import annotations

import numpy as np

__all__ = ["IncompleteTraceError", "e_bbc", "env_errors", "budget_ratio", "loss_curve"]


class IncompleteTraceError(ValueError):
    pass


def env_errors(trace):
    """Per-environment gap between the global optimum and the env-final best."""
    if trace.num_environments == 0:
        raise IncompleteTraceError("trace has no environments")
    T = trace.problem.get("num_environments", trace.num_environments)
    if trace.num_environments != T:
        raise IncompleteTraceError(f"trace covers {trace.num_environments} of {T} environments")
    out = []
    for e in trace.envs:
        if e.best_y is None or e.optimum_y is None:
            raise IncompleteTraceError(f"environment {e.t} has no evaluations or no optimum")
        out.append(e.optimum_y - e.best_y)
    return np.array(out)


def e_bbc(trace) -> float:
    """Best error before change, averaged over environments."""
    return float(np.mean(env_errors(trace)))


def budget_ratio(peer_counts, best_counts) -> float:
    """Mean over environments of peer FEs / reference FEs to reach the same quality."""
    peer = np.asarray(peer_counts, dtype=float)
    best = np.asarray(best_counts, dtype=float)
    if peer.shape != best.shape or peer.ndim != 1:
        raise ValueError("peer and reference counts must cover the same environments")
    if peer.size == 0 or np.any(peer < 1) or np.any(best < 1):
        raise ValueError("FE counts must be at least 1")
    return float(np.mean(peer / best))


def loss_curve(trace):
    """``(global FE index, loss)`` pairs; loss resets at each environment change."""
    optimum = {e.t: e.optimum_y for e in trace.envs}
    fe = np.arange(1, len(trace.y) + 1)
    loss = np.array([optimum[t] - b for t, b in zip(trace.env, trace.best_so_far)])
    return fe, loss
