from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AcquisitionConfig:
    kind: str = "UCB"
    w: float = 2.0

    def __post_init__(self):
        if self.kind != "UCB":
            raise ValueError(f"unsupported acquisition {self.kind!r}")
        if not self.w >= 0:
            raise ValueError("UCB weight w must be non-negative")


def ucb(pred, w=2.0):
    """Upper confidence bound ``mean + w * sqrt(variance)`` (maximization)."""
    var = np.asarray(pred.variance, dtype=float)
    if np.any(var < 0):
        raise ValueError("predictive variance must be non-negative")
    out = np.asarray(pred.mean, dtype=float) + w * np.sqrt(var)
    return float(out) if out.ndim == 0 else out


def acquisition_values(model, X, acq):
    return ucb(model.predict(X), acq.w)


def pattern_search(f, x0, f0, lower, upper, budget, step=0.1, min_step=1e-6):
    """Bounded compass search maximizing the batch function ``f``.

    Polls the ``2n`` coordinate neighbours at the current step, moves to the
    best improving one, halves the step otherwise. Returns
    ``(x, fx, evaluations_used)``.
    """
    n = x0.size
    span = upper - lower
    x, fx = x0.copy(), f0
    h = step
    used = 0
    eye = np.eye(n)
    while used + 2 * n <= budget and h >= min_step:
        polls = np.clip(np.vstack([x + h * span * eye, x - h * span * eye]), lower, upper)
        vals = f(polls)
        used += 2 * n
        j = int(np.argmax(vals))
        if vals[j] > fx:
            x, fx = polls[j], float(vals[j])
        else:
            h *= 0.5
    return x, fx, used


def maximize_acquisition(model, acq, bounds, budget=2000, rng=None, n_probes=None, n_starts=8):
    """Maximize UCB over the box: random probes, then compass refinement of the best few.

    ``n_probes`` defaults to ``512 * n``; ``budget`` is shared among the
    ``n_starts`` refinements. Only surrogate evaluations are spent.
    """
    rng = np.random.default_rng(rng)
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    n = lower.size
    if n_probes is None:
        n_probes = 512 * n
    probes = rng.uniform(lower, upper, size=(n_probes, n))
    vals = acquisition_values(model, probes, acq)
    order = np.argsort(-vals, kind="stable")[:n_starts]
    best_x, best_v = probes[order[0]].copy(), float(vals[order[0]])
    per_start = budget // max(1, len(order))
    for i in order:
        x, v, _ = pattern_search(
            lambda Z: acquisition_values(model, Z, acq), probes[i], float(vals[i]),
            lower, upper, per_start,
        )
        if v > best_v:
            best_x, best_v = x, v
    return best_x
