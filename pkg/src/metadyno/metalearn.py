"""Gradient-based meta-learning of surrogate initializations, plus adaptation.

Every finished environment is a task. A meta-step samples ``m`` tasks,
splits each into a support and a query set of ``K`` points, adapts the
shared parameters with one gradient step on the support set and scores the
adapted parameters on the query set:

    theta_i' = theta - alpha * grad L(theta, support_i)
    L_meta   = sum_i L(theta_i', query_i)
    theta   <- theta - beta * grad_theta L_meta

The outer gradient is first order by default (the query gradient at
``theta_i'`` stands in for the gradient with respect to ``theta``); the
exact version multiplies by ``I - alpha * H_support``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from . import surrogates as sg
from .surrogates import GPR, Dataset, SurrogateParams, support_query_split

__all__ = [
    "MetaConfig",
    "TaskArchive",
    "MetaTrace",
    "inner_step",
    "meta_loss",
    "meta_gradient",
    "meta_learn",
    "adapt",
    "MetaLearner",
]


@dataclass(frozen=True)
class MetaConfig:
    few_shot_K: int = 5
    tasks_per_batch_m: int | None = None  # None -> min(5, number of archived environments)
    inner_lr_alpha: float = 0.01
    outer_lr_beta: float = 0.01
    max_epochs: int = 200
    convergence_tol: float = 1e-4
    first_order: bool = True
    optimizer: str = "sgd"
    adapt_max_iter: int = 100
    adapt_tol: float = 1e-6

    def __post_init__(self):
        if int(self.few_shot_K) != self.few_shot_K or self.few_shot_K < 1:
            raise ValueError("few_shot_K must be a positive integer")
        if self.tasks_per_batch_m is not None and self.tasks_per_batch_m < 1:
            raise ValueError("tasks_per_batch_m must be positive")
        if not (self.inner_lr_alpha >= 0 and self.outer_lr_beta > 0):
            raise ValueError("learning rates must be positive")
        if self.max_epochs < 0 or self.adapt_max_iter < 0:
            raise ValueError("iteration budgets must be non-negative")
        if self.convergence_tol <= 0 or self.adapt_tol < 0:
            raise ValueError("tolerances must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")

    def batch_size(self, n_tasks):
        return self.tasks_per_batch_m if self.tasks_per_batch_m is not None else min(5, n_tasks)


class TaskArchive:
    """Datasets of finished environments, in time order."""

    def __init__(self, datasets=()):
        self._data = []
        for d in datasets:
            self.append(d)

    def append(self, data: Dataset):
        if len(data) == 0:
            raise ValueError("archived environments must hold at least one observation")
        if self._data and data.t < self._data[-1].t:
            raise ValueError("environments must be archived in time order")
        self._data.append(data)

    def __len__(self):
        return len(self._data)

    def __getitem__(self, i):
        return self._data[i]

    def __iter__(self):
        return iter(self._data)

    @property
    def time_steps(self):
        return [d.t for d in self._data]


MAX_TRACED_PARAMS = 32


@dataclass
class MetaTrace:
    """Per-batch diagnostics: raw meta-loss, its running mean (AL_B) and parameters (MP_B)."""

    batches: list = field(default_factory=list)
    meta_losses: list = field(default_factory=list)
    al_b: list = field(default_factory=list)
    mp_b: list = field(default_factory=list)
    param_names: list = field(default_factory=list)
    converged: bool = False
    stopped_early: bool = False

    def __len__(self):
        return len(self.batches)

    def record(self, batch, loss, params):
        self.batches.append(batch)
        self.meta_losses.append(float(loss))
        self.al_b.append(float(np.mean(self.meta_losses)))
        values = np.asarray(params.values, dtype=float)
        if values.size > MAX_TRACED_PARAMS:
            # large networks: keep the trace readable, store only the parameter norm
            self.mp_b.append(np.array([np.linalg.norm(values)]))
            names = ["param_norm"]
        else:
            self.mp_b.append(values.copy())
            names = list(params.names)
        if not self.param_names:
            self.param_names = names

    def rows(self):
        for b, loss, al, p in zip(self.batches, self.meta_losses, self.al_b, self.mp_b):
            yield [b, al, loss, *p.tolist()]

    def header(self):
        return ["batch", "AL_B", "meta_loss", *self.param_names]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            w.writerows(self.rows())

    def to_dict(self):
        return {
            "batches": list(self.batches),
            "meta_losses": list(self.meta_losses),
            "al_b": list(self.al_b),
            "mp_b": [p.tolist() for p in self.mp_b],
            "param_names": list(self.param_names),
            "converged": self.converged,
            "stopped_early": self.stopped_early,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            list(d["batches"]),
            list(d["meta_losses"]),
            list(d["al_b"]),
            [np.asarray(p) for p in d["mp_b"]],
            list(d.get("param_names", [])),
            bool(d.get("converged", False)),
            bool(d.get("stopped_early", False)),
        )


def inner_step(theta: SurrogateParams, support: Dataset, alpha: float) -> SurrogateParams:
    """One gradient step on the support loss."""
    g = sg.loss_grad(theta, support)
    return theta.with_values(theta.values - alpha * g)


def meta_loss(theta, tasks, alpha):
    """Sum over ``(support, query)`` tasks of the query loss after one inner step."""
    return float(sum(sg.loss(inner_step(theta, s, alpha), q) for s, q in tasks))


def _hvp(theta, data, v):
    if theta.kind == GPR:
        return sg.gpr_loss_hessian(theta, data) @ v
    # central difference of the analytic gradient along v
    norm = np.linalg.norm(v)
    if norm == 0:
        return np.zeros_like(v)
    eps = 1e-5 / norm
    plus = sg.loss_grad(theta.with_values(theta.values + eps * v), data)
    minus = sg.loss_grad(theta.with_values(theta.values - eps * v), data)
    return (plus - minus) / (2 * eps)


def meta_gradient(theta, tasks, alpha, first_order=True):
    """Return ``(meta_loss, gradient wrt theta)`` for a batch of tasks."""
    total, grad = 0.0, np.zeros_like(theta.values)
    for support, query in tasks:
        adapted = inner_step(theta, support, alpha)
        q_loss, q_grad = sg.loss_and_grad(adapted, query)
        total += q_loss
        if first_order or alpha == 0:
            grad += q_grad
        else:
            grad += q_grad - alpha * _hvp(theta, support, q_grad)
    return float(total), grad


def meta_learn(archive, config: MetaConfig, theta_init: SurrogateParams, rng=None):
    """Meta-train ``theta_init`` on the archived environments.

    Returns ``(theta_ml, trace)``. Stops after ``config.max_epochs`` batches
    or when both the relative parameter change and the relative meta-loss
    change drop below ``config.convergence_tol``. A batch that fails
    numerically ends training with the last valid parameters.
    """
    if len(archive) == 0:
        raise ValueError("meta-learning needs at least one archived environment")
    rng = np.random.default_rng(rng)
    trace = MetaTrace()
    theta = theta_init
    m = config.batch_size(len(archive))
    opt = sg._fit.make_optimizer(config.optimizer, config.outer_lr_beta)
    prev_loss = None
    for b in range(config.max_epochs):
        envs = rng.integers(0, len(archive), m)
        tasks = [support_query_split(archive[e], config.few_shot_K, rng) for e in envs]
        try:
            batch_loss, grad = meta_gradient(
                theta, tasks, config.inner_lr_alpha, config.first_order
            )
            if not np.isfinite(batch_loss) or not np.all(np.isfinite(grad)):
                raise FloatingPointError("non-finite meta-gradient")
            new_theta = theta.with_values(theta.values - opt.step(grad))
        except (ValueError, np.linalg.LinAlgError, FloatingPointError):
            trace.stopped_early = True
            break
        trace.record(b, batch_loss, new_theta)
        d_param = np.linalg.norm(new_theta.values - theta.values) / max(
            1.0, np.linalg.norm(theta.values)
        )
        d_loss = (
            np.inf
            if prev_loss is None
            else abs(batch_loss - prev_loss) / max(1.0, abs(prev_loss))
        )
        theta, prev_loss = new_theta, batch_loss
        if d_param < config.convergence_tol and d_loss < config.convergence_tol:
            trace.converged = True
            break
    return theta, trace


def adapt(
    data: Dataset,
    theta_ml: SurrogateParams,
    theta_current: SurrogateParams,
    change_detected: bool,
    lr=0.01,
    max_iter=100,
    tol=1e-6,
    optimizer="sgd",
) -> SurrogateParams:
    """Fit the surrogate on ``data``, starting from ``theta_ml`` after a change."""
    if len(data) == 0:
        raise ValueError("adaptation needs data")
    start = theta_ml if change_detected else theta_current
    fitted, _ = sg.fit_params(start, data, lr, max_iter, tol, optimizer)
    return fitted


class MetaLearner(BaseEstimator):
    """Estimator wrapper: ``fit(archive)`` learns ``theta_ml_`` from past environments."""

    def __init__(
        self,
        few_shot_K=5,
        tasks_per_batch_m=None,
        inner_lr_alpha=0.01,
        outer_lr_beta=0.01,
        max_epochs=200,
        convergence_tol=1e-4,
        first_order=True,
        optimizer="sgd",
        random_state=None,
    ):
        self.few_shot_K = few_shot_K
        self.tasks_per_batch_m = tasks_per_batch_m
        self.inner_lr_alpha = inner_lr_alpha
        self.outer_lr_beta = outer_lr_beta
        self.max_epochs = max_epochs
        self.convergence_tol = convergence_tol
        self.first_order = first_order
        self.optimizer = optimizer
        self.random_state = random_state

    def fit(self, archive, theta_init=None):
        if not isinstance(archive, TaskArchive):
            archive = TaskArchive(archive)
        if theta_init is None:
            theta_init = sg.default_gpr_params()
        params = self.get_params()
        seed = params.pop("random_state")
        config = MetaConfig(**params)
        self.theta_ml_, self.trace_ = meta_learn(archive, config, theta_init, seed)
        return self
