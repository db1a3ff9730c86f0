"""Dynamic-optimization runs with strict true-evaluation accounting.

One run walks through ``T`` environments of a Moving Peaks instance. Each
environment gets ``max_fe_factor * n`` true evaluations, the first
``init_factor * n`` of them spent on a Latin-hypercube design; the
environment changes exactly when its budget is used up.

Families
--------
MLBO    BO whose surrogate is initialized from meta-learned parameters after a change.
MLDDEO  surrogate-assisted EA with the same meta-learned initialization.
RBO     BO restarted from default surrogate parameters after a change.
CBO     BO that ignores changes and trains on everything seen so far.
RDDEO   surrogate-assisted EA restarted from defaults after a change
        (``SAEA`` is the same loop under its plain-EA name).

Randomness is split into independent streams per environment (design,
population, acquisition search) and per meta-learning call, so MLBO and
RBO consume identical random numbers and differ only in the surrogate
initialization.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .metalearn import MetaConfig, MetaTrace, TaskArchive, adapt, meta_learn
from .mpb import MpbConfig, mpb_advance, mpb_eval, mpb_global_optimum, mpb_init
from .optim import (
    AcquisitionConfig,
    EAConfig,
    ea_step,
    environmental_selection,
    identify_promising,
    init_population,
    latin_hypercube,
    maximize_acquisition,
    rescore,
    ucb,
)
from .surrogates import (
    GPR,
    NN,
    Dataset,
    FittedSurrogate,
    SurrogateParams,
    default_gpr_params,
    init_mlp_params,
)

__all__ = [
    "FAMILIES",
    "BudgetPolicy",
    "AlgorithmSpec",
    "CountingProblem",
    "EnvRecord",
    "RunTrace",
    "run",
    "run_mlbo",
    "run_mlddeo",
    "run_baseline",
    "run_extended_budget",
    "DynamicOptimizer",
]

MLBO, MLDDEO, RBO, CBO, RDDEO, SAEA = "MLBO", "MLDDEO", "RBO", "CBO", "RDDEO", "SAEA-plain"
FAMILIES = (MLBO, MLDDEO, RBO, CBO, RDDEO, SAEA)
BO_FAMILIES = (MLBO, RBO, CBO)
EA_FAMILIES = (MLDDEO, RDDEO, SAEA)
META_FAMILIES = (MLBO, MLDDEO)
_EA_LABEL = {"CMAES": "SACMA-ES", "PSO": "SAPSO", "DE": "SADE"}

# independent RNG stream tags
_DESIGN, _META, _THETA0 = 1, 2, 3


@dataclass(frozen=True)
class BudgetPolicy:
    """Per-environment evaluation budget, as multiples of the dimension ``n``.

    ``init_in_cap`` charges the initial design against the environment cap
    (cap ``5n`` leaves ``n`` evaluations for search); set it to ``False``
    to grant the cap on top of the design instead.
    """

    init_factor: int = 4
    max_fe_factor: int = 5
    extended_cap_multiplier: int = 7
    init_in_cap: bool = True

    def __post_init__(self):
        if self.init_factor < 0 or self.max_fe_factor < 1 or self.extended_cap_multiplier < 1:
            raise ValueError("budget factors must be positive")

    def init_samples(self, n):
        return self.init_factor * n

    def cap(self, n):
        base = self.max_fe_factor * n
        return base if self.init_in_cap else base + self.init_samples(n)

    def extended_cap(self, n):
        return self.extended_cap_multiplier * self.cap(n)


@dataclass(frozen=True)
class AlgorithmSpec:
    family: str = MLBO
    surrogate: str = GPR
    ea: str = "none"
    meta: MetaConfig | None = None
    xi: int = 1
    name: str | None = None
    acquisition: AcquisitionConfig = AcquisitionConfig()
    ea_config: EAConfig = EAConfig()
    acq_budget: int = 2000

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.surrogate not in (GPR, NN):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if self.family in BO_FAMILIES:
            if self.surrogate != GPR:
                raise ValueError(f"{self.family} needs a GPR surrogate (acquisition uses variance)")
            if self.ea != "none":
                raise ValueError(f"{self.family} does not use an EA")
        else:
            if self.ea not in ("CMAES", "PSO", "DE"):
                raise ValueError(f"{self.family} needs ea in CMAES/PSO/DE")
        if int(self.xi) != self.xi or self.xi < 1:
            raise ValueError("xi must be a positive integer")
        if self.surrogate == GPR and self.xi != 1:
            raise ValueError("GPR-based variants select exactly one solution (xi=1)")

    @property
    def meta_config(self):
        return self.meta if self.meta is not None else MetaConfig()

    @property
    def uses_meta(self):
        return self.family in META_FAMILIES

    @property
    def id(self):
        if self.name:
            return self.name
        if self.family in BO_FAMILIES:
            return self.family
        label = _EA_LABEL[self.ea]
        prefix = {MLDDEO: "ML", RDDEO: "RDDEO-", SAEA: ""}[self.family]
        return f"{prefix}{label}({self.surrogate})"

    def to_dict(self):
        d = asdict(self)
        d["meta"] = None if self.meta is None else asdict(self.meta)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("meta") is not None:
            d["meta"] = MetaConfig(**d["meta"])
        if "acquisition" in d:
            d["acquisition"] = AcquisitionConfig(**d["acquisition"])
        if "ea_config" in d:
            d["ea_config"] = EAConfig(**d["ea_config"])
        return cls(**d)


class CountingProblem:
    """The dynamic objective behind a counter: the only path to true evaluations."""

    def __init__(self, config: MpbConfig):
        self.config = config
        self.state = mpb_init(config)
        self.n_evals = 0

    @property
    def time_step(self):
        return self.state.time_step

    def evaluate(self, x):
        self.n_evals += 1
        return mpb_eval(self.state, x, self.config)

    def advance(self):
        self.state = mpb_advance(self.state, self.config)

    def global_optimum(self):
        return mpb_global_optimum(self.state)


@dataclass
class EnvRecord:
    t: int
    n_fe: int = 0
    best_x: list | None = None
    best_y: float | None = None
    optimum_x: list | None = None
    optimum_y: float | None = None
    fe_to_best: int | None = None
    train_size_at_start: int | None = None
    adapt_start_params: dict | None = None
    final_params: dict | None = None
    meta_trace: MetaTrace | None = None
    meta_archive_steps: list | None = None

    def to_dict(self):
        d = asdict(self)
        d["meta_trace"] = None if self.meta_trace is None else self.meta_trace.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("meta_trace") is not None:
            d["meta_trace"] = MetaTrace.from_dict(d["meta_trace"])
        return cls(**d)


@dataclass
class RunTrace:
    """Everything a run produced; the input to every metric."""

    algorithm: str
    seed: int
    n: int
    spec: dict
    problem: dict
    budget: dict
    env: list = field(default_factory=list)
    fe: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    best_so_far: list = field(default_factory=list)
    envs: list = field(default_factory=list)
    truncated: bool = False

    @property
    def num_environments(self):
        return len(self.envs)

    def env_fe_counts(self):
        return [e.n_fe for e in self.envs]

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("algorithm", "seed", "n", "spec", "problem", "budget")}
        d.update(
            env=list(self.env),
            fe=list(self.fe),
            x=[list(map(float, r)) for r in self.x],
            y=list(self.y),
            best_so_far=list(self.best_so_far),
            envs=[e.to_dict() for e in self.envs],
            truncated=self.truncated,
        )
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["envs"] = [EnvRecord.from_dict(e) for e in d["envs"]]
        return cls(**d)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def csv_rows(self):
        for e, f, y, b in zip(self.env, self.fe, self.y, self.best_so_far):
            yield [self.algorithm, self.seed, self.n, e, f, repr(float(y)), repr(float(b))]


CSV_HEADER = ["algo", "seed", "n", "env", "fe", "y_true", "best_so_far"]


class _Run:
    def __init__(self, problem: MpbConfig, spec: AlgorithmSpec, budget: BudgetPolicy, seed: int):
        self.spec, self.budget, self.seed = spec, budget, int(seed)
        self.problem = CountingProblem(problem)
        self.n = problem.dims
        self.bounds = (problem.lower, problem.upper)
        self.T = problem.num_environments
        self.cap = budget.cap(self.n)
        self.meta_cfg = spec.meta_config
        if spec.surrogate == GPR:
            self.theta0 = default_gpr_params()
        else:
            self.theta0 = init_mlp_params(self.n, np.random.default_rng([self.seed, _THETA0]))
        self.theta_ml = self.theta0
        self.theta = self.theta0
        self.archive = TaskArchive()
        self.history_X, self.history_y = [], []  # all environments, for CBO
        self.trace = RunTrace(
            spec.id, self.seed, self.n, spec.to_dict(), problem.to_dict(), asdict(budget)
        )
        self.meta_learn_calls = 0

    # -- environment bookkeeping -------------------------------------------------
    def _start_env(self, t):
        self.t = t
        self.rng = np.random.default_rng([self.seed, _DESIGN, t])
        self.X, self.Y = [], []
        self.fe_in_env = 0
        self.change_detected = True
        self.pop = None
        self.pop_X = None
        rec = EnvRecord(t)
        opt_x, opt_y = self.problem.global_optimum()
        rec.optimum_x, rec.optimum_y = opt_x.tolist(), opt_y
        self.trace.envs.append(rec)
        k = self.budget.init_samples(self.n)
        if k > self.cap:
            self.trace.truncated = True
            k = self.cap
        for x in latin_hypercube(k, *self.bounds, self.rng):
            self._evaluate(x)
        if self.spec.family in EA_FAMILIES:
            self.pop_X = self.rng.uniform(*self.bounds, size=(self.spec.ea_config.pop_size, self.n))

    def _evaluate(self, x):
        y = self.problem.evaluate(x)
        self.X.append(np.asarray(x, dtype=float))
        self.Y.append(y)
        self.fe_in_env += 1
        rec = self.trace.envs[-1]
        best = y if rec.best_y is None else max(rec.best_y, y)
        if rec.best_y is None or y > rec.best_y:
            rec.best_x, rec.best_y, rec.fe_to_best = list(map(float, x)), y, self.fe_in_env
        rec.n_fe = self.fe_in_env
        tr = self.trace
        tr.env.append(self.t)
        tr.fe.append(self.fe_in_env)
        tr.x.append(list(map(float, x)))
        tr.y.append(y)
        tr.best_so_far.append(best)

    def _finish_env(self):
        data = Dataset(np.array(self.X), np.array(self.Y), self.t)
        self.archive.append(data.normalized(self.bounds))
        self.history_X.extend(self.X)
        self.history_y.extend(self.Y)
        self.trace.envs[-1].final_params = self.theta.to_dict()

    def _change(self):
        self._finish_env()
        self.problem.advance()
        rec_steps = self.archive.time_steps
        if self.spec.uses_meta:
            self.theta_ml, mtrace = meta_learn(
                self.archive,
                self.meta_cfg,
                self.theta0,
                np.random.default_rng([self.seed, _META, self.t + 1]),
            )
            self.meta_learn_calls += 1
        elif self.spec.family == CBO:
            mtrace = None
        else:
            self.theta_ml, mtrace = self.theta0, None
        self._start_env(self.t + 1)
        self.trace.envs[-1].meta_trace = mtrace
        self.trace.envs[-1].meta_archive_steps = rec_steps if self.spec.uses_meta else None
        if self.spec.family == CBO:
            self.change_detected = False

    # -- one search iteration -------------------------------------------------------
    def _training_set(self):
        if self.spec.family == CBO:
            X = np.array(self.history_X + self.X)
            y = np.array(self.history_y + self.Y)
        else:
            X, y = np.array(self.X), np.array(self.Y)
        return Dataset(X, y, self.t).normalized(self.bounds)

    def _iterate(self):
        data = self._training_set()
        rec = self.trace.envs[-1]
        if rec.adapt_start_params is None:
            start = self.theta_ml if self.change_detected else self.theta
            rec.adapt_start_params = start.to_dict()
            rec.train_size_at_start = len(data)
        cfg = self.meta_cfg
        self.theta = adapt(
            data,
            self.theta_ml,
            self.theta,
            self.change_detected,
            lr=cfg.outer_lr_beta,
            max_iter=cfg.adapt_max_iter,
            tol=cfg.adapt_tol,
            optimizer=cfg.optimizer,
        )
        self.change_detected = False
        model = FittedSurrogate(self.theta, data)
        remaining = self.cap - self.fe_in_env
        spec = self.spec
        if spec.family in BO_FAMILIES:
            x = maximize_acquisition(
                model, spec.acquisition, self.bounds, spec.acq_budget, self.rng
            )
            self._evaluate(x)
            return

        def fitness(X):
            return ucb(model.predict(X), spec.acquisition.w)

        if self.pop is None:
            self.pop = init_population(
                spec.ea, self.bounds, fitness, self.rng, spec.ea_config, X=self.pop_X
            )
        else:
            self.pop = rescore(self.pop, fitness)
        Q = ea_step(self.pop, spec.ea, fitness, self.rng, self.bounds, spec.ea_config)
        picks = identify_promising(
            self.pop, Q, model, spec.acquisition, spec.xi, exclude=np.array(self.X)
        )
        for x in picks[:remaining]:
            self._evaluate(x)
        self.pop = environmental_selection(self.pop, Q, spec.ea, self.bounds)

    # -- drivers ---------------------------------------------------------------------
    def run(self, targets=None):
        """Run all environments; with ``targets``, also measure per-env FEs to reach them."""
        self.reached = []
        self._start_env(0)
        while True:
            if self.fe_in_env >= self.cap:
                if targets is not None:
                    self.reached.append(self._fe_to_target(targets[self.t]))
                if self.t + 1 >= self.T:
                    self.trace.envs[-1].final_params = self.theta.to_dict()
                    break
                self._change()
                continue
            self._iterate()
        return self.trace

    def _first_reach(self, target):
        rec_env = self.t
        for e, f, b in zip(self.trace.env, self.trace.fe, self.trace.best_so_far):
            if e == rec_env and b >= target:
                return f
        return None

    def _fe_to_target(self, target):
        hit = self._first_reach(target)
        if hit is not None:
            return hit
        ext_cap = self.budget.extended_cap(self.n)
        branch = copy.deepcopy(self)
        branch.cap = ext_cap
        while branch.fe_in_env < ext_cap:
            branch._iterate()
            hit = branch._first_reach(target)
            if hit is not None:
                return hit
        return ext_cap


def _check_family(spec, allowed):
    if spec.family not in allowed:
        raise ValueError(f"expected family in {allowed}, got {spec.family}")


def run(problem: MpbConfig, spec: AlgorithmSpec, budget=BudgetPolicy(), seed=0) -> RunTrace:
    return _Run(problem, spec, budget, seed).run()


def run_mlbo(problem, spec, budget=BudgetPolicy(), seed=0):
    _check_family(spec, (MLBO,))
    return run(problem, spec, budget, seed)


def run_mlddeo(problem, spec, budget=BudgetPolicy(), seed=0):
    _check_family(spec, (MLDDEO,))
    return run(problem, spec, budget, seed)


def run_baseline(problem, spec, budget=BudgetPolicy(), seed=0):
    _check_family(spec, (RBO, CBO, RDDEO, SAEA))
    return run(problem, spec, budget, seed)


def run_extended_budget(problem, spec, budget, target_values, seed=0, return_trace=False):
    """FEs the algorithm needs per environment to reach ``target_values``.

    The run follows its normal timeline (normal caps, so the history fed
    to meta-learning is unchanged); at the end of every environment where
    the target was not yet reached, a copy of the run keeps searching the
    same environment up to the extended cap. Unreached targets count as
    the extended cap. With ``return_trace`` the normal-budget trace is
    returned as well, as ``(counts, trace)``.
    """
    if len(target_values) != problem.num_environments:
        raise ValueError("need one target per environment")
    r = _Run(problem, spec, budget, seed)
    trace = r.run(targets=list(target_values))
    return (r.reached, trace) if return_trace else r.reached


class DynamicOptimizer(BaseEstimator):
    """Estimator facade: ``fit(problem_config)`` runs one seeded dynamic optimization.

    Constructor arguments mirror :class:`AlgorithmSpec`, flattened so that
    ``get_params``/``set_params`` can drive parameter sweeps.
    """

    def __init__(
        self,
        family=MLBO,
        surrogate=GPR,
        ea="none",
        xi=1,
        few_shot_K=5,
        inner_lr_alpha=0.01,
        outer_lr_beta=0.01,
        max_epochs=200,
        first_order=True,
        w=2.0,
        pop_size=20,
        init_factor=4,
        max_fe_factor=5,
        random_state=0,
    ):
        self.family = family
        self.surrogate = surrogate
        self.ea = ea
        self.xi = xi
        self.few_shot_K = few_shot_K
        self.inner_lr_alpha = inner_lr_alpha
        self.outer_lr_beta = outer_lr_beta
        self.max_epochs = max_epochs
        self.first_order = first_order
        self.w = w
        self.pop_size = pop_size
        self.init_factor = init_factor
        self.max_fe_factor = max_fe_factor
        self.random_state = random_state

    def to_spec(self):
        meta = MetaConfig(
            few_shot_K=self.few_shot_K,
            inner_lr_alpha=self.inner_lr_alpha,
            outer_lr_beta=self.outer_lr_beta,
            max_epochs=self.max_epochs,
            first_order=self.first_order,
        )
        return AlgorithmSpec(
            family=self.family,
            surrogate=self.surrogate,
            ea=self.ea,
            xi=self.xi,
            meta=meta,
            acquisition=AcquisitionConfig(w=self.w),
            ea_config=replace(EAConfig(), pop_size=self.pop_size),
        )

    def fit(self, problem: MpbConfig, y=None):
        budget = BudgetPolicy(self.init_factor, self.max_fe_factor)
        self.trace_ = run(problem, self.to_spec(), budget, self.random_state)
        self.best_ = [(e.best_x, e.best_y) for e in self.trace_.envs]
        return self
