"""Single-generation steps of CMA-ES, PSO and DE on surrogate fitness.

Fitness is maximized. None of these functions see the true objective:
they only call the ``fitness`` callback, which the engine binds to the
current surrogate. A generation is ``ea_step`` (make offspring ``Q``)
followed by ``environmental_selection`` (build the next parents from
``P`` and ``Q``).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..surrogates import GPR
from .acquisition import ucb

CMAES, PSO, DE = "CMAES", "PSO", "DE"
EA_KINDS = (CMAES, PSO, DE)


@dataclass(frozen=True)
class EAConfig:
    pop_size: int = 20
    cma_sigma0: float = 0.3  # fraction of the box width
    pso_inertia: float = 0.729
    pso_c1: float = 1.49445
    pso_c2: float = 1.49445
    de_F: float = 0.5
    de_CR: float = 0.9

    def __post_init__(self):
        if self.pop_size < 4:
            raise ValueError("population size must be at least 4")
        if not 0 <= self.de_CR <= 1:
            raise ValueError("DE crossover rate must lie in [0, 1]")


@dataclass
class Population:
    X: np.ndarray
    fitness: np.ndarray
    kind: str
    state: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]


def _bounds(bounds):
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    return lo, hi


def _cma_constants(n, lam):
    mu = lam // 2
    w = np.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / np.sum(w * w)
    cs = (mueff + 2) / (n + mueff + 5)
    ds = 1 + 2 * max(0.0, np.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    chin = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
    return dict(mu=mu, w=w, mueff=mueff, cs=cs, ds=ds, cc=cc, c1=c1, cmu=cmu, chin=chin)


def init_population(kind, bounds, fitness, rng, config=EAConfig(), X=None):
    """Uniform random parents in the box plus fresh strategy state."""
    if kind not in EA_KINDS:
        raise ValueError(f"unknown EA kind {kind!r}")
    lo, hi = _bounds(bounds)
    n = lo.size
    if X is None:
        X = rng.uniform(lo, hi, size=(config.pop_size, n))
    X = np.asarray(X, dtype=float)
    f = np.asarray(fitness(X), dtype=float)
    state = {}
    if kind == CMAES:
        best = int(np.argmax(f))
        state = dict(
            mean=(X[best] - lo) / (hi - lo),
            sigma=config.cma_sigma0,
            C=np.eye(n),
            pc=np.zeros(n),
            ps=np.zeros(n),
            gen=0,
        )
    elif kind == PSO:
        state = dict(V=np.zeros_like(X), pbest_X=X.copy(), pbest_f=f.copy())
    return Population(X, f, kind, state)


def rescore(pop, fitness):
    """Re-evaluate parents (and PSO personal bests) under a refitted surrogate."""
    state = dict(pop.state)
    if pop.kind == PSO:
        state["pbest_f"] = np.asarray(fitness(state["pbest_X"]), dtype=float)
    return Population(pop.X, np.asarray(fitness(pop.X), dtype=float), pop.kind, state)


def _cma_sample(pop, lo, hi, rng, lam):
    st = pop.state
    n = lo.size
    vals, B = np.linalg.eigh(st["C"])
    D = np.sqrt(np.maximum(vals, 1e-20))
    Z = rng.standard_normal((lam, n))
    U = st["mean"] + st["sigma"] * (Z * D) @ B.T
    U = np.clip(U, 0.0, 1.0)
    return lo + U * (hi - lo)


def _pso_move(pop, lo, hi, rng, cfg):
    st = pop.state
    g = st["pbest_X"][int(np.argmax(st["pbest_f"]))]
    r1 = rng.uniform(size=pop.X.shape)
    r2 = rng.uniform(size=pop.X.shape)
    V = (
        cfg.pso_inertia * st["V"]
        + cfg.pso_c1 * r1 * (st["pbest_X"] - pop.X)
        + cfg.pso_c2 * r2 * (g - pop.X)
    )
    span = hi - lo
    V = np.clip(V, -span, span)
    return np.clip(pop.X + V, lo, hi), V


def _de_trials(pop, lo, hi, rng, cfg):
    N, n = pop.X.shape
    trials = pop.X.copy()
    for i in range(N):
        r1, r2, r3 = rng.choice([j for j in range(N) if j != i], 3, replace=False)
        mutant = pop.X[r1] + cfg.de_F * (pop.X[r2] - pop.X[r3])
        cross = rng.uniform(size=n) < cfg.de_CR
        if cfg.de_CR > 0:
            cross[rng.integers(n)] = True
        trials[i] = np.where(cross, mutant, pop.X[i])
    return np.clip(trials, lo, hi)


def ea_step(pop, kind, fitness, rng, bounds, config=EAConfig()):
    """Produce one offspring population ``Q`` of the same size as ``pop``."""
    if kind != pop.kind:
        raise ValueError(f"population was built for {pop.kind}, not {kind}")
    lo, hi = _bounds(bounds)
    state = {}
    if kind == CMAES:
        Q = _cma_sample(pop, lo, hi, rng, len(pop))
    elif kind == PSO:
        Q, V = _pso_move(pop, lo, hi, rng, config)
        state = {"V": V}
    else:
        Q = _de_trials(pop, lo, hi, rng, config)
    return Population(Q, np.asarray(fitness(Q), dtype=float), kind, state)


def _cma_update(parents, offspring, lo, hi):
    st = dict(parents.state)
    n = lo.size
    lam = len(offspring)
    k = _cma_constants(n, lam)
    order = np.argsort(-offspring.fitness, kind="stable")[: k["mu"]]
    U = (offspring.X[order] - lo) / (hi - lo)
    mean, sigma, C = st["mean"], st["sigma"], st["C"]
    Y = (U - mean) / sigma
    yw = k["w"] @ Y
    new_mean = mean + sigma * yw

    vals, B = np.linalg.eigh(C)
    vals = np.maximum(vals, 1e-20)
    C_inv_sqrt = B @ np.diag(vals**-0.5) @ B.T
    cs, cc, c1, cmu, mueff = k["cs"], k["cc"], k["c1"], k["cmu"], k["mueff"]
    ps = (1 - cs) * st["ps"] + np.sqrt(cs * (2 - cs) * mueff) * C_inv_sqrt @ yw
    gen = st["gen"] + 1
    hsig = np.linalg.norm(ps) / np.sqrt(1 - (1 - cs) ** (2 * gen)) < (1.4 + 2 / (n + 1)) * k["chin"]
    pc = (1 - cc) * st["pc"] + hsig * np.sqrt(cc * (2 - cc) * mueff) * yw
    rank_mu = (Y * k["w"][:, None]).T @ Y
    C = (
        (1 - c1 - cmu) * C
        + c1 * (np.outer(pc, pc) + (1 - hsig) * cc * (2 - cc) * C)
        + cmu * rank_mu
    )
    C = 0.5 * (C + C.T)
    sigma = sigma * np.exp((cs / k["ds"]) * (np.linalg.norm(ps) / k["chin"] - 1))
    sigma = float(min(sigma, 1.0))
    st.update(mean=new_mean, sigma=sigma, C=C, pc=pc, ps=ps, gen=gen)
    return Population(offspring.X.copy(), offspring.fitness.copy(), CMAES, st)


def environmental_selection(parents, offspring, kind, bounds=None):
    """Next parent population from ``P`` and ``Q``; size stays ``N``.

    CMA-ES updates its distribution from the best half of ``Q`` (``bounds``
    required) and keeps ``Q`` as the new parents; PSO moves to ``Q`` and
    updates personal bests; DE keeps the better of each parent/trial pair,
    with ties going to the trial.
    """
    if len(parents) != len(offspring):
        raise ValueError("parents and offspring must have the same size")
    if kind == CMAES:
        lo, hi = _bounds(bounds)
        return _cma_update(parents, offspring, lo, hi)
    if kind == PSO:
        st = dict(parents.state)
        better = offspring.fitness > st["pbest_f"]
        st["pbest_X"] = np.where(better[:, None], offspring.X, st["pbest_X"])
        st["pbest_f"] = np.where(better, offspring.fitness, st["pbest_f"])
        st["V"] = offspring.state["V"]
        return Population(offspring.X.copy(), offspring.fitness.copy(), PSO, st)
    if kind == DE:
        take = offspring.fitness >= parents.fitness
        X = np.where(take[:, None], offspring.X, parents.X)
        f = np.where(take, offspring.fitness, parents.fitness)
        return replace(parents, X=X, fitness=f)
    raise ValueError(f"unknown EA kind {kind!r}")


def identify_promising(parents, offspring, model, acq, xi, exclude=None):
    """Pick the points of ``P u Q`` that get true evaluations.

    GPR: the single UCB maximizer (``xi`` must be 1). NN: the ``xi`` best
    predicted means, coordinate duplicates collapsed. Rows listed in
    ``exclude`` (already evaluated points) are skipped while alternatives
    remain.
    """
    cands = np.vstack([parents.X, offspring.X])
    if xi < 1 or xi > cands.shape[0]:
        raise ValueError(f"xi must lie in [1, {cands.shape[0]}], got {xi}")
    pred = model.predict(cands)
    if model.kind == GPR:
        if xi != 1:
            raise ValueError("GPR-based selection picks exactly one solution")
        score = ucb(pred, acq.w)
    else:
        score = np.asarray(pred.mean)
    order = np.argsort(-score, kind="stable")
    seen = set()
    ranked = []
    for i in order:
        key = cands[i].tobytes()
        if key not in seen:
            seen.add(key)
            ranked.append(cands[i])
    if exclude is not None and len(exclude):
        done = {np.asarray(r, dtype=float).tobytes() for r in exclude}
        fresh = [x for x in ranked if x.tobytes() not in done]
        if fresh:
            ranked = fresh
    return [x.copy() for x in ranked[:xi]]
