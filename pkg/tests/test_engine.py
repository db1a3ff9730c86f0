from dataclasses import replace

import numpy as np
import pytest

import metadyno.engine as eng
from metadyno.analysis import e_bbc, loss_curve
from metadyno.engine import (
    AlgorithmSpec,
    BudgetPolicy,
    DynamicOptimizer,
    RunTrace,
    run,
    run_baseline,
    run_extended_budget,
    run_mlbo,
    run_mlddeo,
)
from metadyno.metalearn import MetaConfig
from metadyno.mpb import MpbConfig
from metadyno.optim import EAConfig
from metadyno.surrogates import default_gpr_params

FAST_META = MetaConfig(max_epochs=20)
MLBO = AlgorithmSpec("MLBO", "GPR", meta=FAST_META)
RBO = AlgorithmSpec("RBO", "GPR")
CBO = AlgorithmSpec("CBO", "GPR")
MLSADE = AlgorithmSpec("MLDDEO", "GPR", ea="DE", meta=FAST_META)
RDDEO = AlgorithmSpec("RDDEO", "GPR", ea="DE")


def problem(n=2, T=3, seed=0, **kw):
    return MpbConfig(dims=n, num_environments=T, seed=seed, **kw)


def test_spec_validation_and_ids():
    with pytest.raises(ValueError):
        AlgorithmSpec("MLBO", "NN")
    with pytest.raises(ValueError):
        AlgorithmSpec("RDDEO", "GPR")
    with pytest.raises(ValueError):
        AlgorithmSpec("MLDDEO", "GPR", ea="DE", xi=5)
    with pytest.raises(ValueError):
        AlgorithmSpec("MLDDEO", "NN", ea="CMAES", xi=0)
    assert MLSADE.id == "MLSADE(GPR)"
    assert RDDEO.id == "RDDEO-SADE(GPR)"
    assert AlgorithmSpec("SAEA-plain", "NN", ea="PSO", xi=5).id == "SAPSO(NN)"
    assert AlgorithmSpec.from_dict(MLSADE.to_dict()) == MLSADE


def test_budget_policy():
    b = BudgetPolicy()
    assert (b.init_samples(4), b.cap(4), b.extended_cap(4)) == (16, 20, 140)
    assert BudgetPolicy(init_in_cap=False).cap(4) == 36


@pytest.mark.parametrize("spec", [MLBO, RBO, CBO, MLSADE, RDDEO])
def test_fe_conservation_and_running_best(spec):
    tr = run(problem(n=2, T=3), spec, seed=1)
    assert tr.env_fe_counts() == [10, 10, 10]
    assert len(tr.y) == 30
    for t in range(3):
        ys = [y for e, y in zip(tr.env, tr.y) if e == t]
        best = [b for e, b in zip(tr.env, tr.best_so_far) if e == t]
        np.testing.assert_array_equal(best, np.maximum.accumulate(ys))
        assert tr.envs[t].best_y == max(ys)
    assert not tr.truncated


def test_n4_charges_exactly_5n_per_env():
    tr = run(problem(n=4, T=2), RBO, seed=0)
    assert tr.env_fe_counts() == [20, 20]


def test_counting_wrapper_is_the_only_fe_source(monkeypatch):
    counted = []
    real = eng.CountingProblem.evaluate

    def spy(self, x):
        counted.append(1)
        return real(self, x)

    monkeypatch.setattr(eng.CountingProblem, "evaluate", spy)
    tr = run(problem(n=2, T=2), MLSADE, seed=0)
    assert len(counted) == len(tr.y) == 20


def test_single_environment_meta_dormant(monkeypatch):
    calls = []
    monkeypatch.setattr(eng, "meta_learn", lambda *a, **k: calls.append(1))
    a = run_mlbo(problem(T=1), MLBO, seed=3)
    b = run_baseline(problem(T=1), RBO, seed=3)
    assert calls == []
    assert a.y == b.y and a.x == b.x


def test_meta_disabled_matches_restart():
    spec = replace(MLBO, meta=MetaConfig(max_epochs=0))
    a = run(problem(T=3), spec, seed=4)
    b = run(problem(T=3), RBO, seed=4)
    assert a.y == b.y


def test_deterministic():
    a = run(problem(T=2), MLSADE, seed=9)
    b = run(problem(T=2), MLSADE, seed=9)
    assert a.to_dict() == b.to_dict()


def test_meta_archive_holds_previous_environments():
    tr = run(problem(T=4), MLBO, seed=0)
    assert tr.envs[0].meta_archive_steps is None
    for t in range(1, 4):
        assert tr.envs[t].meta_archive_steps == list(range(t))
        assert tr.envs[t].meta_trace is not None


def test_cbo_accumulates_training_data():
    tr = run(problem(n=2, T=3), CBO, seed=0)
    for t, e in enumerate(tr.envs):
        # first adaptation happens right after the 4n design of env t
        assert e.train_size_at_start == 10 * t + 8


def test_restart_families_reset_to_defaults():
    tr = run(problem(T=3), RDDEO, seed=0)
    for e in tr.envs:
        assert e.adapt_start_params["values"] == default_gpr_params().to_dict()["values"]
    tr = run(problem(T=3), RBO, seed=0)
    for e in tr.envs[1:]:
        assert e.adapt_start_params["values"] == default_gpr_params().to_dict()["values"]


def test_mlbo_starts_from_meta_parameters():
    tr = run(problem(T=3), MLBO, seed=0)
    for e in tr.envs[1:]:
        assert e.adapt_start_params["values"] == pytest.approx(list(e.meta_trace.mp_b[-1]))


def test_nn_batch_truncated_to_budget(monkeypatch):
    spec = AlgorithmSpec("MLDDEO", "NN", ea="CMAES", xi=5, meta=MetaConfig(max_epochs=3))
    iters = []
    real = eng._Run._iterate
    monkeypatch.setattr(eng._Run, "_iterate", lambda self: iters.append(self.t) or real(self))
    tr = run(problem(n=4, T=2), spec, seed=0)
    assert tr.env_fe_counts() == [20, 20]
    assert iters == [0, 1]  # one batch iteration per environment, 4 of its 5 picks evaluated


def test_null_de_only_evaluates_initial_population(monkeypatch):
    spec = AlgorithmSpec("RDDEO", "GPR", ea="DE", ea_config=EAConfig(de_F=0.0, de_CR=0.0))
    pops = []
    real = eng.init_population

    def spy(kind, bounds, fitness, rng, config, X=None):
        pops.append(np.array(X))
        return real(kind, bounds, fitness, rng, config, X=X)

    monkeypatch.setattr(eng, "init_population", spy)
    tr = run(problem(n=2, T=2), spec, seed=2)
    for t in range(2):
        init = {tuple(r) for r in pops[t]}
        picked = [tuple(x) for e, f, x in zip(tr.env, tr.fe, tr.x) if e == t and f > 8]
        assert picked and all(p in init for p in picked)


def test_mlddeo_requires_family():
    with pytest.raises(ValueError):
        run_mlddeo(problem(), RBO)
    with pytest.raises(ValueError):
        run_mlbo(problem(), RBO)


def test_extended_budget_rules():
    p = problem(n=2, T=3)
    ref = run(p, RBO, seed=5)
    own = run_extended_budget(p, RBO, BudgetPolicy(), [e.best_y for e in ref.envs], seed=5)
    assert own == [e.fe_to_best for e in ref.envs]
    assert run_extended_budget(p, RBO, BudgetPolicy(), [-1e9] * 3, seed=5) == [1, 1, 1]
    assert run_extended_budget(p, RBO, BudgetPolicy(), [1e9] * 3, seed=5) == [70, 70, 70]
    with pytest.raises(ValueError):
        run_extended_budget(p, RBO, BudgetPolicy(), [0.0], seed=5)


def test_extended_branch_leaves_timeline_unchanged():
    p = problem(n=2, T=3)
    plain = run(p, MLBO, seed=1)
    _, tr = run_extended_budget(p, MLBO, BudgetPolicy(), [1e9] * 3, seed=1, return_trace=True)
    assert tr.y == plain.y


@pytest.mark.xfail(
    strict=True,
    reason="measured 15/20 (restart baseline: 14/20); the design draw dominates the 2 search steps at n=2",
)
def test_warm_start_on_static_landscape():
    still = dict(height_severity=0.0, shift_severity=0.0, width_severity=0.0)
    wins = 0
    for s in range(20):
        tr = run(problem(n=2, T=3, seed=100 + s, **still), AlgorithmSpec("MLBO", "GPR"), seed=s)
        wins += tr.envs[2].best_y >= tr.envs[0].best_y
    assert wins >= 16


def test_trace_round_trip(tmp_path):
    tr = run(problem(T=2), MLBO, seed=0)
    tr.to_json(tmp_path / "t.json")
    back = RunTrace.from_json(tmp_path / "t.json")
    assert e_bbc(back) == e_bbc(tr)
    np.testing.assert_array_equal(loss_curve(back)[1], loss_curve(tr)[1])
    rows = list(back.csv_rows())
    assert len(rows) == 20 and rows[0][:3] == ["MLBO", 0, 2]


def test_truncated_design_flagged():
    tr = run(problem(n=2, T=1), RBO, BudgetPolicy(init_factor=6, max_fe_factor=5), seed=0)
    assert tr.truncated and tr.env_fe_counts() == [10]


def test_dynamic_optimizer_estimator():
    est = DynamicOptimizer(family="RBO", random_state=3)
    assert est.get_params()["family"] == "RBO"
    est.set_params(w=1.0)
    est.fit(problem(T=2))
    assert len(est.best_) == 2
    assert est.trace_.spec["acquisition"]["w"] == 1.0
