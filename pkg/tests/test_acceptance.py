"""Acceptance checks, one test per criterion.

Each test prints a single ``CRITERION k: PASS|FAIL ...`` line (also echoed
in the terminal summary) before asserting. The campaign-backed criteria
(4 to 7) run fresh campaigns in a temporary directory; set
``METADYNO_ACCEPTANCE_DIR`` to keep them and reuse finished cells on the
next invocation (runtimes are then not meaningful and are reported as such).
"""
import csv
import itertools
import json
import os
import time
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from metadyno.analysis import a12, budget_ratio, e_bbc, load_traces, loss_curve, wilcoxon_signed_rank
from metadyno.campaign import apply_preset, parse_config, run_campaign
from metadyno.engine import AlgorithmSpec, BudgetPolicy, run
from metadyno.mpb import MpbConfig
from metadyno.surrogates import (
    GPR,
    NN,
    Dataset,
    SurrogateParams,
    gpr_loss,
    gpr_loss_grad,
    gpr_predict,
    mlp_param_count,
    nn_loss,
    nn_loss_grad,
)

from conftest import synthetic_trace
from oracles import central_diff, gp_direct, rel_err

RESULTS = []
REUSE_DIR = os.environ.get("METADYNO_ACCEPTANCE_DIR")


def verdict(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    if REUSE_DIR:
        Path(REUSE_DIR).mkdir(parents=True, exist_ok=True)
        return Path(REUSE_DIR)
    return tmp_path_factory.mktemp("acceptance")


def campaign(workdir, name, cfg, desk=False):
    config = parse_config(cfg)
    if desk:
        config = apply_preset(config, "desk")
    config = replace(config, output_dir=str(workdir / name))
    start = time.perf_counter()
    status, out = run_campaign(config)
    return status, out, time.perf_counter() - start


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def timing(elapsed, limit, *outs):
    reused = sum(json.loads((o / "manifest.json").read_text())["cells_reused"] for o in outs)
    if reused:
        return True, f"{elapsed:.0f}s ({reused} cells reused, limit {limit}s not checked)"
    return elapsed < limit, f"{elapsed:.0f}s (limit {limit}s)"


def ebbc_by(out):
    table = defaultdict(dict)
    for r in read(out / "metrics.csv"):
        table[(r["algo"], int(r["n"]))][int(r["seed"])] = float(r["e_bbc"])
    return table


# -- 1 --------------------------------------------------------------------------------
def _relu_pattern(values, n, X, hidden=(40, 40, 40)):
    """Signs of every hidden pre-activation, in the flat (fan_in, fan_out) + bias layout."""
    sizes, pos, h, signs = [n, *hidden], 0, X, []
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = values[pos : pos + a * b].reshape(a, b)
        bias = values[pos + a * b : pos + a * b + b]
        pos += a * b + b
        z = h @ W + bias
        signs.append(z > 0)
        h = np.maximum(z, 0.0)
    return np.concatenate([s.ravel() for s in signs])


def test_criterion_1_gradients():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst_gp = worst_nn = 0.0
    kinks = checked = 0
    for _ in range(20):
        n, N = int(rng.integers(1, 5)), int(rng.integers(2, 12))
        p = SurrogateParams(GPR, rng.uniform([-1.0, -1.0, -4.0], [0.5, 1.0, -1.0]))
        d = Dataset(rng.uniform(size=(N, n)), rng.normal(size=N))
        fd = central_diff(lambda v: gpr_loss(p.with_values(v), d), p.values.copy(), h=1e-5)
        worst_gp = max(worst_gp, rel_err(gpr_loss_grad(p, d), fd, floor=1e-6).max())
    for _ in range(20):
        n = int(rng.integers(1, 4))
        p = SurrogateParams(NN, rng.normal(0, 0.4, mlp_param_count(n)), n)
        d = Dataset(rng.uniform(size=(6, n)), rng.normal(size=6))
        fd = central_diff(lambda v: nn_loss(p.with_values(v), d), p.values.copy(), h=1e-5)
        err = rel_err(nn_loss_grad(p, d), fd, floor=1e-6)
        # a central difference straddling a ReLU kink measures no derivative at all
        for i in np.flatnonzero(err >= 1e-4):
            e = np.zeros_like(p.values)
            e[i] = 1e-5
            if not np.array_equal(_relu_pattern(p.values + e, n, d.X), _relu_pattern(p.values - e, n, d.X)):
                err[i], kinks = 0.0, kinks + 1
        checked += err.size
        worst_nn = max(worst_nn, err.max())
    elapsed = time.perf_counter() - start
    ok = worst_gp < 1e-4 and worst_nn < 1e-4 and elapsed < 10
    verdict(1, ok, f"max rel err GPR {worst_gp:.2e}, NN {worst_nn:.2e} (20 draws each; {checked} NN components, {kinks} excluded for straddling a ReLU kink); {elapsed:.1f}s")


# -- 2 --------------------------------------------------------------------------------
def _wilcoxon_brute(a, b):
    d = np.asarray(a) - np.asarray(b)
    d = d[d != 0]
    absd = np.abs(d)
    ranks = np.array([np.mean([1 + j for j, v in enumerate(np.sort(absd)) if v == x]) for x in absd])
    wp = ranks[d > 0].sum()
    stat = min(wp, ranks.sum() - wp)
    hits = sum(ranks[np.array(s, bool)].sum() <= stat + 1e-9 for s in itertools.product([0, 1], repeat=d.size))
    return min(1.0, 2 * hits / 2**d.size), wp


def test_criterion_2_oracles():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    gp_worst = 0.0
    for _ in range(20):
        p = SurrogateParams(GPR, rng.uniform([-1.0, -1.0, -4.0], [0.5, 1.0, -1.0]))
        d = Dataset(rng.uniform(size=(5, 2)), rng.normal(size=5))
        Xq = rng.uniform(size=(3, 2))
        nll, mean, var = gp_direct(p.values, d.X, d.y, Xq)
        pred = gpr_predict(p, d, Xq)
        gp_worst = max(gp_worst, rel_err(gpr_loss(p, d), nll), rel_err(pred.mean, mean).max(), rel_err(pred.variance, var).max())

    mismatches = []
    for s in range(20):
        tr = synthetic_trace(rng, T=5, per_env=7, seed=s)
        if e_bbc(tr) != sum(e.optimum_y - e.best_y for e in tr.envs) / len(tr.envs):
            mismatches.append("E_BBC")
        fe, L = loss_curve(tr)
        best, brute = -np.inf, []
        for i, y in enumerate(tr.y):
            if i > 0 and tr.env[i] != tr.env[i - 1]:
                best = -np.inf
            best = max(best, y)
            brute.append(tr.envs[tr.env[i]].optimum_y - best)
        if not (np.array_equal(L, brute) and np.array_equal(fe, np.arange(1, len(tr.y) + 1))):
            mismatches.append("loss_curve")
        peer = rng.integers(1, 40, size=5)
        ref = rng.integers(1, 40, size=5)
        if budget_ratio(peer, ref) != sum(p / r for p, r in zip(peer, ref)) / 5:
            mismatches.append("rho_c")
        a = rng.integers(0, 6, size=9).astype(float)
        b = rng.integers(0, 6, size=11).astype(float)
        brute_a12 = sum((x > y) + 0.5 * (x == y) for x in a for y in b) / (a.size * b.size)
        if a12(a, b) != brute_a12:
            mismatches.append("A12")
        u = rng.integers(0, 8, size=10).astype(float)
        v = rng.integers(0, 8, size=10).astype(float)
        if np.any(u != v):
            p, _, wp, _ = wilcoxon_signed_rank(u, v)
            bp, bwp = _wilcoxon_brute(u, v)
            if abs(p - bp) > 1e-12 or wp != bwp:
                mismatches.append("Wilcoxon")
    elapsed = time.perf_counter() - start
    ok = gp_worst < 1e-8 and not mismatches and elapsed < 30
    detail = f"GPR max rel err {gp_worst:.1e}; metric mismatches: {sorted(set(mismatches)) or 'none'}; {elapsed:.1f}s"
    verdict(2, ok, detail)


# -- 3 --------------------------------------------------------------------------------
def test_criterion_3_meta_loss_decreases():
    problem = MpbConfig(dims=1, num_environments=10, height_severity=7.0, shift_severity=5.0)
    spec = AlgorithmSpec(family="MLBO", surrogate="GPR")
    start = time.perf_counter()
    decreased, finite = 0, True
    for seed in range(20):
        tr = run(problem, spec, BudgetPolicy(), seed=seed)
        traces = [e.meta_trace for e in tr.envs if e.meta_trace is not None and len(e.meta_trace)]
        last = traces[-1]
        decreased += last.al_b[-1] < last.al_b[0]
        for m in traces:
            finite &= bool(np.all(np.isfinite(m.al_b)) and all(np.all(np.isfinite(p)) for p in m.mp_b))
    elapsed = time.perf_counter() - start
    ok = decreased >= 16 and finite and elapsed < 300
    detail = f"final AL_B < first AL_B in {decreased}/20 runs (last meta-learning call); MP_B finite: {finite}; {elapsed:.0f}s"
    verdict(3, ok, detail)


# -- 4 --------------------------------------------------------------------------------
@pytest.mark.slow
def test_criterion_4_framework_superiority(workdir):
    status, out, elapsed = campaign(workdir, "ebbc", {"mode": "ebbc"}, desk=True)
    assert status == 0
    table = ebbc_by(out)
    mean = {k: np.mean(list(v.values())) for k, v in table.items()}
    bo = [(n, base) for n in (4, 6) for base in ("RBO", "CBO") if mean[("MLBO", n)] < mean[(base, n)]]
    sade = [n for n in (4, 6) if mean[("MLSADE(GPR)", n)] < mean[("RDDEO-SADE(GPR)", n)]]
    t_ok, t_txt = timing(elapsed, 1800, out)
    ok = len(bo) >= 3 and len(sade) == 2 and t_ok
    cells = ", ".join(f"n={n} {a}={mean[(a, n)]:.2f}" for n in (4, 6) for a in ("MLBO", "RBO", "CBO", "MLSADE(GPR)", "RDDEO-SADE(GPR)"))
    verdict(4, ok, f"MLBO wins {len(bo)}/4 cells (need 3), MLSADE(GPR) wins {len(sade)}/2 (need 2); {cells}; {t_txt}")


# -- 5 --------------------------------------------------------------------------------
@pytest.mark.slow
def test_criterion_5_budget_ratio(workdir):
    cfg = {"mode": "budget_ratio", "algorithms": [{"family": "MLBO"}, {"family": "RBO"}], "reference": "MLBO"}
    status, out, elapsed = campaign(workdir, "rho", cfg, desk=True)
    assert status == 0
    per_dim = defaultdict(list)
    for r in read(out / "rho.csv"):
        if r["algo"] == "RBO":
            per_dim[int(r["n"])].append(float(r["rho_c"]))
    cells = {n: float(np.mean(v)) for n, v in sorted(per_dim.items())}
    t_ok, t_txt = timing(elapsed, 2700, out)
    ok = set(cells) == {4, 6} and min(cells.values()) >= 1.0 and np.mean(list(cells.values())) > 1.0 and t_ok
    txt = ", ".join(f"n={n}: {v:.3f}" for n, v in cells.items())
    verdict(5, ok, f"RBO rho_c vs MLBO (mean over seeds) {txt}; average {np.mean(list(cells.values())):.3f}; {t_txt}")


# -- 6 --------------------------------------------------------------------------------
@pytest.mark.slow
def test_criterion_6_sensitivity(workdir):
    sk, out_k, el_k = campaign(workdir, "sens_K", {"mode": "sensitivity_K", "dims": [8], "seeds": 5})
    sx, out_x, el_x = campaign(workdir, "sens_xi", {"mode": "sensitivity_xi", "dims": [8], "seeds": 5})
    tk, tx = ebbc_by(out_k), ebbc_by(out_x)
    k_labels = {f"MLBO[K={k}]" for k in (1, 5, 15, 30, 50)}
    x_labels = {f"MLSACMA-ES(NN)[xi={x}]" for x in (1, 5, 10)}
    complete = (
        sk == 0
        and sx == 0
        and {a for a, _ in tk} == k_labels
        and {a for a, _ in tx} == x_labels
        and all(len(v) == 5 for v in [*tk.values(), *tx.values()])
    )
    a12_pairs = {(r["algo_a"], r["algo_b"]) for r in read(out_k / "a12.csv")} | {
        (r["algo_a"], r["algo_b"]) for r in read(out_x / "a12.csv")
    }
    complete &= len(a12_pairs) == 10 + 3
    k1, k5 = tk[("MLBO[K=1]", 8)], tk[("MLBO[K=5]", 8)]
    not_better = sum(k1[s] >= k5[s] for s in k1)
    t_ok, t_txt = timing(el_k + el_x, 2700, out_k, out_x)
    ok = complete and not_better > len(k1) / 2 and t_ok
    means = ", ".join(f"{a}={np.mean(list(v.values())):.2f}" for (a, _), v in sorted(tk.items()))
    verdict(6, ok, f"sweeps complete: {complete}; n=8 K=1 not better than K=5 on {not_better}/{len(k1)} seeds; {means}; {t_txt}")


# -- 7 --------------------------------------------------------------------------------
@pytest.mark.slow
def test_criterion_7_determinism_and_accounting(workdir, tmp_path):
    cfg = {"dims": [4], "seeds": 2, "problem": {"num_environments": 10}}
    _, a, _ = campaign(tmp_path, "a", cfg)
    _, b, _ = campaign(tmp_path, "b", cfg)
    files = ("metrics.csv", "wilcoxon.csv", "a12.csv", "scott_knott.csv", "loss_curves.csv", "meta_trace.csv", "traces.csv")
    identical = all((a / f).read_bytes() == (b / f).read_bytes() for f in files)
    checked, bad = 0, []
    for out in (a, workdir / "ebbc", workdir / "sens_K", workdir / "sens_xi"):
        if not (out / "traces").is_dir():
            continue
        for key, tr in load_traces(out).items():
            checked += 1
            want = tr.problem["num_environments"] * 5 * tr.n
            if len(tr.y) != want or sum(tr.env_fe_counts()) != want:
                bad.append(str(key))
    ok = identical and checked > 0 and not bad
    verdict(7, ok, f"byte-identical CSVs across reruns: {identical}; FE = T*5n in {checked - len(bad)}/{checked} E_BBC-mode traces")


# -- 8 --------------------------------------------------------------------------------
def test_criterion_8_single_environment_identity():
    same, total = 0, 0
    for n in (2, 4):
        problem = MpbConfig(dims=n, num_environments=1)
        for seed in range(5):
            ml = run(problem, AlgorithmSpec(family="MLBO"), BudgetPolicy(), seed=seed)
            rb = run(problem, AlgorithmSpec(family="RBO"), BudgetPolicy(), seed=seed)
            total += 1
            same += bool(np.array_equal(ml.x, rb.x) and np.array_equal(ml.y, rb.y) and np.array_equal(ml.best_so_far, rb.best_so_far))
    verdict(8, same == total, f"T=1 MLBO and RBO traces identical for {same}/{total} (n, seed) pairs")
