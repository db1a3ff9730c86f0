"""Turn a directory of persisted traces into comparison tables.

Layout read::

    <dir>/traces/<slug>__n<n>__s<idx>.json    one RunTrace per cell
    <dir>/rho/<slug>__n<n>__s<idx>.json       budget-ratio counts (optional)

Layout written (all under ``<dir>``): metrics.csv, wilcoxon.csv, a12.csv,
scott_knott.csv, loss_curves.csv, meta_trace.csv, rho.csv (when ratio
files exist) and schema.json describing every column.
"""
from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from ..engine import RunTrace
from .metrics import env_errors, loss_curve
from .stats import a12, a12_class, scott_knott, wilcoxon_signed_rank

__all__ = ["CellKey", "MetricTable", "load_traces", "load_ratios", "build_metric_table", "analyze", "SCHEMA", "cell_filename"]

_NAME = re.compile(r"^(?P<slug>.+)__n(?P<n>\d+)__s(?P<idx>\d+)\.json$")
MIN_PAIRS = 5

SCHEMA = {
    "metrics.csv": {
        "algo": "algorithm label",
        "n": "problem dimension",
        "seed": "seed index within the campaign (pairs runs across algorithms)",
        "e_bbc": "best error before change, mean over environments (lower is better)",
        "rho_c": "budget ratio against the reference algorithm; empty outside budget_ratio mode",
        "env_errors": "per-environment error, ';'-separated in environment order",
    },
    "wilcoxon.csv": {
        "n": "problem dimension",
        "algo_a": "first algorithm",
        "algo_b": "second algorithm",
        "pairs": "number of seed-paired E_BBC values",
        "w_plus": "sum of ranks where algo_a has larger E_BBC",
        "w_minus": "sum of ranks where algo_a has smaller E_BBC",
        "p": "two-sided p-value; empty when fewer than 5 pairs",
        "verdict": "win/tie/loss for algo_a at level 0.05 (lower E_BBC wins); n/a when untested",
        "zero_handling": "zero differences are dropped before ranking (no Pratt correction)",
    },
    "a12.csv": {
        "n": "problem dimension",
        "algo_a": "first algorithm",
        "algo_b": "second algorithm",
        "a12": "P(E_BBC_a > E_BBC_b) + 0.5 P(equal); below 0.5 favours algo_a",
        "effect": "equivalent/small/medium/large by |a12-0.5| thresholds 0.06/0.14/0.21",
    },
    "scott_knott.csv": {
        "scope": "problem dimension, or 'pooled' for the summary over dimensions",
        "algo": "algorithm label",
        "mean_e_bbc": "mean E_BBC over seeds (pooled: mean over dimensions of those means)",
        "rank": "Scott-Knott cluster rank, 1 = best (pooled: mean of per-dimension ranks)",
        "rank_kind": "scott_knott or mean_over_dims",
    },
    "loss_curves.csv": {
        "algo": "algorithm label",
        "n": "problem dimension",
        "seed": "seed index",
        "fe": "global true-evaluation index, starting at 1",
        "L": "optimum minus within-environment best-so-far",
    },
    "meta_trace.csv": {
        "algo": "algorithm label",
        "n": "problem dimension",
        "seed": "seed index",
        "env": "environment whose start triggered meta-learning",
        "batch": "meta-update index",
        "AL_B": "running mean of the meta-loss up to this batch",
        "meta_loss": "meta-loss of this batch",
        "param": "parameter name (log-space GP hyperparameters, or param_norm for networks)",
        "value": "parameter value after this batch",
    },
    "rho.csv": {
        "algo": "peer algorithm",
        "n": "problem dimension",
        "seed": "seed index",
        "reference": "reference algorithm",
        "rho_c": "mean over environments of peer FEs / reference FEs",
        "peer_counts": "';'-separated FEs the peer needed per environment (capped at the extended cap)",
        "reference_counts": "';'-separated FEs the reference needed to reach its own best",
    },
}


def slugify(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=+-]+", "_", label).strip("_")


def cell_filename(label, n, idx):
    return f"{slugify(label)}__n{int(n)}__s{int(idx):03d}.json"


@dataclass(frozen=True, order=True)
class CellKey:
    n: int
    algo: str
    seed: int


@dataclass
class MetricTable:
    """E_BBC, budget ratio and per-environment errors keyed by (algorithm, n, seed)."""

    rows: dict = field(default_factory=dict)

    def algorithms(self, n=None):
        seen = []
        for k in sorted(self.rows):
            if (n is None or k.n == n) and k.algo not in seen:
                seen.append(k.algo)
        return seen

    def dims(self):
        return sorted({k.n for k in self.rows})

    def values(self, algo, n, metric="e_bbc"):
        """``{seed: value}`` for one algorithm and dimension."""
        return {k.seed: r[metric] for k, r in self.rows.items() if k.algo == algo and k.n == n and r.get(metric) is not None}


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _seed_index(path):
    m = _NAME.match(Path(path).name)
    if m is None:
        raise ValueError(f"unexpected cell file name: {path}")
    return int(m.group("idx"))


def load_traces(directory):
    """``{CellKey: RunTrace}`` for every trace file under ``directory/traces``."""
    out = {}
    for p in sorted(Path(directory, "traces").glob("*.json")):
        tr = RunTrace.from_json(p)
        out[CellKey(int(tr.n), tr.algorithm, _seed_index(p))] = tr
    return out


def load_ratios(directory):
    out = {}
    for p in sorted(Path(directory, "rho").glob("*.json")):
        with open(p) as fh:
            d = json.load(fh)
        out[CellKey(int(d["n"]), d["algo"], int(d["seed"]))] = d
    return out


def build_metric_table(traces, ratios=None):
    table = MetricTable()
    ratios = ratios or {}
    for key, tr in traces.items():
        errs = env_errors(tr)
        rho = ratios.get(key)
        table.rows[key] = {
            "e_bbc": float(np.mean(errs)),
            "rho_c": None if rho is None else float(rho["rho_c"]),
            "env_errors": errs,
        }
    return table


def _paired(table, a, b, n):
    va, vb = table.values(a, n), table.values(b, n)
    seeds = sorted(set(va) & set(vb))
    return np.array([va[s] for s in seeds]), np.array([vb[s] for s in seeds])


def pairwise_rows(table):
    """Wilcoxon and A12 rows for every algorithm pair within each dimension."""
    wil, eff = [], []
    for n in table.dims():
        for a, b in combinations(table.algorithms(n), 2):
            xa, xb = _paired(table, a, b, n)
            if xa.size >= MIN_PAIRS:
                p, verdict, wp, wm = wilcoxon_signed_rank(xa, xb)
            else:
                p, verdict, wp, wm = None, "n/a", None, None
            wil.append([n, a, b, xa.size, wp, wm, p, verdict, "dropped"])
            if xa.size:
                v = a12(xa, xb)
                eff.append([n, a, b, v, a12_class(v)])
    return wil, eff


def scott_knott_rows(table):
    rows, per_algo = [], defaultdict(list)
    means = defaultdict(list)
    for n in table.dims():
        groups = {a: list(table.values(a, n).values()) for a in table.algorithms(n)}
        ranks = scott_knott(groups)
        for a in sorted(groups, key=lambda g: (ranks[g], g)):
            m = float(np.mean(groups[a]))
            rows.append([n, a, m, ranks[a], "scott_knott"])
            per_algo[a].append(ranks[a])
            means[a].append(m)
    for a in sorted(per_algo, key=lambda g: (np.mean(per_algo[g]), g)):
        rows.append(["pooled", a, float(np.mean(means[a])), float(np.mean(per_algo[a])), "mean_over_dims"])
    return rows


def analyze(directory):
    """Recompute every table from the traces on disk; returns the MetricTable."""
    directory = Path(directory)
    traces = load_traces(directory)
    if not traces:
        raise FileNotFoundError(f"no traces under {directory / 'traces'}")
    ratios = load_ratios(directory)
    table = build_metric_table(traces, ratios)

    _write_csv(
        directory / "metrics.csv",
        list(SCHEMA["metrics.csv"]),
        (
            [k.algo, k.n, k.seed, r["e_bbc"], r["rho_c"], ";".join(repr(float(e)) for e in r["env_errors"])]
            for k, r in sorted(table.rows.items())
        ),
    )
    wil, eff = pairwise_rows(table)
    _write_csv(directory / "wilcoxon.csv", list(SCHEMA["wilcoxon.csv"]), wil)
    _write_csv(directory / "a12.csv", list(SCHEMA["a12.csv"]), eff)
    _write_csv(directory / "scott_knott.csv", list(SCHEMA["scott_knott.csv"]), scott_knott_rows(table))

    def curves():
        for k, tr in sorted(traces.items()):
            fe, loss = loss_curve(tr)
            for f, L in zip(fe, loss):
                yield [k.algo, k.n, k.seed, int(f), float(L)]

    _write_csv(directory / "loss_curves.csv", list(SCHEMA["loss_curves.csv"]), curves())

    def meta_rows():
        for k, tr in sorted(traces.items()):
            for e in tr.envs:
                mt = e.meta_trace
                if mt is None:
                    continue
                for b, al, loss, p in zip(mt.batches, mt.al_b, mt.meta_losses, mt.mp_b):
                    for name, v in zip(mt.param_names, np.ravel(p)):
                        yield [k.algo, k.n, k.seed, e.t, b, al, loss, name, float(v)]

    _write_csv(directory / "meta_trace.csv", list(SCHEMA["meta_trace.csv"]), meta_rows())

    schema = {k: v for k, v in SCHEMA.items() if k != "rho.csv" or ratios}
    if ratios:
        _write_csv(
            directory / "rho.csv",
            list(SCHEMA["rho.csv"]),
            (
                [k.algo, k.n, k.seed, d["reference"], d["rho_c"],
                 ";".join(str(c) for c in d["peer_counts"]), ";".join(str(c) for c in d["reference_counts"])]
                for k, d in sorted(ratios.items())
            ),
        )
    with open(directory / "schema.json", "w") as fh:
        json.dump(schema, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return table
