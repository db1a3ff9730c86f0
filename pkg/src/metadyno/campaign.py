"""Experiment campaigns: algorithms x dimensions x seeds, persisted per cell.

A campaign directory holds one trace per cell under ``traces/``, budget
ratio counts under ``rho/`` (budget_ratio mode), the flat ``traces.csv``,
the analysis tables and ``manifest.json``. Completed cells are skipped on
rerun, so an interrupted campaign resumes where it stopped.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze, cell_filename, load_traces
from .engine import CSV_HEADER, EA_FAMILIES, AlgorithmSpec, BudgetPolicy, RunTrace, run, run_extended_budget
from .metalearn import MetaConfig
from .mpb import MpbConfig
from .optim import AcquisitionConfig, EAConfig
from .surrogates import GPR, NN

__all__ = [
    "MODES",
    "ConfigError",
    "CampaignConfig",
    "parse_config",
    "apply_preset",
    "derive_seed",
    "plan_cells",
    "run_campaign",
    "OUTPUT_ROOT_ENV",
]

log = logging.getLogger("metadyno.campaign")

OUTPUT_ROOT_ENV = "METADYNO_OUTPUT_ROOT"
MODES = ("ebbc", "budget_ratio", "sensitivity_K", "sensitivity_xi")
DEFAULT_SWEEPS = {"sensitivity_K": [1, 5, 15, 30, 50], "sensitivity_xi": [1, 5, 10]}
NN_DEFAULT_XI = 5
_PROBLEM_STREAM, _RUN_STREAM = 0, 1


class ConfigError(ValueError):
    """Invalid campaign configuration; the message starts with the offending key path."""


def _default_algorithms(mode):
    if mode == "sensitivity_K":
        return [AlgorithmSpec("MLBO", GPR)]
    if mode == "sensitivity_xi":
        return [AlgorithmSpec("MLDDEO", NN, ea="CMAES", xi=NN_DEFAULT_XI)]
    return [
        AlgorithmSpec("MLBO", GPR),
        AlgorithmSpec("RBO", GPR),
        AlgorithmSpec("CBO", GPR),
        AlgorithmSpec("MLDDEO", GPR, ea="DE"),
        AlgorithmSpec("RDDEO", GPR, ea="DE"),
    ]


@dataclass(frozen=True)
class CampaignConfig:
    problem: MpbConfig = MpbConfig()  # dims and seed are overridden per cell
    algorithms: tuple = ()
    dims: tuple = (4, 6, 8, 10)
    seeds: int = 20
    seed: int = 0
    mode: str = "ebbc"
    sweep: tuple = ()
    reference: str | None = None
    budget: BudgetPolicy = BudgetPolicy()
    output_dir: str = "campaign"
    parallelism: int = 1

    @property
    def reference_id(self):
        return self.reference or self.algorithms[0].id

    def to_dict(self):
        p = self.problem.to_dict()
        p.pop("dims")
        p.pop("seed")
        p["bounds"] = list(self.problem.bounds[0])
        return {
            "problem": p,
            "algorithms": [a.to_dict() for a in self.algorithms],
            "dims": list(self.dims),
            "seeds": self.seeds,
            "seed": self.seed,
            "mode": self.mode,
            "sweep": list(self.sweep),
            "reference": self.reference,
            "budget": dataclasses.asdict(self.budget),
            "output_dir": self.output_dir,
            "parallelism": self.parallelism,
        }

    def resolved_output_dir(self):
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


# -- parsing -----------------------------------------------------------------------
def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"{where}{unknown[0]}: unknown key")


def _build(cls, d, path, **extra):
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(d, names, path)
    try:
        return cls(**{**d, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _positive_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{path}: must be a positive integer, got {v!r}")
    return v


def _parse_algorithm(d, path):
    names = [f.name for f in dataclasses.fields(AlgorithmSpec)]
    _check_keys(d, names, path)
    d = dict(d)
    if "family" not in d:
        raise ConfigError(f"{path}.family: required")
    if "xi" in d:
        _positive_int(d["xi"], f"{path}.xi")
    elif d.get("surrogate") == NN and d["family"] in EA_FAMILIES:
        d["xi"] = NN_DEFAULT_XI
    if d.get("meta") is not None:
        d["meta"] = _build(MetaConfig, d["meta"], f"{path}.meta")
    if "acquisition" in d:
        d["acquisition"] = _build(AcquisitionConfig, d["acquisition"], f"{path}.acquisition")
    if "ea_config" in d:
        d["ea_config"] = _build(EAConfig, d["ea_config"], f"{path}.ea_config")
    try:
        return AlgorithmSpec(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _load(source):
    if isinstance(source, dict):
        return source
    text = str(source)
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<inline>: invalid JSON ({exc})") from None
    with open(text) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{text}: invalid JSON ({exc})") from None


def parse_config(source) -> CampaignConfig:
    """Validate a campaign config given as a path, inline JSON text, or a dict.

    Missing keys take the full-scale defaults; unknown keys are errors. A
    campaign manifest is accepted too, which reruns its config snapshot.
    """
    d = _load(source)
    if isinstance(d, dict) and d.get("kind") == "metadyno-manifest":
        d = d["config"]
    fields = [f.name for f in dataclasses.fields(CampaignConfig)]
    _check_keys(d, fields, "")
    out = {}

    mode = d.get("mode", "ebbc")
    if mode not in MODES:
        raise ConfigError(f"mode: must be one of {MODES}, got {mode!r}")
    out["mode"] = mode

    prob = dict(d.get("problem", {}))
    for k in ("dims", "seed"):
        if k in prob:
            raise ConfigError(f"problem.{k}: set per cell by the campaign, not configurable")
    if "bounds" in prob:
        b = prob["bounds"]
        if not (isinstance(b, list) and len(b) == 2):
            raise ConfigError("problem.bounds: must be a [lower, upper] pair")
        prob["bounds"] = tuple(b)
    out["problem"] = _build(MpbConfig, prob, "problem")

    if "algorithms" in d:
        algs = d["algorithms"]
        if not isinstance(algs, list) or not algs:
            raise ConfigError("algorithms: must be a non-empty list")
        out["algorithms"] = tuple(_parse_algorithm(a, f"algorithms[{i}]") for i, a in enumerate(algs))
    else:
        out["algorithms"] = tuple(_default_algorithms(mode))
    ids = [a.id for a in out["algorithms"]]
    if len(set(ids)) != len(ids):
        raise ConfigError("algorithms: duplicate algorithm ids; set 'name' to disambiguate")

    if "dims" in d:
        if not isinstance(d["dims"], list) or not d["dims"]:
            raise ConfigError("dims: must be a non-empty list")
        out["dims"] = tuple(_positive_int(v, f"dims[{i}]") for i, v in enumerate(d["dims"]))
    out["seeds"] = _positive_int(d.get("seeds", 20), "seeds")
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: must be a non-negative integer, got {seed!r}")
    out["seed"] = seed
    out["parallelism"] = _positive_int(d.get("parallelism", 1), "parallelism")
    if "output_dir" in d:
        if not isinstance(d["output_dir"], str) or not d["output_dir"]:
            raise ConfigError("output_dir: must be a non-empty string")
        out["output_dir"] = d["output_dir"]
    if "budget" in d:
        out["budget"] = _build(BudgetPolicy, d["budget"], "budget")

    sweep = d.get("sweep", DEFAULT_SWEEPS.get(mode, []))
    if not isinstance(sweep, list):
        raise ConfigError("sweep: must be a list")
    if mode in DEFAULT_SWEEPS:
        if not sweep:
            raise ConfigError("sweep: needs at least one value")
        sweep = [_positive_int(v, f"sweep[{i}]") for i, v in enumerate(sweep)]
        if mode == "sensitivity_K" and not all(a.uses_meta for a in out["algorithms"]):
            raise ConfigError("algorithms: a K sweep needs meta-learning algorithms (MLBO/MLDDEO)")
        if mode == "sensitivity_xi" and not all(a.surrogate == NN and a.family in EA_FAMILIES for a in out["algorithms"]):
            raise ConfigError("algorithms: a xi sweep needs network-assisted EA algorithms")
    elif sweep:
        raise ConfigError(f"sweep: only used by {tuple(DEFAULT_SWEEPS)}")
    out["sweep"] = tuple(sweep)

    ref = d.get("reference")
    if ref is not None:
        if mode != "budget_ratio":
            raise ConfigError("reference: only used in budget_ratio mode")
        if ref not in ids:
            raise ConfigError(f"reference: {ref!r} is not one of the algorithms {ids}")
    out["reference"] = ref
    return CampaignConfig(**out)


def apply_preset(config: CampaignConfig, preset: str) -> CampaignConfig:
    """``desk``: dimensions {4, 6}, 5 seeds, 10 environments."""
    if preset != "desk":
        raise ConfigError(f"preset: unknown preset {preset!r}")
    return replace(config, dims=(4, 6), seeds=5, problem=replace(config.problem, num_environments=10))


# -- cells ---------------------------------------------------------------------------
def derive_seed(campaign_seed, n, index, stream):
    """64-bit seed from a hash of (campaign seed, n, seed index, stream).

    The algorithm is deliberately not part of the hash: every algorithm
    meets the same problem instance and random stream for a given seed
    index, so comparisons across algorithms are paired.
    """
    ss = np.random.SeedSequence([int(campaign_seed), int(n), int(index), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _variants(config):
    if config.mode == "sensitivity_K":
        return [
            replace(a, meta=replace(a.meta_config, few_shot_K=k), name=f"{a.id}[K={k}]")
            for a in config.algorithms
            for k in config.sweep
        ]
    if config.mode == "sensitivity_xi":
        return [replace(a, xi=x, name=f"{a.id}[xi={x}]") for a in config.algorithms for x in config.sweep]
    return list(config.algorithms)


def plan_cells(config):
    """Every (algorithm, n, seed index) cell, in a fixed order."""
    cells = []
    for spec in _variants(config):
        for n in config.dims:
            for i in range(config.seeds):
                cells.append({"spec": spec, "n": n, "seed": i})
    return cells


def _atomic_json(path, obj):
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh)
    os.replace(tmp, path)


def _cell_problem(config, n, index):
    return replace(config.problem, dims=n, bounds=config.problem.bounds[0], seed=derive_seed(config.seed, n, index, _PROBLEM_STREAM))


def _execute(task):
    """Run one cell in a worker; returns ``(cell id, error or None, seconds)``."""
    config, cell, out, ref_path = task
    spec, n, i = cell["spec"], cell["n"], cell["seed"]
    name = cell_filename(spec.id, n, i)
    t0 = time.perf_counter()
    try:
        problem = _cell_problem(config, n, i)
        run_seed = derive_seed(config.seed, n, i, _RUN_STREAM)
        if ref_path is None:
            trace = run(problem, spec, config.budget, run_seed)
        else:
            ref = RunTrace.from_json(ref_path)
            targets = [e.best_y for e in ref.envs]
            ref_counts = [e.fe_to_best for e in ref.envs]
            counts, trace = run_extended_budget(problem, spec, config.budget, targets, run_seed, return_trace=True)
            rho = float(np.mean(np.asarray(counts, float) / np.asarray(ref_counts, float)))
            _atomic_json(
                Path(out, "rho", name),
                {"algo": spec.id, "n": n, "seed": i, "reference": ref.algorithm,
                 "peer_counts": counts, "reference_counts": ref_counts, "rho_c": rho},
            )
        _atomic_json(Path(out, "traces", name), trace.to_dict())
        return name, None, time.perf_counter() - t0
    except Exception as exc:  # isolate the cell, report, keep going
        return name, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


def _done(out, cell, needs_rho):
    name = cell_filename(cell["spec"].id, cell["n"], cell["seed"])
    ok = Path(out, "traces", name).exists()
    return ok and (not needs_rho or Path(out, "rho", name).exists())


def _run_tasks(tasks, parallelism):
    if parallelism <= 1 or len(tasks) <= 1:
        yield from map(_execute, tasks)
        return
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        yield from pool.map(_execute, tasks)


def _write_flat_csv(out):
    traces = load_traces(out)
    with open(Path(out, "traces.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for key, tr in sorted(traces.items()):
            for e, f, y, b in zip(tr.env, tr.fe, tr.y, tr.best_so_far):
                w.writerow([key.algo, key.seed, key.n, e, f, repr(float(y)), repr(float(b))])


def _versions():
    import scipy
    import sklearn

    return {
        "metadyno": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def run_campaign(config: CampaignConfig, parallelism=None):
    """Run every pending cell, then the analysis; returns ``(exit status, output dir)``.

    Failed cells are logged and recorded in the manifest; the rest of the
    campaign still runs, and the exit status is 1 if anything failed.
    """
    parallelism = parallelism or config.parallelism
    out = config.resolved_output_dir()
    for sub in ("traces", "rho"):
        Path(out, sub).mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    cells = plan_cells(config)
    ratio_mode = config.mode == "budget_ratio"
    ref_id = config.reference_id if ratio_mode else None
    first = [c for c in cells if not ratio_mode or c["spec"].id == ref_id]
    second = [c for c in cells if ratio_mode and c["spec"].id != ref_id]

    results, skipped = {}, 0
    pending = [c for c in first if not _done(out, c, False)]
    skipped += len(first) - len(pending)
    for name, err, secs in _run_tasks([(config, c, str(out), None) for c in pending], parallelism):
        results[name] = (err, secs)
        if err:
            log.error("cell %s failed: %s", name, err)

    if second:
        tasks = []
        for c in second:
            if _done(out, c, True):
                skipped += 1
                continue
            ref_path = Path(out, "traces", cell_filename(ref_id, c["n"], c["seed"]))
            if not ref_path.exists():
                name = cell_filename(c["spec"].id, c["n"], c["seed"])
                results[name] = ("reference trace missing", 0.0)
                log.error("cell %s skipped: reference trace missing", name)
                continue
            tasks.append((config, c, str(out), str(ref_path)))
        for name, err, secs in _run_tasks(tasks, parallelism):
            results[name] = (err, secs)
            if err:
                log.error("cell %s failed: %s", name, err)

    failed = {k: v[0] for k, v in results.items() if v[0]}
    log.info("%d cells run, %d reused, %d failed", len(results), skipped, len(failed))
    analysis_error = None
    try:
        _write_flat_csv(out)
        analyze(out)
    except Exception as exc:
        analysis_error = f"{type(exc).__name__}: {exc}"
        log.error("analysis failed: %s", analysis_error)

    manifest = {
        "kind": "metadyno-manifest",
        "config": config.to_dict(),
        "versions": _versions(),
        "cells": len(cells),
        "cells_run": sorted(results),
        "cells_reused": skipped,
        "failures": failed,
        "analysis_error": analysis_error,
        "timing": {
            "total_seconds": time.perf_counter() - t_start,
            "cell_seconds": {k: v[1] for k, v in sorted(results.items())},
        },
    }
    with open(Path(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    status = 1 if failed or analysis_error else 0
    return status, out
