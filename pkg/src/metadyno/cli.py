"""Command-line entry point: ``metadyno run | report | analyze``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import analyze
from .campaign import OUTPUT_ROOT_ENV, ConfigError, apply_preset, parse_config, run_campaign

__all__ = ["main", "report"]

REPORT_FILES = ("metrics.csv", "wilcoxon.csv", "a12.csv", "scott_knott.csv")


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(directory, out=None, err=None):
    """Print the campaign summary; returns 0, or 1 when artifacts are missing."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    directory = Path(directory)
    missing = [f for f in REPORT_FILES if not (directory / f).exists()]
    for f in missing:
        print(f"missing artifact: {directory / f}", file=err)
    if "metrics.csv" in missing:
        return 1

    by_cell = defaultdict(list)
    for r in _read(directory / "metrics.csv"):
        by_cell[(int(r["n"]), r["algo"])].append(float(r["e_bbc"]))
    algos = sorted({a for _, a in by_cell})
    width = max(len(a) for a in algos)
    print("E_BBC (mean ± std over seeds, lower is better)", file=out)
    for n in sorted({n for n, _ in by_cell}):
        print(f"\nn = {n}", file=out)
        for a in algos:
            v = by_cell.get((n, a))
            if v:
                print(f"  {a:<{width}}  {np.mean(v):12.4f} ± {np.std(v):.4f}  ({len(v)} seeds)", file=out)

    if "scott_knott.csv" not in missing:
        print("\nScott-Knott ranks (1 = best)", file=out)
        for r in _read(directory / "scott_knott.csv"):
            print(f"  {r['scope']:>6}  {r['algo']:<{width}}  {r['rank']}", file=out)

    if len(algos) > 1 and "wilcoxon.csv" not in missing:
        effects = {}
        if "a12.csv" not in missing:
            effects = {(r["n"], r["algo_a"], r["algo_b"]): (r["a12"], r["effect"]) for r in _read(directory / "a12.csv")}
        print("\nPairwise comparisons (verdict for the first algorithm)", file=out)
        for r in _read(directory / "wilcoxon.csv"):
            a12v, eff = effects.get((r["n"], r["algo_a"], r["algo_b"]), ("", ""))
            p = f"{float(r['p']):.4g}" if r["p"] else "-"
            a12s = f"{float(a12v):.3f}" if a12v else "-"
            print(
                f"  n={r['n']:<3} {r['algo_a']} vs {r['algo_b']}: {r['verdict']} (p={p}), A12={a12s} {eff}",
                file=out,
            )

    if (directory / "rho.csv").exists():
        rho = defaultdict(list)
        for r in _read(directory / "rho.csv"):
            rho[(int(r["n"]), r["algo"], r["reference"])].append(float(r["rho_c"]))
        print("\nBudget ratio rho_c (mean over seeds; >1 means more evaluations than the reference)", file=out)
        for (n, a, ref), v in sorted(rho.items()):
            print(f"  n={n:<3} {a} vs {ref}: {np.mean(v):.4f}", file=out)
    return 1 if missing else 0


def _build_parser():
    p = argparse.ArgumentParser(prog="metadyno", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a campaign (resumes if artifacts exist)")
    r.add_argument("--config", required=True, help="JSON file, inline JSON object, or a campaign manifest")
    r.add_argument("--preset", choices=["desk"], help="desk: n in {4, 6}, 5 seeds, T=10")
    r.add_argument("--parallelism", type=int, help="worker processes")
    r.add_argument("--output-dir", help=f"output directory (relative paths go under ${OUTPUT_ROOT_ENV} if set)")

    for name, text in (("report", "print a campaign summary"), ("analyze", "recompute tables from traces")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--dir", required=True, help="campaign output directory")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        try:
            config = parse_config(args.config)
            if args.preset:
                config = apply_preset(config, args.preset)
            if args.output_dir:
                config = replace(config, output_dir=args.output_dir)
            if args.parallelism is not None:
                if args.parallelism < 1:
                    raise ConfigError("parallelism: must be a positive integer")
                config = replace(config, parallelism=args.parallelism)
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        status, out = run_campaign(config)
        print(f"campaign written to {out}" + ("" if status == 0 else " (with failures, see manifest.json)"))
        return status
    if args.command == "analyze":
        try:
            analyze(args.dir)
        except (FileNotFoundError, ValueError) as exc:
            print(f"analysis error: {exc}", file=sys.stderr)
            return 1
        return 0
    return report(args.dir)


if __name__ == "__main__":
    sys.exit(main())
