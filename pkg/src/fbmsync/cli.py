"""Command-line front end.

    fbmsync generate [--config PATH] [--out DIR] [--seed S]
    fbmsync simulate [--config PATH] [--out DIR] [--kappa K] [--seed S]
    fbmsync sweep    [--config PATH] [--out DIR] [--kappa K] [--seed S] [--jobs N]
    fbmsync verify   [--config PATH] [--out DIR] [--criteria 1-12]

Exit codes: 0 success, 1 invalid configuration, 2 a check failed,
3 numerical divergence. The output directory is ``--out``, else the
``FBMSYNC_OUT`` environment variable, else ``out_dir`` from the config.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, ExperimentConfig, build_driver, load_config
from .flows import FlowDivergenceError
from .model import check_a1, check_a2
from .paths import RoughLift, _write_rows
from .sync import (SweepRow, _row, run_seed, write_sweep_csv)

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_DIVERGENCE = 0, 1, 2, 3
OUT_ENV = "FBMSYNC_OUT"


def _kappa_tag(k: float) -> str:
    return format(float(k), "g")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def resolve_out(args_out: Optional[str], config: ExperimentConfig) -> Path:
    out = args_out or os.environ.get(OUT_ENV) or config.out_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(out: Path, config: ExperimentConfig, command: str, files: Sequence[Path]) -> Path:
    """The effective config as INI plus a ``[manifest]`` section listing every
    written file with its SHA-256. No timestamps, so reruns are byte-identical.
    ``load_config`` reads the file back and ignores the extra section."""
    lines = [config.to_ini().rstrip("\n"), "", "[manifest]",
             f"command = {command}", f"version = {_version()}",
             f"numpy = {np.__version__}", f"config_sha256 = {config.content_hash()}"]
    for f in sorted(files, key=lambda p: p.relative_to(out).as_posix()):
        digest = hashlib.sha256(f.read_bytes()).hexdigest()
        lines.append(f"file.{f.relative_to(out).as_posix()} = {digest}")
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_generate(config: ExperimentConfig, out: Path) -> list[Path]:
    """fBm path per seed; in the rough regime also the per-step areas."""
    (out / "paths").mkdir(exist_ok=True)
    model = config.resolved_model()
    files = []
    for s in config.seeds:
        drv = build_driver(config, s, model.sigma.d)
        base = drv.base if isinstance(drv, RoughLift) else drv
        f = out / "paths" / f"seed_{s}.csv"
        base.to_csv(f)
        files.append(f)
        if isinstance(drv, RoughLift):
            fa = out / "paths" / f"seed_{s}_area.csv"
            drv.to_csv(fa)
            files.append(fa)
    return files


def _write_runs(out: Path, results) -> list[Path]:
    runs = out / "runs"
    runs.mkdir(exist_ok=True)
    files = []
    for r in results:
        stem = f"kappa_{_kappa_tag(r.kappa)}_seed_{r.seed}"
        files.append(runs / f"{stem}.csv")
        r.to_csv(files[-1])
        files.append(runs / f"{stem}_report.txt")
        files[-1].write_text(r.summary() + "\n")
    return files


def _write_plot(out: Path, seed: int, results) -> Path:
    """Columns ``t, Ybar`` then ``Y1_k<kappa>, Y2_k<kappa>`` per kappa (first
    state component), one row per grid time."""
    results = list(results)
    header = ["t", "Ybar"]
    cols = [results[0].times, results[0].ybar.values[:, 0]]
    for r in results:
        tag = _kappa_tag(r.kappa)
        header += [f"Y1_k{tag}", f"Y2_k{tag}"]
        cols += [r.y1.values[:, 0], r.y2.values[:, 0]]
    path = out / f"plot_seed_{seed}.csv"
    _write_rows(path, header, np.column_stack(cols))
    return path


def _seed_job(args):
    config, seed, out, with_plot = args
    results = run_seed(config, seed, config.kappas)
    files = _write_runs(out, results)
    if with_plot:
        files.append(_write_plot(out, seed, results))
    failed = [f"kappa={r.kappa:g} seed={seed}: {name}"
              for r in results for name, rep in r.bounds.items()
              if hasattr(rep, "passed") and not rep.passed]
    return [_row(r) for r in results], files, failed


def _run_seeds(config: ExperimentConfig, out: Path, jobs: int, with_plot: bool):
    jobs_args = [(config, s, out, with_plot) for s in config.seeds]
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_seed_job, jobs_args))
    else:
        done = [_seed_job(a) for a in jobs_args]
    rows: list[SweepRow] = []
    files: list[Path] = []
    failed: list[str] = []
    for r, f, bad in done:
        rows.extend(r)
        files.extend(f)
        failed.extend(bad)
    rows.sort(key=lambda r: (r.kappa, config.seeds.index(r.seed)))
    return rows, files, failed


def cmd_simulate(config: ExperimentConfig, out: Path, jobs: int = 1):
    """One coupled run per (kappa, seed) with trajectory CSVs and reports."""
    _, files, failed = _run_seeds(config, out, jobs, with_plot=False)
    return files, failed


def cmd_sweep(config: ExperimentConfig, out: Path, jobs: int = 1):
    """Full kappa x seed table plus per-run artifacts and plot data."""
    rows, files, failed = _run_seeds(config, out, jobs, with_plot=True)
    table = out / "sweep.csv"
    write_sweep_csv(rows, table)
    return rows, files + [table], failed


def cmd_verify(config: ExperimentConfig, out: Path, criteria=None, log=print):
    """Structural checks of the configured model, then the acceptance suite."""
    from . import acceptance

    model = config.resolved_model()
    lines = []
    ok = True
    reports = [("A1 f", check_a1(model.f)), ("A2 sigma", check_a2(model.sigma))]
    if model.g is not model.f:
        reports.insert(1, ("A1 g", check_a1(model.g)))
    for name, rep in reports:
        ok &= rep.passed
        text = f"[{'PASS' if rep.passed else 'FAIL'}] {name}\n{rep.summary()}"
        lines.append(text)
        log(text)
    results = acceptance.run_criteria(criteria, log=log)
    ok &= all(r.passed for r in results)
    lines += [r.line() for r in results]
    path = out / "verify_report.txt"
    path.write_text("\n".join(lines) + "\n")
    return ok, path


def _parse_criteria(text: Optional[str]):
    if text is None:
        return None
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (default: built-in defaults)")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    common.add_argument("--seed", type=int, help="run a single seed")
    parser = argparse.ArgumentParser(prog="fbmsync",
                                     description="Synchronization of fBm-driven coupled systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write driver paths")
    for name, text in (("simulate", "coupled runs per seed"), ("sweep", "kappa x seed table")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--kappa", type=float, help="single coupling strength")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p = sub.add_parser("verify", parents=[common], help="run checks and the acceptance suite")
    p.add_argument("--criteria", help="subset such as 1-8 or 1,5,9 (default: all)")
    return parser


def _effective_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    kw = {}
    if getattr(args, "kappa", None) is not None:
        kw["kappas"] = (args.kappa,)
    if args.seed is not None:
        kw["seeds"] = (args.seed,)
    return config.with_(**kw).validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _effective_config(args)
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        criteria = _parse_criteria(getattr(args, "criteria", None))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = resolve_out(args.out, config)
    # the manifest records the config as given, not the output location
    recorded = config.with_(out_dir=(load_config(args.config).out_dir if args.config
                                     else ExperimentConfig().out_dir))
    try:
        if args.command == "generate":
            files = cmd_generate(config, out)
            write_manifest(out, recorded, "generate", files)
            return EXIT_OK
        if args.command == "simulate":
            files, failed = cmd_simulate(config, out, args.jobs)
        elif args.command == "sweep":
            _, files, failed = cmd_sweep(config, out, args.jobs)
        else:
            ok, path = cmd_verify(config, out, criteria)
            print(f"report written to {path}")
            return EXIT_OK if ok else EXIT_CHECK
    except FlowDivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    write_manifest(out, recorded, args.command, files)
    for line in failed:
        print(f"FAIL {line}", file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
