"""Command-line entry point: ``itasim {run,validate,report,fetch-dataset,sweep}``."""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
import urllib.request
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import DATASET_FILENAME, Config, DatasetConfig, load_config
from .engine import to_us
from .metrics import read_summary, recompute_summary
from .netmodel import ConfigInvalid
from .scenarios import SCENARIOS, simulate, write_outputs
from .sources import DatasetExhausted, EmptyDataset

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INCONSISTENT = 0, 1, 2, 3

log = logging.getLogger("itasim")


def _load(path) -> Config:
    return load_config(path) if path else Config()


def _apply_overrides(cfg: Config, args) -> Config:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigInvalid("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.duration is not None:
        try:
            cfg.duration = to_us(args.duration)
        except ValueError as exc:
            raise ConfigInvalid(f"--duration: {exc}") from None
        if cfg.duration <= 0:
            raise ConfigInvalid("--duration must be positive")
        if any(at > cfg.duration for at, _ in cfg.scaling):
            cfg.scaling = [(at, n) for at, n in cfg.scaling if at <= cfg.duration]
    return cfg


def _run_one(cfg: Config, scenario: str, out: Path, diagnostics: bool = False) -> Path:
    run = simulate(cfg, scenario)
    write_outputs(run, out, diagnostics=diagnostics)
    return out


def cmd_run(args) -> int:
    cfg = _apply_overrides(_load(args.config), args)
    out = Path(args.out)
    _run_one(cfg, args.scenario, out, args.diagnostics)
    for metric, edge, inn, pct in read_summary(out / "summary.csv"):
        print(f"{metric:<18} edge={edge:<14} inn={inn:<14} reduction_pct={pct}")
    return EXIT_OK


def cmd_validate(args) -> int:
    load_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def cmd_report(args) -> int:
    in_dir = Path(args.in_dir)
    stored = read_summary(in_dir / "summary.csv")
    recomputed = recompute_summary(in_dir).rows()
    ok = True
    for old, new in zip(stored, recomputed):
        flag = "ok" if old == new else "MISMATCH"
        ok &= old == new
        print(f"{new[0]:<18} edge={new[1]:<14} inn={new[2]:<14} reduction_pct={new[3]:<10} {flag}")
    if len(stored) != len(recomputed):
        ok = False
        print("row count differs from summary.csv", file=sys.stderr)
    return EXIT_OK if ok else EXIT_INCONSISTENT


def fetch_dataset(url: str, dest: Path, force: bool = False) -> Path:
    """Download ``url`` to ``dest`` atomically; a present file is kept unless ``force``."""
    if dest.exists() and not force:
        return dest
    dest.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".download-")
    try:
        with os.fdopen(fd, "wb") as fh, urllib.request.urlopen(url, timeout=60) as resp:
            shutil.copyfileobj(resp, fh)
        os.replace(tmp, dest)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return dest


def cmd_fetch(args) -> int:
    ds = load_config(args.config).dataset if args.config else DatasetConfig()
    url = args.url or ds.resolved_url()
    dest = Path(args.cache_dir) / DATASET_FILENAME if args.cache_dir else ds.cached_file()
    path = fetch_dataset(url, dest, force=args.force)
    print(path)
    return EXIT_OK


def _sweep_job(job):
    cfg, scenario, out = job
    _run_one(cfg, scenario, out)
    return str(out)


def cmd_sweep(args) -> int:
    jobs = []
    for seed in args.seeds:
        cfg = _apply_overrides(_load(args.config), argparse.Namespace(seed=seed, duration=args.duration))
        jobs.append((cfg, args.scenario, Path(args.out) / f"seed_{seed}"))
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        for out in pool.map(_sweep_job, jobs):
            print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="itasim", description="Edge vs. plain-forwarding in-transit analytics simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and write CSVs")
    r.add_argument("--config", help="TOML config (defaults when omitted)")
    r.add_argument("--scenario", choices=sorted(SCENARIOS), default="case1")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--duration", help="run length in seconds")
    r.add_argument("--diagnostics", action="store_true", help="also write per-sample rate series")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a config file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    rep = sub.add_parser("report", help="recompute the summary from a run's CSVs")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.set_defaults(func=cmd_report)

    f = sub.add_parser("fetch-dataset", help="download the Intel Lab dataset into the cache")
    f.add_argument("--url")
    f.add_argument("--cache-dir")
    f.add_argument("--config")
    f.add_argument("--force", action="store_true")
    f.set_defaults(func=cmd_fetch)

    s = sub.add_parser("sweep", help="run one scenario for several seeds in parallel")
    s.add_argument("--config")
    s.add_argument("--scenario", choices=sorted(SCENARIOS), default="case1")
    s.add_argument("--seeds", type=int, nargs="+", required=True)
    s.add_argument("--duration")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=None)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, EmptyDataset, DatasetExhausted) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
