"""Command-line front end.

Usage:
    python -m pagrefine sample --fixture collider -n 2000 --seed 1 --out data/
    python -m pagrefine oracle-pag data/truth.json --out data/pag.json
    python -m pagrefine refine -c configs/collider.toml
    python -m pagrefine refine -c configs/collider.toml --seeds 1..5
    python -m pagrefine refine -c configs/bench8.toml --sizes 1000,2000,5000,10000
    python -m pagrefine eval out/dag.json data/truth.json
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from multiprocessing import Pool
from pathlib import Path

import pandas as pd
from dotenv import load_dotenv

from . import __version__
from .bnsampler import NetworkError, fixture_names, forward_sample, load_bayes_net, load_fixture
from .config import RunConfig, load_config
from .data import load_cardinalities, load_csv, take_rows, write_cardinalities, write_csv
from .errors import InputError, NumericalError
from .evaluation import evaluate_graphs, summarize_runs
from .graphs import load_dag, load_graph, load_pag, oracle_pag_from_dag, write_json
from .pipeline import PRIOR_MODES, run_refinement, write_artifacts

_log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_ENV = "PAGREFINE_LOG_LEVEL"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def setup_logging(level_name: str | None) -> None:
    level = getattr(logging, str(level_name or "INFO").upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def resolve_log_level(flag: str | None, configured: str | None = None) -> str:
    return flag or os.environ.get(LOG_ENV) or configured or "INFO"


def parse_seeds(text: str) -> list[int]:
    """``"1..5"`` -> ``[1, 2, 3, 4, 5]``; a comma list is also accepted."""
    try:
        if ".." in text:
            lo, hi = (int(part) for part in text.split("..", 1))
            seeds = list(range(lo, hi + 1))
        else:
            seeds = [int(part) for part in text.split(",")]
    except ValueError as exc:
        raise InputError(f"--seeds must look like 1..5 or 1,2,3, got {text!r}") from exc
    if not seeds:
        raise InputError(f"--seeds {text!r} selects no seed")
    return seeds


# --------------------------------------------------------------------------
# sample / oracle-pag / eval
# --------------------------------------------------------------------------


def cmd_sample(args) -> int:
    if (args.network is None) == (args.fixture is None):
        raise InputError("give either a network file or --fixture")
    bn = load_fixture(args.fixture) if args.fixture else load_bayes_net(args.network)
    dataset = forward_sample(bn, args.samples, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(dataset, out / "data.csv")
    write_cardinalities(dataset, out / "cardinalities.json")
    write_json(bn.dag.to_dict(), out / "truth.json")
    _log.info("Wrote data.csv, cardinalities.json and truth.json to %s", out)
    return EXIT_OK


def cmd_oracle_pag(args) -> int:
    pag = oracle_pag_from_dag(load_dag(args.truth))
    write_json(pag.to_dict(), args.out)
    _log.info("Oracle PAG with %d edges written to %s", len(pag.edges), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate_graphs(load_graph(args.est), load_dag(args.truth), args.tau)
    text = json.dumps(report.to_dict(), indent=2)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


# --------------------------------------------------------------------------
# refine
# --------------------------------------------------------------------------


def run_single(cfg: RunConfig) -> dict:
    """One refinement into ``cfg.output_dir``; returns the seed's summary row."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "refine.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        cards = load_cardinalities(cfg.cardinalities) if cfg.cardinalities else None
        dataset = load_csv(cfg.data, cards)
        if cfg.max_rows is not None:
            dataset = take_rows(dataset, cfg.max_rows)
        truth = load_dag(cfg.truth) if cfg.truth else None
        pag = oracle_pag_from_dag(truth) if cfg.pag_from_truth else load_pag(cfg.pag)
        result = run_refinement(
            dataset,
            pag,
            hp=cfg.hp,
            cfg=cfg.optimizer,
            prior_mode=cfg.prior_mode,
            prior_probability=cfg.prior_probability,
            prior_path=cfg.prior,
            truth=truth,
            penalty_mode=cfg.penalty_weights,
            project=cfg.cycle_projection,
        )
        write_artifacts(result, out, {"version": __version__, "config": cfg.to_dict()})
    finally:
        root.removeHandler(handler)
        handler.close()

    row = {
        "seed": cfg.optimizer.seed,
        "samples": dataset.num_samples,
        "edges": len(result.graph.edges),
    }
    if result.metrics is not None:
        row.update(result.metrics.to_dict())
    else:
        row["unresolved_ratio"] = result.unresolved_ratio
    row["seconds"] = result.seconds
    row["summary"] = result.summary()
    return row


def _sweep_worker(cfg: RunConfig) -> dict:
    setup_logging(cfg.log_level)
    return run_single(cfg)


def _metric_rows(rows: list[dict]) -> list[dict]:
    return [{k: v for k, v in r.items() if k not in ("seed", "samples")} for r in rows]


def sweep_jobs(
    cfg: RunConfig, seeds: list[int] | None = None, sizes: list[int] | None = None
) -> list[RunConfig]:
    """``n-<N>/`` per size and ``seed-<k>/`` per seed, nested when both are given.

    The PAG, the prior and every hyperparameter stay fixed; a size only limits
    how many leading data rows the objective sees.
    """
    jobs = []
    for n in sizes or [None]:
        for k in seeds or [None]:
            out = Path(cfg.output_dir)
            job = cfg
            if n is not None:
                out = out / f"n-{n}"
                job = replace(job, max_rows=n)
            if k is not None:
                out = out / f"seed-{k}"
                job = replace(job, optimizer=replace(job.optimizer, seed=k))
            jobs.append(replace(job, output_dir=out))
    return jobs


def run_sweep(
    cfg: RunConfig, seeds: list[int] | None = None, sizes: list[int] | None = None
) -> list[dict]:
    """One worker process per job; writes ``summary.csv`` and ``summary.json``."""
    if sizes:
        cards = load_cardinalities(cfg.cardinalities) if cfg.cardinalities else None
        available = load_csv(cfg.data, cards).num_samples
        too_big = [n for n in sizes if n > available]
        if too_big:
            raise InputError(f"--sizes {too_big} exceed the {available} rows in {cfg.data}")

    jobs = sweep_jobs(cfg, seeds, sizes)
    workers = min(len(jobs), os.cpu_count() or 1)
    _log.info("Sweeping seeds=%s sizes=%s with %d worker(s)", seeds, sizes, workers)
    with Pool(processes=workers) as pool:
        rows = pool.map(_sweep_worker, jobs)

    out = Path(cfg.output_dir)
    frame = pd.DataFrame([{k: v for k, v in r.items() if k != "summary"} for r in rows])
    frame.to_csv(out / "summary.csv", index=False, lineterminator="\n")
    summary: dict = {}
    if seeds:
        summary["seeds"] = seeds
    if sizes:
        summary["sizes"] = sizes
        summary["metrics"] = {
            str(n): summarize_runs(_metric_rows([r for r in rows if r["samples"] == n]))
            for n in sizes
        }
    else:
        summary["metrics"] = summarize_runs(_metric_rows(rows))
    write_json(summary, out / "summary.json")
    return rows


def parse_sizes(text: str) -> list[int]:
    """``"1000,2000,5000"`` -> ``[1000, 2000, 5000]``."""
    try:
        sizes = [int(part) for part in text.split(",")]
    except ValueError as exc:
        raise InputError(f"--sizes must look like 1000,2000,5000, got {text!r}") from exc
    if any(n < 1 for n in sizes) or len(set(sizes)) != len(sizes):
        raise InputError(f"--sizes needs distinct positive row counts, got {text!r}")
    return sizes


def cmd_refine(args) -> int:
    overrides = {
        "data": args.data,
        "cardinalities": args.cardinalities,
        "pag": args.pag,
        "pag_from_truth": args.pag_from_truth,
        "prior": args.prior,
        "prior_mode": args.prior_mode,
        "prior_probability": args.prior_probability,
        "truth": args.truth,
        "output_dir": args.out,
        "max_rows": args.rows,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "lambda3": args.lambda3,
        "tau": args.tau,
        "recon_scope": args.recon_scope,
        "penalty_weights": args.penalty_weights,
        "eta": args.eta,
        "steps": args.steps,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "cycle_projection": args.cycle_projection,
    }
    cfg = load_config(args.config, overrides)
    level = resolve_log_level(args.log_level, cfg.log_level)
    setup_logging(level)
    cfg = replace(cfg, log_level=level)
    cfg.check_paths()

    seeds = parse_seeds(args.seeds) if args.seeds else None
    sizes = parse_sizes(args.sizes) if args.sizes else None
    if seeds or sizes:
        for row in run_sweep(cfg, seeds, sizes):
            label = f"seed={row['seed']}"
            if sizes:
                label = f"n={row['samples']} {label}"
            print(f"{label} {row['summary']}")
    else:
        print(run_single(cfg)["summary"])
    return EXIT_OK


# --------------------------------------------------------------------------
# parser / main
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pagrefine", description="Refine a partial ancestral graph into a DAG"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help=f"overrides ${LOG_ENV} and the config")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="forward-sample a Bayesian network")
    p.add_argument("network", nargs="?", help="network JSON")
    p.add_argument("--fixture", help=f"bundled network: {', '.join(fixture_names())}")
    p.add_argument("-n", "--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="directory for data.csv, cardinalities.json and truth.json")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("oracle-pag", help="PAG implied by a true DAG")
    p.add_argument("truth")
    p.add_argument("--out", default="pag.json")
    p.set_defaults(func=cmd_oracle_pag)

    p = sub.add_parser("eval", help="compare an estimated graph with the truth")
    p.add_argument("est")
    p.add_argument("truth")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("refine", help="run the refinement pipeline")
    p.add_argument("-c", "--config", help="TOML run configuration")
    p.add_argument("--data")
    p.add_argument("--cardinalities")
    p.add_argument("--pag")
    p.add_argument(
        "--pag-from-truth", action="store_const", const=True, default=None,
        help="use the oracle PAG of --truth",
    )
    p.add_argument("--prior")
    p.add_argument("--prior-mode", choices=PRIOR_MODES)
    p.add_argument("--prior-probability", type=float)
    p.add_argument("--truth")
    p.add_argument("--out", help="output directory")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--lambda3", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--recon-scope", choices=("all", "unresolved"))
    p.add_argument("--penalty-weights", choices=("frequency", "uniform"))
    p.add_argument("--eta", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size")
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--no-cycle-projection", dest="cycle_projection", action="store_const",
        const=False, default=None,
    )
    p.add_argument("--rows", type=int, help="use only the first ROWS data rows")
    p.add_argument("--seeds", help="sweep, e.g. 1..5")
    p.add_argument(
        "--sizes", help="sample-size sweep over leading rows with the PAG held fixed, "
        "e.g. 1000,2000,5000,10000",
    )
    p.set_defaults(func=cmd_refine)
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(resolve_log_level(args.log_level))
    try:
        return args.func(args)
    except NetworkError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        for problem in exc.errors:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
