"""
Experiment driver for semantic multi-objective GP.

Usage:
    python harness.py run --config experiment.json [--seed N --engine E --approach A
                                                    --lbss X --ubss Y --out DIR --grid]
    python harness.py summarize --in DIR
    python harness.py gen-synth --out FILE --n 200 --imbalance 9 --seed S
"""
import argparse
import glob
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from dataset import load_csv, min_max_scale, stratified_split, write_synthetic_csv
from emo import ENGINES
from experiment_config import (DEFAULT_CONFIG, DEFAULT_LBSS_GRID, DEFAULT_UBSS_GRID, ExperimentConfig,
                               apply_overrides, expand_grid, load_config)
from metrics import FrontMember, GenerationStats, RunResult
from objectives import ClassificationProblem
from semantic_emo import Approach, check_combination, run_variant

# Set up logging
logger = logging.getLogger(__name__)

STATS_COLUMNS = ["generation", "hypervolume", "unique_count", "mean_nodes", "front_size"]
SUMMARY_METRICS = ["hypervolume", "unique_count", "mean_nodes"]
# Settings that change how a run executes but not what it computes; kept out of result files
EXECUTION_KEYS = ("output_dir", "n_workers", "run_workers", "record_wall_time")


class HarnessError(ValueError):
    """Raised for unusable result sets"""


@dataclass
class Summary:
    table: pd.DataFrame
    ratios: pd.DataFrame


def result_stem(result):
    semantic = result.config.get("semantic", {})
    lbss = semantic.get("lbss", "na")
    ubss = semantic.get("ubss", "na")
    if ubss is None:
        ubss = math.inf
    return f"{result.engine}_{result.approach}_l{lbss}_u{ubss}_s{result.seed}"


def result_to_dict(result):
    return {
        "seed": result.seed,
        "engine": result.engine,
        "approach": result.approach,
        "reference_point": list(result.reference_point),
        "hypervolume_space": result.hypervolume_space,
        "wall_time": result.wall_time,
        "config": result.config,
        "front": [member.to_dict() for member in result.front],
        "generations": [stats.to_dict() for stats in result.stats],
    }


def result_from_dict(data):
    return RunResult(
        seed=data["seed"],
        engine=data["engine"],
        approach=data["approach"],
        front=[FrontMember.from_dict(member) for member in data["front"]],
        stats=[GenerationStats(**stats) for stats in data["generations"]],
        config=data["config"],
        reference_point=tuple(data["reference_point"]),
        hypervolume_space=data["hypervolume_space"],
        wall_time=data["wall_time"],
    )


def _atomic_write(path, text):
    """Write through a temp file in the same directory, then rename over ``path``"""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_result(result, output_dir):
    """Persist one run as <stem>.json (metadata + front) and <stem>.csv (per-generation stats)"""
    os.makedirs(output_dir, exist_ok=True)
    stem = os.path.join(output_dir, result_stem(result))
    json_path, csv_path = stem + ".json", stem + ".csv"
    _atomic_write(json_path, json.dumps(result_to_dict(result), indent=2, allow_nan=False) + "\n")
    frame = pd.DataFrame([stats.to_dict() for stats in result.stats], columns=STATS_COLUMNS)
    _atomic_write(csv_path, frame.to_csv(index=False))
    logger.info(f"Wrote {json_path}")
    return json_path, csv_path


def read_result(path):
    with open(path, "r") as f:
        return result_from_dict(json.load(f))


def load_results(directory):
    paths = sorted(glob.glob(os.path.join(directory, "*.json")))
    if not paths:
        raise HarnessError(f"No result files found in {directory}")
    return [read_result(path) for path in paths]


def run_single(cfg, seed, ds):
    """One seeded run: split, evolve, write, return"""
    train, test = stratified_split(ds, cfg.train_fraction, seed)
    if cfg.scale_features:
        train, test = min_max_scale(train, test)
    problem = ClassificationProblem(train, test, cfg.threshold, n_workers=cfg.n_workers)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    result = run_variant(cfg.engine, cfg.semantic, problem, cfg.gp, rng, seed=seed)
    elapsed = time.perf_counter() - start
    echo = cfg.to_dict()
    echo["seeds"] = [seed]
    for key in EXECUTION_KEYS:
        echo.pop(key)
    result.config = echo
    result.wall_time = elapsed if cfg.record_wall_time else None
    logger.info(f"Seed {seed} finished in {elapsed:.1f}s: hypervolume={result.final.hypervolume:.4f}, "
                f"front={len(result.front)}")
    write_result(result, cfg.output_dir)
    return result


def run_experiment(cfg):
    """
    Run every (grid configuration, seed) pair.

    Returns:
        list of RunResult in grid-then-seed order; files are written before return
    """
    configs = expand_grid(cfg)
    for config in configs:
        check_combination(config.engine, config.semantic)
    ds = load_csv(cfg.dataset_path, cfg.label_column, cfg.positive_label)
    jobs = [(config, seed) for config in configs for seed in config.seeds]
    logger.info(f"Starting {len(jobs)} runs ({cfg.engine}, {cfg.semantic.approach.value})")
    if cfg.run_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.run_workers) as pool:
            return list(pool.map(lambda job: run_single(job[0], job[1], ds), jobs))
    return [run_single(config, seed, ds) for config, seed in jobs]


def config_label(result):
    label = f"{result.engine}/{result.approach}"
    if result.approach != Approach.CANONICAL.value:
        semantic = result.config.get("semantic", {})
        ubss = semantic.get("ubss")
        label += f" [{semantic.get('lbss')}, {math.inf if ubss is None else ubss}]"
    return label


def summarize(results):
    """
    Order statistics of the final generation per configuration, and the
    pairwise ratio of median unique_count between configurations
    (row / column).
    """
    if not results:
        raise HarnessError("Nothing to summarize")
    frame = pd.DataFrame([{
        "config": config_label(r),
        "hypervolume": r.final.hypervolume,
        "unique_count": r.final.unique_count,
        "mean_nodes": r.final.mean_nodes,
    } for r in results])
    grouped = frame.groupby("config", sort=True)
    table = grouped[SUMMARY_METRICS].agg(["mean", "median", "min", "max"])
    table.columns = [f"{metric}_{stat}" for metric, stat in table.columns]
    table.insert(0, "runs", grouped.size())

    medians = grouped["unique_count"].median()
    num = medians.to_numpy(dtype=np.float64)[:, None]
    den = medians.to_numpy(dtype=np.float64)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den == 0, np.nan, num / den)
    ratios = pd.DataFrame(ratio, index=medians.index, columns=medians.index)
    return Summary(table, ratios)


def build_parser():
    parser = argparse.ArgumentParser(description="Semantic multi-objective GP experiments")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an experiment")
    run.add_argument("--config", help="JSON configuration file")
    run.add_argument("--dataset", help="CSV dataset (overrides the configured path)")
    run.add_argument("--seed", type=int)
    run.add_argument("--engine", choices=sorted(ENGINES))
    run.add_argument("--approach", choices=[a.value for a in Approach])
    run.add_argument("--lbss", type=float)
    run.add_argument("--ubss", type=float)
    run.add_argument("--out", help="output directory")
    run.add_argument("--grid", action="store_true", help="sweep the default 4 x 4 LBSS/UBSS grid")

    summary = commands.add_parser("summarize", help="summarize a results directory")
    summary.add_argument("--in", dest="in_dir", required=True)

    synth = commands.add_parser("gen-synth", help="write the synthetic imbalanced dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--n", type=int, default=200)
    synth.add_argument("--imbalance", type=float, default=9)
    synth.add_argument("--seed", type=int, default=0)
    return parser


def _run_command(args):
    if args.config:
        cfg_data = load_config(args.config).to_dict()
    else:
        cfg_data = dict(DEFAULT_CONFIG, dataset=dict(DEFAULT_CONFIG["dataset"], path=args.dataset))
    if args.grid:
        cfg_data["lbss_grid"] = DEFAULT_LBSS_GRID
        cfg_data["ubss_grid"] = DEFAULT_UBSS_GRID
    cfg = apply_overrides(ExperimentConfig.from_dict(cfg_data), seed=args.seed, engine=args.engine,
                          approach=args.approach, lbss=args.lbss, ubss=args.ubss, out=args.out,
                          dataset=args.dataset)
    results = run_experiment(cfg)
    print(f"Completed {len(results)} runs; results in {cfg.output_dir}")


def _summarize_command(args):
    summary = summarize(load_results(args.in_dir))
    summary.table.to_csv(os.path.join(args.in_dir, "summary.csv"))
    summary.ratios.to_csv(os.path.join(args.in_dir, "ratios.csv"))
    with pd.option_context("display.width", 200, "display.max_columns", None):
        print(summary.table.to_string())
        print()
        print("Median unique_count ratio (row / column):")
        print(summary.ratios.to_string(float_format=lambda v: "nan" if math.isnan(v) else f"{v:.2f}"))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s - %(levelname)s - %(message)s')
    try:
        if args.command == "run":
            _run_command(args)
        elif args.command == "summarize":
            _summarize_command(args)
        else:
            write_synthetic_csv(args.out, args.n, args.imbalance, args.seed)
    except Exception as e:
        logger.error(f"Error running {args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
