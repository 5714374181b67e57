"""Shared argument handling for the experiment scripts."""

import argparse
import logging
import os
from pathlib import Path

from towe.config import ExperimentConfig


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", help="base experiment config (YAML)")
    p.add_argument("--data-root", default=os.environ.get("TOWE_DATA_ROOT"))
    p.add_argument("--word-vectors", help="GloVe-style text file of pretrained vectors")
    p.add_argument("--datasets", nargs="+", help="override the dataset list")
    p.add_argument("--seeds", type=int, nargs="+", help="override the seed list")
    p.add_argument("--epochs", type=int, help="override the epoch budget (quick runs)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs")
    return p


def experiment(args) -> ExperimentConfig:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    exp = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.data_root:
        exp.data_root = args.data_root
    if args.word_vectors:
        exp.word_vectors = args.word_vectors
    if args.datasets:
        exp.grid.datasets = args.datasets
    if args.seeds:
        exp.grid.seeds = args.seeds
    if args.epochs:
        exp.train.epochs = args.epochs
        exp.train_contextual.epochs = args.epochs
    exp.grid.workers = args.workers
    exp.out_dir = args.out
    return exp


def write(exp, result, render, name: str) -> Path:
    run_dir = Path(exp.out_dir) / f"{name}-{exp.digest()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    exp.dump(run_dir / "config.yaml")
    result.save(run_dir / "grid.json")
    (run_dir / "table.md").write_text(render + "\n")
    print(render)
    print(f"\nreport: {run_dir / 'grid.json'}")
    return run_dir
