"""``towe`` command line: import, stats, train, eval, grid.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
The default data root comes from ``$TOWE_DATA_ROOT``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, EncoderConfig, ExperimentConfig
from .corpus import CorpusError, compute_statistics, join_parses, load_split, read_inline_file, read_parse_file, save_split
from .grid import dataset_files, load_bundle, render_table, run_grid
from .model import Checkpoint, Predictor, train

log = logging.getLogger("towe")

DATA_ROOT_ENV = "TOWE_DATA_ROOT"


class UsageError(Exception):
    pass


def _emit(args, payload, text: str):
    if args.format == "json":
        print(json.dumps(payload, indent=1))
    else:
        print(text)


def _experiment(args) -> ExperimentConfig:
    exp = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "data_root", None):
        exp.data_root = args.data_root
    if not exp.data_root:
        exp.data_root = os.environ.get(DATA_ROOT_ENV)
    if getattr(args, "out", None):
        exp.out_dir = args.out
    if args.seed is not None:
        exp.seed = args.seed
        exp.train.seed = args.seed
        exp.train_contextual.seed = args.seed
    return exp


def _check_contextual(exp: ExperimentConfig, datasets, modes):
    if "B" not in modes:
        return
    for ds in datasets:
        files = dataset_files(exp, ds)
        for role in ("train", "test"):
            p = files.get(f"{role}_contextual")
            if p is None or not Path(p).exists():
                raise ConfigError(f"dataset {ds!r}: mode B needs a {role} contextual sidecar")


# ---------------------------------------------------------------- commands

def cmd_import(args) -> int:
    if not Path(args.raw).exists():
        raise UsageError(f"raw file not found: {args.raw}")
    if not Path(args.parses).exists():
        raise UsageError(f"parse file not found: {args.parses}")
    split = read_inline_file(args.raw, args.name)
    split = join_parses(split, read_parse_file(args.parses))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_split(split, out)
    _emit(args, {"split": split.name, "instances": len(split), "out": str(out)},
          f"{split.name}: {len(split)} instances -> {out}")
    return 0


def _stat_targets(args) -> list[tuple[str, Path]]:
    if args.files:
        return [(Path(f).stem, Path(f)) for f in args.files]
    exp = _experiment(args)
    if not args.dataset:
        raise UsageError("give dataset files or --dataset NAME")
    targets = []
    for ds in args.dataset:
        files = dataset_files(exp, ds)
        available = sorted(k for k in files if not k.endswith("contextual") and Path(files[k]).exists())
        wanted = args.split or available
        for s in wanted:
            if s not in available:
                raise UsageError(f"dataset {ds!r} has no split {s!r}; available: {', '.join(available) or 'none'}")
            targets.append((f"{ds} ({s})", files[s]))
    return targets


def cmd_stats(args) -> int:
    targets = _stat_targets(args)
    if not targets:
        raise UsageError("no splits selected")
    rows = {}
    for label, path in targets:
        if not path.exists():
            raise UsageError(f"dataset file not found: {path}")
        rows[label] = compute_statistics(load_split(path)).as_row()
    cols = ["#Sent", "#ASL", "#AT", "#OT", "#D.Dist", "#S.Dist"]
    width = max(len(k) for k in rows) + 2
    lines = ["Dataset".ljust(width) + "".join(c.rjust(9) for c in cols)]
    for label, row in rows.items():
        lines.append(label.ljust(width) + "".join(str(row[c]).rjust(9) for c in cols))
    _emit(args, rows, "\n".join(lines))
    return 0


def _apply_overrides(exp: ExperimentConfig, args):
    m = exp.model
    if args.encoder:
        m.encoder = EncoderConfig.for_kind(args.encoder) if args.encoder != m.encoder.kind else m.encoder
    if args.mode:
        m.input.mode = args.mode
        if args.mode == "B":
            m.input.use_post = False
            m.input.posn_dim = 100
    if args.gcn_layers is not None:
        m.gcn.layers = args.gcn_layers


def cmd_train(args) -> int:
    exp = _experiment(args)
    _apply_overrides(exp, args)
    exp.validate()
    mode = exp.model.input.mode
    _check_contextual(exp, [args.dataset], [mode])
    bundle = load_bundle(exp, args.dataset, need_contextual=mode == "B")
    tcfg = exp.train if mode == "G" else exp.train_contextual
    if mode == "B":
        exp.model.input.contextual_dim = next(iter(bundle.train_contextual.values())).shape[1]

    run_dir = Path(exp.out_dir) / f"{exp.digest()}-seed{tcfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    exp.dump(run_dir / "config.yaml")
    word_vectors = None
    vocab_instances = ()
    if mode == "G" and exp.word_vectors:
        from .featurize import load_pretrained_vectors
        path = exp.word_vectors
        word_vectors = lambda vocab: load_pretrained_vectors(path, vocab, trainable=exp.model.input.train_word_vectors)  # noqa: E731
        vocab_instances = bundle.test.instances

    with open(run_dir / "dev_curve.jsonl", "w") as curve:
        def on_epoch(rec):
            curve.write(json.dumps(rec) + "\n")
            curve.flush()
            log.info("epoch %d loss %.4f dev F1 %.2f", rec["epoch"], rec["loss"], 100 * rec["dev_f1"])
        ck = train(bundle.train, exp.model, tcfg, word_vectors=word_vectors, contextual=bundle.train_contextual,
                   vocab_instances=vocab_instances, on_epoch=on_epoch)
    ck.save(run_dir / "checkpoint.pt")
    payload = {"run_dir": str(run_dir), "seed": ck.seed, "best_epoch": ck.best_epoch, "best_dev_f1": ck.best_dev_f1}
    _emit(args, payload, f"best dev F1 {100 * ck.best_dev_f1:.2f} at epoch {ck.best_epoch} (seed {ck.seed}) -> {run_dir}")
    return 0


def cmd_eval(args) -> int:
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    ck = Checkpoint.load(args.checkpoint)
    exp = _experiment(args)
    if args.dataset is None:
        raise UsageError("--dataset is required")
    mode = ck.config.input.mode
    _check_contextual(exp, [args.dataset], [mode])
    bundle = load_bundle(exp, args.dataset, need_contextual=mode == "B")
    split = bundle.test if args.split == "test" else bundle.train
    ctx = bundle.test_contextual if args.split == "test" else bundle.train_contextual
    report = Predictor(ck).evaluate(split, ctx)
    pct = report.as_percent()
    _emit(args, {**report.to_dict(), "dataset": args.dataset, "split": args.split, "seed": ck.seed},
          f"{args.dataset} {args.split}: P {pct['precision']:.2f}  R {pct['recall']:.2f}  F1 {pct['f1']:.2f} "
          f"({report.num_correct}/{report.num_pred_spans} predicted, {report.num_gold_spans} gold)")
    return 0


def cmd_grid(args) -> int:
    exp = _experiment(args)
    if args.seed is not None:
        n = len(exp.grid.seeds)
        exp.grid.seeds = list(range(args.seed, args.seed + n))
    if args.workers:
        exp.grid.workers = args.workers
    exp.validate()
    _check_contextual(exp, exp.grid.datasets, exp.grid.modes)
    run_dir = Path(exp.out_dir) / f"{exp.digest()}-seed{exp.grid.seeds[0]}"
    run_dir.mkdir(parents=True, exist_ok=True)
    exp.dump(run_dir / "config.yaml")

    def on_cell(res):
        if res.report:
            log.info("%s on %s: F1 %.2f (K=%d)", res.cell.model_name, res.cell.dataset, 100 * res.report.f1,
                     res.gcn_layers)

    result = run_grid(exp, on_cell=on_cell)
    result.save(run_dir / "grid.json")
    main = render_table(result)
    (run_dir / "table.md").write_text(main + "\n")
    text = main
    if exp.grid.ablations:
        abl = render_table(result, ablation=True)
        (run_dir / "ablation.md").write_text(abl + "\n")
        text += "\n\n" + abl
    _emit(args, {**result.to_dict(), "run_dir": str(run_dir)}, text + f"\n\nreports in {run_dir}")
    return 1 if all(c.error for c in result.cells) else 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML or JSON)")
    common.add_argument("--seed", type=int)
    common.add_argument("--data-root", help=f"dataset directory (default ${DATA_ROOT_ENV})")
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="towe", description="Target-oriented opinion word extraction experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("import", parents=[common], help="convert a raw annotated file to the structured format")
    s.add_argument("raw", help="tab-separated or three-line inline-annotated file")
    s.add_argument("--parses", required=True, help="CoNLL-U/CoNLL-X or JSON-lines parse file")
    s.add_argument("--out", required=True, help="output .jsonl path")
    s.add_argument("--name", help="split name (default: file stem)")
    s.set_defaults(func=cmd_import)

    s = sub.add_parser("stats", parents=[common], help="dataset statistics table")
    s.add_argument("files", nargs="*", help="structured dataset files")
    s.add_argument("--dataset", action="append", help="dataset name under the data root (repeatable)")
    s.add_argument("--split", action="append", help="train or test (repeatable; default both)")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", parents=[common], help="train one model")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", help="output directory for runs")
    s.add_argument("--encoder", choices=("cnn", "transformer", "bilstm", "onlstm"))
    s.add_argument("--mode", choices=("G", "B"))
    s.add_argument("--gcn-layers", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="score a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--dataset")
    s.add_argument("--split", choices=("train", "test"), default="test")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("grid", parents=[common], help="run a multi-seed experiment grid")
    s.add_argument("--out", help="output directory for runs")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_grid)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as e:
        print(f"towe {args.command}: error: {e}", file=sys.stderr)
        return 2
    except CorpusError as e:
        print(f"towe {args.command}: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failures: training pathologies, bad checkpoints
        log.debug("traceback", exc_info=True)
        print(f"towe {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
