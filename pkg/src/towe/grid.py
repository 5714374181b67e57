"""Multi-seed experiment grids and ablations, plus table rendering."""

from __future__ import annotations

import dataclasses
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .config import ExperimentConfig, GridSpec, InputConfig, ModelConfig, TrainConfig
from .corpus import DatasetSplit, load_split
from .evaluation import EvalReport, aggregate
from .featurize import load_contextual, load_pretrained_vectors
from .model import Predictor, train

log = logging.getLogger(__name__)

ENCODER_NAMES = {"cnn": "CNN", "transformer": "Transformer", "bilstm": "BiLSTM", "onlstm": "ON-LSTM"}


@dataclass
class DatasetBundle:
    train: DatasetSplit
    test: DatasetSplit
    train_contextual: dict | None = None
    test_contextual: dict | None = None


def dataset_files(exp: ExperimentConfig, name: str) -> dict[str, Path]:
    if name in exp.datasets:
        return {k: Path(v) for k, v in exp.datasets[name].items()}
    if not exp.data_root:
        raise FileNotFoundError(f"dataset {name!r} is not configured and no data root is set")
    root = Path(exp.data_root) / name
    files = {"train": root / "train.jsonl", "test": root / "test.jsonl"}
    for split in ("train", "test"):
        ctx = root / f"{split}.contextual.npz"
        if ctx.exists():
            files[f"{split}_contextual"] = ctx
    return files


def load_bundle(exp: ExperimentConfig, name: str, need_contextual: bool = False) -> DatasetBundle:
    files = dataset_files(exp, name)
    for role in ("train", "test"):
        if role not in files or not files[role].exists():
            raise FileNotFoundError(f"dataset {name!r}: {role} file missing ({files.get(role)})")
    bundle = DatasetBundle(load_split(files["train"], f"{name}-train"), load_split(files["test"], f"{name}-test"))
    if need_contextual:
        for role in ("train", "test"):
            key = f"{role}_contextual"
            if key not in files:
                raise FileNotFoundError(f"dataset {name!r}: mode B needs a {role} contextual sidecar")
            setattr(bundle, key, load_contextual(files[key]))
    return bundle


@dataclass(frozen=True)
class Cell:
    dataset: str
    encoder: str
    mode: str
    gcn: bool
    removed: tuple[str, ...] = ()

    @property
    def model_name(self) -> str:
        name = ENCODER_NAMES[self.encoder] + ("+GCN" if self.gcn or self.removed else "") + f"({self.mode})"
        if self.removed:
            name += " --- " + ", ".join(r.upper() for r in self.removed)
        return name


@dataclass
class CellResult:
    cell: Cell
    report: EvalReport | None = None
    gcn_layers: int = 0
    layer_search: dict[int, float] = field(default_factory=dict)
    best_dev_f1: list[float] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "cell": dataclasses.asdict(self.cell),
            "model": self.cell.model_name,
            "report": self.report.to_dict() if self.report else None,
            "gcn_layers": self.gcn_layers,
            "layer_search": {str(k): v for k, v in self.layer_search.items()},
            "best_dev_f1": self.best_dev_f1,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellResult":
        c = d["cell"]
        cell = Cell(c["dataset"], c["encoder"], c["mode"], c["gcn"], tuple(c["removed"]))
        return cls(cell, EvalReport.from_dict(d["report"]) if d["report"] else None, d["gcn_layers"],
                   {int(k): v for k, v in d["layer_search"].items()}, d["best_dev_f1"], d["error"])


@dataclass
class GridResult:
    spec: GridSpec
    cells: list[CellResult]

    def to_dict(self) -> dict:
        return {"spec": dataclasses.asdict(self.spec), "cells": [c.to_dict() for c in self.cells]}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "GridResult":
        from .config import from_dict
        d = json.loads(Path(path).read_text())
        return cls(from_dict(GridSpec, d["spec"]), [CellResult.from_dict(c) for c in d["cells"]])

    def lookup(self, model_name: str, dataset: str) -> CellResult | None:
        for c in self.cells:
            if c.cell.model_name == model_name and c.cell.dataset == dataset:
                return c
        return None

    def avg_f1(self, model_name: str) -> float | None:
        """Mean F1 over the grid's datasets; None if any cell is missing or failed."""
        values = []
        for ds in self.spec.datasets:
            c = self.lookup(model_name, ds)
            if c is None or c.report is None:
                return None
            values.append(c.report.f1)
        return sum(values) / len(values)


def cells_for(spec: GridSpec) -> list[Cell]:
    cells = []
    for mode in spec.modes:
        for gcn in spec.gcn:
            for enc in spec.encoders:
                for ds in spec.datasets:
                    cells.append(Cell(ds, enc, mode, gcn))
        for removed in spec.ablations:
            order = [c for c in ("gcn", "post", "posn") if c in removed]
            if mode == "B" and "post" in order:
                order.remove("post")  # mode B never uses POST
            for ds in spec.datasets:
                cells.append(Cell(ds, spec.ablation_encoder, mode, True, tuple(order)))
    # de-duplicate, keep order
    seen, out = set(), []
    for c in cells:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def cell_config(exp: ExperimentConfig, cell: Cell, gcn_layers: int, contextual_dim: int | None = None
                ) -> tuple[ModelConfig, TrainConfig]:
    base = exp.model
    if cell.mode == "G":
        inp = replace(base.input, mode="G")
        tcfg = exp.train
    else:
        inp = InputConfig.for_mode("B", dropout_rate=base.input.dropout_rate, max_distance=base.input.max_distance)
        if contextual_dim:
            inp.contextual_dim = contextual_dim
        tcfg = exp.train_contextual
    if "posn" in cell.removed:
        inp = replace(inp, use_posn=False)
    if "post" in cell.removed:
        inp = replace(inp, use_post=False)
    enc = replace(base.encoder, kind=cell.encoder)
    gcn = replace(base.gcn, layers=gcn_layers if cell.gcn and "gcn" not in cell.removed else 0)
    return ModelConfig(inp, enc, gcn), tcfg


def _contextual_dim(bundle: DatasetBundle) -> int | None:
    if bundle.train_contextual:
        return next(iter(bundle.train_contextual.values())).shape[1]
    return None


def run_cell(exp: ExperimentConfig, cell: Cell, bundle: DatasetBundle) -> CellResult:
    result = CellResult(cell)
    spec = exp.grid
    cdim = _contextual_dim(bundle)
    word_vectors = None
    vocab_instances = ()
    if cell.mode == "G" and exp.word_vectors:
        path = exp.word_vectors
        word_vectors = lambda vocab: load_pretrained_vectors(  # noqa: E731
            path, vocab, trainable=exp.model.input.train_word_vectors)
        vocab_instances = bundle.test.instances

    def fit(layers: int, seed: int):
        mcfg, tcfg = cell_config(exp, cell, layers, cdim)
        return train(bundle.train, mcfg, replace(tcfg, seed=seed), word_vectors=word_vectors,
                     contextual=bundle.train_contextual, vocab_instances=vocab_instances)

    use_gcn = cell.gcn and "gcn" not in cell.removed
    layers = 0
    first = None
    if use_gcn:
        candidates = list(spec.gcn_layers)
        if len(candidates) == 1:
            layers = candidates[0]
        else:
            fits = {}
            for k in candidates:
                fits[k] = fit(k, spec.seeds[0])
                result.layer_search[k] = fits[k].best_dev_f1
            layers = max(candidates, key=lambda k: (result.layer_search[k], -k))
            first = fits[layers]
    result.gcn_layers = layers

    reports = []
    for i, seed in enumerate(spec.seeds):
        ck = first if (i == 0 and first is not None) else fit(layers, seed)
        result.best_dev_f1.append(ck.best_dev_f1)
        reports.append(Predictor(ck).evaluate(bundle.test, bundle.test_contextual))
    result.report = aggregate(reports, spec.seeds)
    return result


def _run_cell_safe(exp: ExperimentConfig, cell: Cell, loader) -> CellResult:
    try:
        bundle = loader(exp, cell.dataset, cell.mode == "B")
        return run_cell(exp, cell, bundle)
    except Exception as e:  # failures are recorded per cell; the grid continues
        log.error("cell %s on %s failed: %s", cell.model_name, cell.dataset, e)
        return CellResult(cell, error=f"{type(e).__name__}: {e}\n{traceback.format_exc(limit=3)}")


def run_grid(exp: ExperimentConfig, loader: Callable[..., DatasetBundle] = load_bundle,
             on_cell: Callable[[CellResult], None] | None = None) -> GridResult:
    spec = exp.grid.validate()
    cells = cells_for(spec)
    results: list[CellResult] = []
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            futures = [pool.submit(_run_cell_safe, exp, c, loader) for c in cells]
            for f in futures:
                results.append(f.result())
                if on_cell:
                    on_cell(results[-1])
    else:
        for c in cells:
            results.append(_run_cell_safe(exp, c, loader))
            if on_cell:
                on_cell(results[-1])
    return GridResult(spec, results)


# ---------------------------------------------------------------- rendering

def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.2f}"


def render_table(result: GridResult, ablation: bool = False) -> str:
    """Markdown table: one row per model, Prec/Rec/F1 per dataset, then Avg.F1
    (omitted for ablation tables)."""
    datasets = result.spec.datasets
    header = ["Model"] + [f"{ds} {m}" for ds in datasets for m in ("Prec", "Rec", "F1")]
    if not ablation:
        header.append("Avg.F1")
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    names = []
    for c in result.cells:
        if bool(c.cell.removed) == ablation or (ablation and c.cell.gcn and not c.cell.removed):
            if c.cell.model_name not in names:
                names.append(c.cell.model_name)
    if ablation:
        # full models first, each followed by its ablations
        fulls = [n for n in names if "---" not in n]
        names = [x for f in fulls for x in [f] + [n for n in names if n.startswith(f + " ---")]]
    for name in names:
        row = [name]
        for ds in datasets:
            c = result.lookup(name, ds)
            rep = c.report if c else None
            row += [_fmt(rep.precision if rep else None), _fmt(rep.recall if rep else None),
                    _fmt(rep.f1 if rep else None)]
        if not ablation:
            row.append(_fmt(result.avg_f1(name)))
        lines.append("| " + " | ".join(row) + " |")
    failed = [c for c in result.cells if c.error]
    if failed:
        lines.append("")
        lines += [f"- failed: {c.cell.model_name} on {c.cell.dataset}: {c.error.splitlines()[0]}" for c in failed]
    return "\n".join(lines)
