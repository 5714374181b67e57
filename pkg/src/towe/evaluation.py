"""Exact-match span precision / recall / F1, micro-averaged over spans."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import Span


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    num_pred_spans: int = 0
    num_gold_spans: int = 0
    num_correct: int = 0
    runs: list["EvalReport"] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)

    @classmethod
    def from_counts(cls, correct: int, pred: int, gold: int) -> "EvalReport":
        p = correct / pred if pred else 0.0
        r = correct / gold if gold else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f, pred, gold, correct)

    def as_percent(self) -> dict:
        return {"precision": 100 * self.precision, "recall": 100 * self.recall, "f1": 100 * self.f1}

    def to_dict(self) -> dict:
        d = {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "num_pred_spans": self.num_pred_spans, "num_gold_spans": self.num_gold_spans,
            "num_correct": self.num_correct,
        }
        if self.runs:
            d["runs"] = [r.to_dict() for r in self.runs]
            d["seeds"] = list(self.seeds)
            d["f1_std"] = statistics.pstdev(r.f1 for r in self.runs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        runs = [cls.from_dict(r) for r in d.get("runs", [])]
        return cls(d["precision"], d["recall"], d["f1"], d.get("num_pred_spans", 0), d.get("num_gold_spans", 0),
                   d.get("num_correct", 0), runs, list(d.get("seeds", [])))


def score(pred_spans: Sequence[Iterable[Span]], gold_spans: Sequence[Iterable[Span]]) -> EvalReport:
    """A predicted span counts only if it equals a gold span of the same instance."""
    if len(pred_spans) != len(gold_spans):
        raise ValueError(f"{len(pred_spans)} predictions for {len(gold_spans)} gold instances")
    correct = n_pred = n_gold = 0
    for pred, gold in zip(pred_spans, gold_spans):
        pred, gold = set(pred), set(gold)
        n_pred += len(pred)
        n_gold += len(gold)
        correct += len(pred & gold)
    return EvalReport.from_counts(correct, n_pred, n_gold)


def aggregate(reports: Sequence[EvalReport], seeds: Sequence[int] = ()) -> EvalReport:
    """Mean of per-run P/R/F1 (as reported 'across runs'); counts are summed."""
    if not reports:
        raise ValueError("nothing to aggregate")
    mean = lambda xs: sum(xs) / len(xs)  # noqa: E731
    return EvalReport(
        precision=mean([r.precision for r in reports]),
        recall=mean([r.recall for r in reports]),
        f1=mean([r.f1 for r in reports]),
        num_pred_spans=sum(r.num_pred_spans for r in reports),
        num_gold_spans=sum(r.num_gold_spans for r in reports),
        num_correct=sum(r.num_correct for r in reports),
        runs=list(reports),
        seeds=list(seeds),
    )
