"""Featurizer -> encoder -> optional residual GCN -> linear + softmax tagger,
trained with token-level cross-entropy and Adam."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ConfigError, ModelConfig, TrainConfig, from_dict
from .corpus import LABELS, DatasetSplit, Instance, bio_decode, sentence_key
from .encoders import build_encoder
from .evaluation import EvalReport, score
from .featurize import (EmbeddingTable, FeatureError, Featurizer, FeatureTables, Vocab, collate,
                        index_instance)
from .gcn import GCN, batch_adjacency

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}


class TrainingError(RuntimeError):
    pass


class InferenceError(RuntimeError):
    pass


def classify(h: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """Per-token distribution over (O, B, I)."""
    logits = h @ weight.T
    if bias is not None:
        logits = logits + bias
    return torch.softmax(logits, dim=-1)


def loss(probs: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """Mean over tokens of -log p(gold)."""
    picked = probs.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked).mean()


def decide(probs: np.ndarray) -> list[str]:
    # np.argmax keeps the first maximum, so ties go to O, then B, then I
    return [LABELS[k] for k in np.argmax(probs, axis=-1)]


class TOWEModel(nn.Module):
    def __init__(self, config: ModelConfig, tables: FeatureTables):
        super().__init__()
        config.validate()
        self.config = config
        self.featurizer = Featurizer(config.input, tables)
        self.encoder = build_encoder(config.encoder, self.featurizer.output_dim)
        h = self.encoder.output_dim
        self.gcn = GCN(h, config.gcn.layers, config.gcn.normalize) if config.gcn.layers else None
        self.classifier = nn.Linear(h, config.num_labels)
        nn.init.xavier_uniform_(self.classifier.weight)
        nn.init.zeros_(self.classifier.bias)

    def hidden(self, batch: dict) -> torch.Tensor:
        x = self.featurizer(batch)
        h = self.encoder(x, batch["mask"])
        if self.gcn is not None:
            h = self.gcn(h, batch["adjacency"])
        return h

    def forward(self, batch: dict) -> torch.Tensor:
        """Logits (batch, n, 3)."""
        return self.classifier(self.hidden(batch))


# ---------------------------------------------------------------- data plumbing

class Encoded:
    """Instances indexed once against a model's vocabularies."""

    def __init__(self, instances: Sequence[Instance], config: ModelConfig, tables: FeatureTables,
                 contextual: Mapping[str, np.ndarray] | None = None, with_labels: bool = True):
        if config.gcn.layers and not all(inst.has_parse for inst in instances):
            raise InferenceError("GCN enabled but some instances lack dependency parses")
        self.instances = list(instances)
        self.items = []
        for inst in self.instances:
            ctx = None
            if config.input.mode == "B" and config.input.use_word:
                key = sentence_key(inst)
                if contextual is None or key not in contextual:
                    raise InferenceError(f"no contextual vectors for sentence {key!r}")
                ctx = contextual[key]
            try:
                item = index_instance(inst, config.input, tables, ctx)
            except FeatureError as e:
                raise InferenceError(str(e)) from None
            if with_labels:
                item["labels"] = [LABEL_INDEX[lab] for lab in inst.gold_labels]
            self.items.append(item)
        self.use_adjacency = config.gcn.layers > 0

    def __len__(self):
        return len(self.items)

    def batch(self, idx: Sequence[int], dtype=torch.float32) -> dict:
        b = collate([self.items[i] for i in idx], dtype)
        if self.use_adjacency:
            b["adjacency"] = batch_adjacency([self.instances[i] for i in idx], b["mask"].shape[1], dtype)
        return b


def predict_probs(model: TOWEModel, data: Encoded, batch_size: int = 64) -> list[np.ndarray]:
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    out = []
    with torch.no_grad():
        for s in range(0, len(data), batch_size):
            idx = list(range(s, min(s + batch_size, len(data))))
            b = data.batch(idx, dtype)
            probs = torch.softmax(model(b), dim=-1).cpu().numpy()
            for k, i in enumerate(idx):
                out.append(probs[k, : data.items[i]["n"]])
    model.train(was_training)
    return out


def evaluate_model(model: TOWEModel, data: Encoded) -> tuple[EvalReport, list[list[str]]]:
    labels = [decide(p) for p in predict_probs(model, data)]
    report = score([bio_decode(lab) for lab in labels], [inst.opinion_spans for inst in data.instances])
    return report, labels


# ---------------------------------------------------------------- checkpoints

def _vocab_hash(vocab: Vocab) -> str:
    return hashlib.sha256("\n".join(vocab.itos).encode()).hexdigest()


@dataclass
class Checkpoint:
    config: ModelConfig
    state: dict
    word_vocab: list[str]
    tag_vocab: list[str]
    seed: int
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = 0.0
    train_config: TrainConfig | None = None

    def build_model(self) -> TOWEModel:
        word_vocab, tag_vocab = Vocab(self.word_vocab[2:]), Vocab(self.tag_vocab[2:])
        tables = FeatureTables.build(self.config.input, word_vocab, tag_vocab)
        model = TOWEModel(self.config, tables)
        dtype = next(iter(self.state.values())).dtype
        model.to(dtype)
        model.load_state_dict(self.state)
        model.eval()
        return model

    def save(self, path):
        blob = {
            "format": "towe-checkpoint",
            "version": CHECKPOINT_VERSION,
            "config": dataclasses.asdict(self.config),
            "train_config": dataclasses.asdict(self.train_config) if self.train_config else None,
            "state": self.state,
            "word_vocab": self.word_vocab,
            "tag_vocab": self.tag_vocab,
            "word_vocab_sha256": _vocab_hash(Vocab(self.word_vocab[2:])),
            "tag_vocab_sha256": _vocab_hash(Vocab(self.tag_vocab[2:])),
            "seed": self.seed,
            "history": self.history,
            "best_epoch": self.best_epoch,
            "best_dev_f1": self.best_dev_f1,
        }
        torch.save(blob, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        blob = torch.load(Path(path), map_location="cpu", weights_only=True)
        if blob.get("format") != "towe-checkpoint":
            raise ValueError(f"{path} is not a checkpoint file")
        if blob["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {blob['version']}")
        for key in ("word", "tag"):
            if _vocab_hash(Vocab(blob[f"{key}_vocab"][2:])) != blob[f"{key}_vocab_sha256"]:
                raise ValueError(f"{path}: {key} vocabulary does not match its hash")
        tc = blob.get("train_config")
        return cls(
            config=from_dict(ModelConfig, blob["config"]),
            state=blob["state"],
            word_vocab=blob["word_vocab"],
            tag_vocab=blob["tag_vocab"],
            seed=blob["seed"],
            history=blob["history"],
            best_epoch=blob["best_epoch"],
            best_dev_f1=blob["best_dev_f1"],
            train_config=from_dict(TrainConfig, tc) if tc else None,
        )


class Predictor:
    def __init__(self, checkpoint: Checkpoint):
        self.checkpoint = checkpoint
        self.model = checkpoint.build_model()
        self.word_vocab = Vocab(checkpoint.word_vocab[2:])
        self.tag_vocab = Vocab(checkpoint.tag_vocab[2:])

    def encoded(self, instances, contextual=None) -> Encoded:
        tables = self.model_tables()
        return Encoded(instances, self.checkpoint.config, tables, contextual, with_labels=False)

    def model_tables(self) -> FeatureTables:
        # only the vocabularies are consulted when indexing
        return FeatureTables(self.word_vocab, self.tag_vocab)

    def predict_many(self, instances: Sequence[Instance], contextual=None) -> list[list[str]]:
        data = self.encoded(instances, contextual)
        return [decide(p) for p in predict_probs(self.model, data)]

    def evaluate(self, split: DatasetSplit, contextual=None) -> EvalReport:
        labels = self.predict_many(split.instances, contextual)
        return score([bio_decode(lab) for lab in labels], [inst.opinion_spans for inst in split.instances])


def predict(checkpoint: Checkpoint | Predictor, instance: Instance, contextual=None) -> list[str]:
    predictor = checkpoint if isinstance(checkpoint, Predictor) else Predictor(checkpoint)
    return predictor.predict_many([instance], contextual)[0]


# ---------------------------------------------------------------- training

def dev_split(n: int, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Indices (train, dev); the dev slice is a seeded random ``fraction`` of ``n``."""
    perm = np.random.default_rng(seed).permutation(n)
    n_dev = max(1, int(round(fraction * n)))
    if n_dev >= n:
        raise ConfigError(f"dev fraction {fraction} leaves no training data out of {n} instances")
    return sorted(perm[n_dev:].tolist()), sorted(perm[:n_dev].tolist())


def train(train_split: DatasetSplit, config: ModelConfig, train_cfg: TrainConfig,
          word_vectors: Callable[[Vocab], EmbeddingTable] | EmbeddingTable | None = None,
          contextual: Mapping[str, np.ndarray] | None = None,
          vocab_instances: Iterable[Instance] = (),
          on_epoch: Callable[[dict], None] | None = None) -> Checkpoint:
    """Fit on a seeded (1 - dev_fraction) share of ``train_split`` and keep the
    parameters with the best dev F1.

    ``word_vectors`` is a table already aligned with the vocabulary, or a
    callable building one from it. ``vocab_instances`` only widen the word
    vocabulary (useful with frozen pretrained vectors); their labels are never read.
    """
    config.validate()
    train_cfg.validate()
    if not train_split.instances:
        raise ConfigError(f"training split {train_split.name!r} is empty")
    seed = train_cfg.seed
    torch.manual_seed(seed)
    dtype = torch.float64 if train_cfg.float64 else torch.float32

    instances = train_split.instances
    word_vocab = Vocab.from_instances([*instances, *vocab_instances], "word")
    tag_vocab = Vocab.from_instances(instances, "tag")
    table = word_vectors(word_vocab) if callable(word_vectors) else word_vectors
    if table is not None and table.num_entries != len(word_vocab):
        raise ConfigError(f"word vector table has {table.num_entries} rows for a vocabulary of {len(word_vocab)}")
    tables = FeatureTables.build(config.input, word_vocab, tag_vocab, seed=seed, word=table)
    model = TOWEModel(config, tables).to(dtype)

    tr_idx, dev_idx = dev_split(len(instances), train_cfg.dev_fraction, seed)
    data = Encoded(instances, config, tables, contextual)
    dev = Encoded([instances[i] for i in dev_idx], config, tables, contextual)

    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=train_cfg.learning_rate, weight_decay=train_cfg.weight_decay)
    shuffler = torch.Generator().manual_seed(seed)

    best_state = copy.deepcopy(model.state_dict())
    best_f1, _ = evaluate_model(model, dev)
    best_f1, best_epoch = best_f1.f1, 0
    history = [{"epoch": 0, "loss": None, "dev_f1": best_f1}]
    stale = 0
    for epoch in range(1, train_cfg.epochs + 1):
        model.train()
        order = torch.randperm(len(tr_idx), generator=shuffler).tolist()
        total, count = 0.0, 0
        for s in range(0, len(order), train_cfg.batch_size):
            batch = data.batch([tr_idx[k] for k in order[s:s + train_cfg.batch_size]], dtype)
            logits = model(batch)
            value = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), batch["labels"].reshape(-1),
                                    ignore_index=-100)
            if not torch.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}; lower the learning rate "
                                    f"(currently {train_cfg.learning_rate}) or check the inputs")
            opt.zero_grad()
            value.backward()
            if train_cfg.clip_norm:
                nn.utils.clip_grad_norm_(params, train_cfg.clip_norm)
            opt.step()
            total += value.item()
            count += 1
        report, _ = evaluate_model(model, dev)
        record = {"epoch": epoch, "loss": total / count, "dev_f1": report.f1}
        history.append(record)
        if on_epoch:
            on_epoch(record)
        log.debug("epoch %d loss %.4f dev F1 %.4f", epoch, record["loss"], report.f1)
        if report.f1 > best_f1:
            best_f1, best_epoch, stale = report.f1, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if train_cfg.patience is not None and stale >= train_cfg.patience:
                break

    return Checkpoint(config=config, state=best_state, word_vocab=list(word_vocab.itos),
                      tag_vocab=list(tag_vocab.itos), seed=seed, history=history, best_epoch=best_epoch,
                      best_dev_f1=best_f1, train_config=train_cfg)


def untrained_checkpoint(train_split: DatasetSplit, config: ModelConfig, seed: int = 1) -> Checkpoint:
    """Randomly initialised model over the split's vocabularies."""
    torch.manual_seed(seed)
    word_vocab = Vocab.from_instances(train_split.instances, "word")
    tag_vocab = Vocab.from_instances(train_split.instances, "tag")
    tables = FeatureTables.build(config.input, word_vocab, tag_vocab, seed=seed)
    model = TOWEModel(config, tables)
    return Checkpoint(config, copy.deepcopy(model.state_dict()), list(word_vocab.itos), list(tag_vocab.itos), seed)

