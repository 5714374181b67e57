"""Per-token input features: word vectors, target-distance (POSN) and POS-tag (POST)
embeddings, or precomputed contextual vectors plus POSN."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .config import ConfigError, InputConfig
from .corpus import Instance, Span, sentence_key

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"


class FeatureError(ValueError):
    pass


class LoadError(ValueError):
    pass


class Vocab:
    """String <-> index map with reserved padding (0) and unknown (1) entries."""

    def __init__(self, items: Iterable[str] = ()):
        self.itos = [PAD, UNK]
        self.stoi = {PAD: 0, UNK: 1}
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        if item not in self.stoi:
            self.stoi[item] = len(self.itos)
            self.itos.append(item)
        return self.stoi[item]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, item):
        return item in self.stoi

    def __getitem__(self, item: str) -> int:
        return self.stoi.get(item, 1)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    @classmethod
    def from_instances(cls, instances: Iterable[Instance], what: str = "word") -> "Vocab":
        vocab = cls()
        for inst in instances:
            for tok in inst.tokens:
                item = tok.surface if what == "word" else tok.pos_tag
                if item is not None:
                    vocab.add(item)
        return vocab


@dataclass
class EmbeddingTable:
    weights: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        if self.weights.ndim != 2:
            raise ValueError("embedding weights must be a matrix")
        if not np.isfinite(self.weights).all():
            raise ValueError("embedding weights contain non-finite entries")

    @property
    def num_entries(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def lookup(self, index: int) -> np.ndarray:
        if not 0 <= index < self.num_entries:
            raise IndexError(f"embedding index {index} outside [0, {self.num_entries})")
        return self.weights[index]

    @classmethod
    def random(cls, num_entries: int, dim: int, rng: np.random.Generator, scale: float = 0.25,
               trainable: bool = True) -> "EmbeddingTable":
        w = rng.uniform(-scale, scale, size=(num_entries, dim))
        w[0] = 0.0  # padding row
        return cls(w, trainable)


def relative_distances(n: int, target_span: Span, max_distance: int | None = None) -> list[int]:
    """Signed distance of each token to the target: 0 inside the span, otherwise
    the offset from the nearest span boundary token."""
    start, end = target_span
    out = []
    for i in range(n):
        if i < start:
            d = i - start
        elif i >= end:
            d = i - (end - 1)
        else:
            d = 0
        if max_distance is not None:
            d = max(-max_distance, min(max_distance, d))
        out.append(d)
    return out


def load_pretrained_vectors(path, vocab: Vocab, trainable: bool = False,
                            rng: np.random.Generator | None = None) -> EmbeddingTable:
    """Read a ``word f1 ... fd`` text file, keeping rows for ``vocab`` words.

    Words missing from the file share one vector drawn from U[-0.25, 0.25].
    Exact matches win over lower-cased ones.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    found: dict[int, np.ndarray] = {}
    lowered: dict[int, np.ndarray] = {}
    lower_index: dict[str, list[int]] = {}
    for word, idx in vocab.stoi.items():
        if idx > 1:
            lower_index.setdefault(word.lower(), []).append(idx)
    dim = None
    with open(path, encoding="utf-8", errors="replace") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue  # word2vec-style "<count> <dim>" header
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise LoadError(f"{path}:{lineno}: expected {dim} values, found {len(values)}")
            exact = vocab.stoi.get(word)
            cands = lower_index.get(word.lower())
            if exact is None and not cands:
                continue
            try:
                vec = np.asarray(values, dtype=np.float32)
            except ValueError:
                raise LoadError(f"{path}:{lineno}: non-numeric value") from None
            if exact is not None and exact > 1:
                found[exact] = vec
            for idx in cands or ():
                lowered.setdefault(idx, vec)
    if dim is None:
        raise LoadError(f"{path}: no vectors found")
    oov = rng.uniform(-0.25, 0.25, size=dim).astype(np.float32)
    weights = np.tile(oov, (len(vocab), 1))
    weights[0] = 0.0
    hits = 0
    for idx in range(2, len(vocab)):
        vec = found.get(idx, lowered.get(idx))
        if vec is not None:
            weights[idx] = vec
            hits += 1
    if hits == 0:
        log.warning("none of the %d vocabulary words occur in %s", len(vocab) - 2, path)
    return EmbeddingTable(weights, trainable)


@dataclass
class FeatureTables:
    word_vocab: Vocab
    tag_vocab: Vocab
    word: EmbeddingTable | None = None
    posn: EmbeddingTable | None = None
    post: EmbeddingTable | None = None

    @classmethod
    def build(cls, config: InputConfig, word_vocab: Vocab, tag_vocab: Vocab, seed: int = 0,
              word: EmbeddingTable | None = None) -> "FeatureTables":
        rng = np.random.default_rng(seed)
        tables = cls(word_vocab, tag_vocab)
        if config.mode == "G" and config.use_word:
            tables.word = word or EmbeddingTable.random(len(word_vocab), config.word_dim, rng,
                                                        trainable=config.train_word_vectors)
            tables.word.trainable = config.train_word_vectors
        if config.use_posn:
            tables.posn = EmbeddingTable.random(2 * config.max_distance + 2, config.posn_dim, rng)
        if config.mode == "G" and config.use_post:
            tables.post = EmbeddingTable.random(len(tag_vocab), config.post_dim, rng)
        return tables


def check_tables(config: InputConfig, tables: FeatureTables):
    need = []
    if config.mode == "G" and config.use_word:
        need.append(("word", config.word_dim))
    if config.use_posn:
        need.append(("posn", config.posn_dim))
    if config.mode == "G" and config.use_post:
        need.append(("post", config.post_dim))
    for name, dim in need:
        table = getattr(tables, name)
        if table is None:
            raise ConfigError(f"channel {name!r} is active but no table was supplied")
        if table.dim != dim:
            raise ConfigError(f"{name} table has dim {table.dim}, config says {dim}")


def index_instance(inst: Instance, config: InputConfig, tables: FeatureTables,
                   contextual: np.ndarray | None = None) -> dict:
    """Integer ids (and contextual rows) for one instance."""
    n = len(inst)
    item = {
        "n": n,
        "word_ids": [tables.word_vocab[w] for w in inst.words],
        "tag_ids": [tables.tag_vocab[t] if t is not None else 1 for t in inst.pos_tags],
        # shift by max_distance + 1 so that index 0 stays the padding row
        "dist_ids": [d + config.max_distance + 1 for d in relative_distances(n, inst.target_span, config.max_distance)],
    }
    if config.mode == "B" and config.use_word:
        if contextual is None:
            raise FeatureError(f"mode B needs contextual vectors for sentence {sentence_key(inst)!r}")
        contextual = np.asarray(contextual, dtype=np.float32)
        if contextual.ndim != 2 or contextual.shape[0] != n:
            raise FeatureError(f"contextual matrix has shape {contextual.shape}, sentence has {n} tokens")
        if contextual.shape[1] != config.contextual_dim:
            raise FeatureError(f"contextual dim {contextual.shape[1]} != configured {config.contextual_dim}")
        item["contextual"] = contextual
    return item


def collate(items: Sequence[dict], dtype=torch.float32) -> dict:
    """Pad a list of indexed instances into batch tensors with a boolean mask."""
    b = len(items)
    n = max(it["n"] for it in items)
    batch = {"mask": torch.zeros(b, n, dtype=torch.bool)}
    for key in ("word_ids", "tag_ids", "dist_ids"):
        t = torch.zeros(b, n, dtype=torch.long)
        for i, it in enumerate(items):
            t[i, : it["n"]] = torch.tensor(it[key])
        batch[key] = t
    for i, it in enumerate(items):
        batch["mask"][i, : it["n"]] = True
    if "contextual" in items[0]:
        dc = items[0]["contextual"].shape[1]
        t = torch.zeros(b, n, dc, dtype=dtype)
        for i, it in enumerate(items):
            t[i, : it["n"]] = torch.from_numpy(it["contextual"]).to(dtype)
        batch["contextual"] = t
    if "labels" in items[0]:
        t = torch.full((b, n), -100, dtype=torch.long)
        for i, it in enumerate(items):
            t[i, : it["n"]] = torch.tensor(it["labels"])
        batch["labels"] = t
    return batch


def _embedding(table: EmbeddingTable) -> nn.Embedding:
    emb = nn.Embedding.from_pretrained(torch.from_numpy(table.weights.copy()), freeze=not table.trainable,
                                       padding_idx=0)
    return emb


class Featurizer(nn.Module):
    """Concatenates the active channels into an (batch, n, d) feature tensor."""

    def __init__(self, config: InputConfig, tables: FeatureTables):
        super().__init__()
        check_tables(config, tables)
        self.config = config
        self.word = _embedding(tables.word) if config.mode == "G" and config.use_word else None
        self.posn = _embedding(tables.posn) if config.use_posn else None
        self.post = _embedding(tables.post) if config.mode == "G" and config.use_post else None
        self.dropout = nn.Dropout(config.dropout_rate)

    @property
    def output_dim(self) -> int:
        return self.config.feature_dim

    def forward(self, batch: dict) -> torch.Tensor:
        parts = []
        if self.config.mode == "G":
            if self.word is not None:
                parts.append(self.word(batch["word_ids"]))
        elif self.config.use_word:
            parts.append(batch["contextual"].to(self.posn.weight.dtype if self.posn is not None else torch.float32))
        if self.posn is not None:
            parts.append(self.posn(batch["dist_ids"]))
        if self.post is not None:
            parts.append(self.post(batch["tag_ids"]))
        x = torch.cat(parts, dim=-1)
        return self.dropout(x)


def build_features(instance: Instance, config: InputConfig, tables: FeatureTables,
                   contextual: np.ndarray | None = None, training: bool = False,
                   generator: torch.Generator | None = None) -> np.ndarray:
    """Feature matrix (n x d) for one instance; dropout only when ``training``."""
    featurizer = Featurizer(config, tables)
    batch = collate([index_instance(instance, config, tables, contextual)])
    with torch.no_grad():
        featurizer.dropout.p = 0.0
        x = featurizer(batch)[0]
        if training and config.dropout_rate > 0:
            keep = torch.rand(x.shape, generator=generator) >= config.dropout_rate
            x = x * keep / (1 - config.dropout_rate)
    return x.numpy()


# ---------------------------------------------------------------- contextual sidecar

def save_contextual(path, vectors: Mapping[str, np.ndarray]):
    """Sidecar layout: an ``.npz`` archive, one float32 array per sentence id,
    rows in token order."""
    np.savez(path, **{sid: np.asarray(m, dtype=np.float32) for sid, m in vectors.items()})


def load_contextual(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise FeatureError(f"contextual sidecar not found: {path}")
    with np.load(path) as data:
        return {k: data[k] for k in data.files}
