"""Dataclass configs for models, training, grids and whole experiments."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


ENCODER_KINDS = ("cnn", "transformer", "bilstm", "onlstm")


@dataclass
class InputConfig:
    mode: str = "G"  # "G": word vectors + POSN + POST; "B": contextual vectors + POSN
    use_word: bool = True
    use_posn: bool = True
    use_post: bool = True
    word_dim: int = 300
    posn_dim: int = 30
    post_dim: int = 30
    contextual_dim: int = 768
    dropout_rate: float = 0.8
    max_distance: int = 100
    train_word_vectors: bool = False

    def validate(self):
        if self.mode not in ("G", "B"):
            raise ConfigError(f"input mode must be G or B, got {self.mode!r}")
        if self.mode == "B" and self.use_post:
            raise ConfigError("mode B does not use POS-tag embeddings; set use_post false")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for name in ("word_dim", "posn_dim", "post_dim", "contextual_dim", "max_distance"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.feature_dim == 0:
            raise ConfigError("no input channel is active")
        return self

    @property
    def feature_dim(self) -> int:
        d = 0
        if self.mode == "G":
            d += self.word_dim * self.use_word + self.post_dim * self.use_post
        else:
            d += self.contextual_dim * self.use_word
        return d + self.posn_dim * self.use_posn

    @classmethod
    def for_mode(cls, mode: str, **kw) -> "InputConfig":
        if mode == "B":
            kw = {"use_post": False, "posn_dim": 100, **kw}
        return cls(mode=mode, **kw)


@dataclass
class EncoderConfig:
    kind: str = "bilstm"
    hidden_dim: int = 200  # per direction for the recurrent encoders
    cnn_filter_widths: tuple[int, ...] = (3, 4, 5)
    cnn_channels: int = 100  # per width
    transformer_layers: int = 2
    transformer_heads: int = 4
    transformer_ff_dim: int = 400
    transformer_dropout: float = 0.1
    onlstm_chunk_size: int = 10

    def validate(self):
        if self.kind not in ENCODER_KINDS:
            raise ConfigError(f"encoder kind must be one of {ENCODER_KINDS}, got {self.kind!r}")
        if self.hidden_dim <= 0:
            raise ConfigError("hidden_dim must be positive")
        if self.kind == "onlstm" and self.hidden_dim % self.onlstm_chunk_size:
            raise ConfigError(f"ON-LSTM chunk size {self.onlstm_chunk_size} does not divide hidden_dim {self.hidden_dim}")
        if self.kind == "transformer" and self.hidden_dim % self.transformer_heads:
            raise ConfigError("transformer heads must divide hidden_dim")
        return self

    @property
    def output_dim(self) -> int:
        if self.kind == "cnn":
            return self.cnn_channels * len(self.cnn_filter_widths)
        if self.kind == "transformer":
            return self.hidden_dim
        return 2 * self.hidden_dim

    @classmethod
    def for_kind(cls, kind: str, **kw) -> "EncoderConfig":
        if kind == "cnn":
            kw = {"hidden_dim": 300, **kw}
        return cls(kind=kind, **kw)


@dataclass
class GcnConfig:
    layers: int = 0  # 0 disables the GCN
    normalize: bool = False

    def validate(self):
        if not 0 <= self.layers <= 5:
            raise ConfigError(f"GCN layers must be in 0..5, got {self.layers}")
        return self


@dataclass
class ModelConfig:
    input: InputConfig = field(default_factory=InputConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    gcn: GcnConfig = field(default_factory=GcnConfig)
    num_labels: int = 3

    def validate(self):
        self.input.validate()
        self.encoder.validate()
        self.gcn.validate()
        if self.num_labels != 3:
            raise ConfigError("the label set is {O, B, I}")
        return self


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 16
    seed: int = 1
    dev_fraction: float = 0.2
    patience: int | None = None  # epochs without dev improvement before stopping
    clip_norm: float | None = 5.0
    weight_decay: float = 0.0
    float64: bool = False

    def validate(self):
        if self.learning_rate < 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("learning_rate must be >= 0; epochs and batch_size positive")
        if not 0 < self.dev_fraction < 1:
            raise ConfigError(f"dev_fraction must be in (0, 1), got {self.dev_fraction}")
        return self

    @classmethod
    def for_mode(cls, mode: str, **kw) -> "TrainConfig":
        if mode == "B":
            kw = {"learning_rate": 1e-5, "batch_size": 6, "epochs": 10, "patience": 3, **kw}
        return cls(**kw)


@dataclass
class GridSpec:
    datasets: list[str] = field(default_factory=lambda: ["lap14", "res14", "res15", "res16"])
    encoders: list[str] = field(default_factory=lambda: list(ENCODER_KINDS))
    modes: list[str] = field(default_factory=lambda: ["G"])
    gcn: list[bool] = field(default_factory=lambda: [False, True])
    gcn_layers: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    # each entry names components removed from the full BiLSTM+GCN model, e.g. ["gcn", "post"]
    ablations: list[list[str]] = field(default_factory=list)
    ablation_encoder: str = "bilstm"
    workers: int = 1

    def validate(self):
        for axis in ("datasets", "encoders", "modes", "gcn", "seeds"):
            if not getattr(self, axis):
                raise ConfigError(f"grid axis {axis!r} is empty")
        for kind in self.encoders:
            if kind not in ENCODER_KINDS:
                raise ConfigError(f"unknown encoder {kind!r}")
        for mode in self.modes:
            if mode not in ("G", "B"):
                raise ConfigError(f"unknown input mode {mode!r}")
        for removed in self.ablations:
            bad = set(removed) - {"gcn", "post", "posn"}
            if bad:
                raise ConfigError(f"unknown ablation component(s) {sorted(bad)}")
        if any(not 1 <= k <= 5 for k in self.gcn_layers):
            raise ConfigError("gcn_layers candidates must lie in 1..5")
        return self


@dataclass
class ExperimentConfig:
    data_root: str | None = None
    word_vectors: str | None = None
    # dataset name -> {"train": path, "test": path, "train_contextual": path, ...};
    # datasets not listed here are looked up as <data_root>/<name>/<split>.jsonl
    datasets: dict[str, dict[str, str]] = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    # training settings for contextual-vector (mode B) runs
    train_contextual: TrainConfig = field(default_factory=lambda: TrainConfig.for_mode("B"))
    grid: GridSpec = field(default_factory=GridSpec)
    out_dir: str = "runs"
    seed: int = 1

    def validate(self, check_paths: bool = True):
        self.model.validate()
        self.train.validate()
        self.train_contextual.validate()
        self.grid.validate()
        if check_paths:
            if self.word_vectors and not Path(self.word_vectors).exists():
                raise ConfigError(f"word vector file not found: {self.word_vectors}")
            for name, files in self.datasets.items():
                for role, p in files.items():
                    if not Path(p).exists():
                        raise ConfigError(f"dataset {name}: {role} file not found: {p}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def dump(self, path):
        Path(path).write_text(yaml.safe_dump(_plain(self.to_dict()), sort_keys=False))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
        return from_dict(cls, raw)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def from_dict(cls, raw):
    """Rebuild a (nested) config dataclass from plain data, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} field(s): {sorted(unknown)}")
    kw = {}
    for name, value in raw.items():
        sub = _NESTED.get((cls.__name__, name))
        if sub is not None:
            kw[name] = from_dict(sub, value)
        elif name == "cnn_filter_widths":
            kw[name] = tuple(value)
        else:
            kw[name] = value
    return cls(**kw)


_NESTED = {
    ("ModelConfig", "input"): InputConfig,
    ("ModelConfig", "encoder"): EncoderConfig,
    ("ModelConfig", "gcn"): GcnConfig,
    ("ExperimentConfig", "model"): ModelConfig,
    ("ExperimentConfig", "train"): TrainConfig,
    ("ExperimentConfig", "train_contextual"): TrainConfig,
    ("ExperimentConfig", "grid"): GridSpec,
}
