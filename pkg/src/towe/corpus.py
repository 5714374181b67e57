"""Datasets for target-oriented opinion word extraction.

One ``Instance`` per (sentence, target) pair. Gold opinions are stored as BIO
labels; spans are half-open ``(start, end)`` token intervals throughout.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

ROOT = -1
LABELS = ("O", "B", "I")

Span = tuple[int, int]


class CorpusError(ValueError):
    """Base class for dataset problems."""


class FormatError(CorpusError):
    pass


class AnnotationError(CorpusError):
    pass


class JoinError(CorpusError):
    pass


class ParseError(CorpusError):
    pass


class PreconditionError(CorpusError):
    pass


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    pos_tag: str | None = None
    head: int | None = None


@dataclass(frozen=True)
class Instance:
    tokens: tuple[Token, ...]
    target_span: Span
    gold_labels: tuple[str, ...]
    split_id: str = ""
    sentence_id: str = ""

    def __post_init__(self):
        n = len(self.tokens)
        start, end = self.target_span
        if not 0 <= start < end <= n:
            raise AnnotationError(f"target span {self.target_span} outside sentence of length {n}")
        if len(self.gold_labels) != n:
            raise AnnotationError(f"{len(self.gold_labels)} labels for {n} tokens")
        check_bio(self.gold_labels)
        for i in range(start, end):
            if self.gold_labels[i] != "O":
                raise AnnotationError(f"target token {i} carries opinion label {self.gold_labels[i]}")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def pos_tags(self) -> list[str | None]:
        return [t.pos_tag for t in self.tokens]

    @property
    def heads(self) -> list[int | None]:
        return [t.head for t in self.tokens]

    @property
    def has_parse(self) -> bool:
        return all(t.head is not None and t.pos_tag is not None for t in self.tokens)

    @property
    def opinion_spans(self) -> set[Span]:
        return bio_decode(self.gold_labels)


@dataclass
class DatasetSplit:
    name: str
    instances: list[Instance] = field(default_factory=list)

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def validate(self):
        if not self.instances:
            raise CorpusError(f"split {self.name!r} is empty")
        return self


@dataclass(frozen=True)
class CorpusStats:
    num_sentences: int
    avg_sentence_length: float
    num_aspect_terms: int
    num_opinion_terms: int
    avg_dependency_distance: float
    avg_sequential_distance: float
    # raw sums, kept so that stats of several splits can be merged exactly
    num_pairs: int = 0
    total_length: int = 0

    def as_row(self) -> dict:
        return {
            "#Sent": self.num_sentences,
            "#ASL": round(self.avg_sentence_length, 2),
            "#AT": self.num_aspect_terms,
            "#OT": self.num_opinion_terms,
            "#D.Dist": round(self.avg_dependency_distance, 2),
            "#S.Dist": round(self.avg_sequential_distance, 2),
        }


# ---------------------------------------------------------------- BIO

def check_bio(labels: Sequence[str]):
    prev = "O"
    for i, lab in enumerate(labels):
        if lab not in LABELS:
            raise AnnotationError(f"unknown label {lab!r} at token {i}")
        if lab == "I" and prev == "O":
            raise AnnotationError(f"I label at token {i} does not continue a span")
        prev = lab


def bio_decode(labels: Sequence[str]) -> set[Span]:
    """Maximal B I* spans. A dangling I opens a new span instead of being dropped."""
    spans = set()
    start = None
    for i, lab in enumerate(labels):
        if lab == "B" or (lab == "I" and start is None):
            if start is not None:
                spans.add((start, i))
            start = i
        elif lab == "O" and start is not None:
            spans.add((start, i))
            start = None
    if start is not None:
        spans.add((start, len(labels)))
    return spans


def bio_encode(spans: Iterable[Span], n: int) -> list[str]:
    labels = ["O"] * n
    for start, end in sorted(spans):
        if not 0 <= start < end <= n:
            raise AnnotationError(f"span {(start, end)} outside sentence of length {n}")
        if any(lab != "O" for lab in labels[start:end]):
            raise AnnotationError(f"span {(start, end)} overlaps another span")
        labels[start] = "B"
        for i in range(start + 1, end):
            labels[i] = "I"
    return labels


# ---------------------------------------------------------------- importers

def _split_tagged(line: str, what: str) -> tuple[list[str], list[str]]:
    words, tags = [], []
    for i, piece in enumerate(line.split()):
        word, sep, tag = piece.rpartition("\\")
        if not sep or tag not in LABELS:
            raise FormatError(f"{what} token {i} ({piece!r}) lacks a \\B, \\I or \\O suffix")
        words.append(word)
        tags.append(tag)
    return words, tags


def import_inline_annotated(sentence_line: str, target_line: str, opinion_line: str,
                            split_id: str = "", sentence_id: str = "") -> Instance:
    """Build an Instance from the distributed three-field format.

    ``target_line`` and ``opinion_line`` tag every token with a ``\\B``,
    ``\\I`` or ``\\O`` suffix; the target tags must mark exactly one
    contiguous span.
    """
    words = sentence_line.split()
    t_words, t_tags = _split_tagged(target_line, "target line")
    o_words, o_tags = _split_tagged(opinion_line, "opinion line")
    if len(t_words) != len(words):
        raise FormatError(f"target line has {len(t_words)} tokens, sentence has {len(words)}: {target_line!r}")
    if len(o_words) != len(words):
        raise FormatError(f"opinion line has {len(o_words)} tokens, sentence has {len(words)}: {opinion_line!r}")

    marked = [i for i, t in enumerate(t_tags) if t != "O"]
    if not marked:
        raise AnnotationError("target line marks no target")
    start, end = marked[0], marked[-1] + 1
    if len(marked) != end - start:
        raise AnnotationError(f"target tokens {marked} are not contiguous")
    if any(t == "B" for t in t_tags[start + 1:end]):
        raise AnnotationError(f"target line marks more than one span starting at {start}")

    check_bio(o_tags)
    tokens = tuple(Token(i, w) for i, w in enumerate(words))
    return Instance(tokens, (start, end), tuple(o_tags), split_id=split_id, sentence_id=sentence_id)


def read_inline_file(path, name: str | None = None) -> DatasetSplit:
    """Read a raw annotated file.

    Two layouts are accepted: tab-separated ``id, sentence, target tags,
    opinion tags`` rows (an optional header starting with ``s_id`` is
    skipped), or blocks of three lines (sentence, target tags, opinion tags)
    separated by optional blank lines.
    """
    path = Path(path)
    name = name or path.stem
    lines = path.read_text(encoding="utf-8").splitlines()
    split = DatasetSplit(name)

    def wrap(lineno, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except CorpusError as e:
            raise type(e)(f"{path}:{lineno}: {e}") from None

    if any("\t" in line for line in lines):
        sent_ids: dict[str, str] = {}
        for lineno, line in enumerate(lines, 1):
            if not line.strip() or line.startswith("s_id"):
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(cols)}")
            sid, sentence, target, opinion = cols
            sent_ids.setdefault(sentence, sid)
            split.instances.append(wrap(lineno, import_inline_annotated, sentence, target, opinion,
                                        split_id=name, sentence_id=sent_ids[sentence]))
    else:
        content = [(i, line) for i, line in enumerate(lines, 1) if line.strip()]
        if len(content) % 3:
            raise FormatError(f"{path}: {len(content)} non-blank lines is not a multiple of 3")
        sent_ids = {}
        for k in range(0, len(content), 3):
            (lineno, sentence), (_, target), (_, opinion) = content[k:k + 3]
            sid = sent_ids.setdefault(sentence, f"{name}-{len(sent_ids)}")
            split.instances.append(wrap(lineno, import_inline_annotated, sentence, target, opinion,
                                        split_id=name, sentence_id=sid))
    return split


# ---------------------------------------------------------------- parses

@dataclass(frozen=True)
class ParseRecord:
    pos_tags: tuple[str, ...]
    heads: tuple[int, ...]
    tokens: tuple[str, ...] | None = None


def check_tree(heads: Sequence[int]):
    n = len(heads)
    roots = [i for i, h in enumerate(heads) if h == ROOT]
    if len(roots) != 1:
        raise ParseError(f"expected exactly one root, found {len(roots)}")
    for i, h in enumerate(heads):
        if h != ROOT and not 0 <= h < n:
            raise ParseError(f"head {h} of token {i} out of range")
        if h == i:
            raise ParseError(f"token {i} is its own head")
    # every token must reach the root without revisiting a node
    state = [0] * n  # 0 unknown, 1 on current path, 2 reaches root
    for i in range(n):
        path = []
        j = i
        while j != ROOT and state[j] == 0:
            state[j] = 1
            path.append(j)
            j = heads[j]
        if j != ROOT and state[j] == 1:
            raise ParseError(f"cycle through token {j}")
        for p in path:
            state[p] = 2


def distinct_sentences(split: DatasetSplit) -> dict[str, list[int]]:
    """Sentence key -> indices of its instances, in order of first appearance."""
    groups: dict[str, list[int]] = {}
    for k, inst in enumerate(split.instances):
        groups.setdefault(sentence_key(inst), []).append(k)
    return groups


def sentence_key(inst: Instance) -> str:
    return inst.sentence_id or " ".join(inst.words)


def join_parses(split: DatasetSplit, parse_records: Sequence[ParseRecord] | Mapping[str, ParseRecord]) -> DatasetSplit:
    """Attach POS tags and dependency heads.

    ``parse_records`` is either a mapping from sentence id to record, or a
    sequence with one record per distinct sentence in order of first
    appearance.
    """
    groups = distinct_sentences(split)
    if isinstance(parse_records, Mapping):
        lookup = parse_records
    else:
        if len(parse_records) != len(groups):
            raise JoinError(f"{len(parse_records)} parse records for {len(groups)} sentences in {split.name}")
        lookup = dict(zip(groups, parse_records))

    joined = list(split.instances)
    for key, members in groups.items():
        if key not in lookup:
            raise JoinError(f"no parse record for sentence {key!r}")
        rec = lookup[key]
        first = split.instances[members[0]]
        n = len(first)
        if len(rec.pos_tags) != n or len(rec.heads) != n:
            raise JoinError(f"sentence {key!r}: parse has {len(rec.heads)} tokens, instance has {n}")
        if rec.tokens is not None and list(rec.tokens) != first.words:
            raise JoinError(f"sentence {key!r}: parse tokens differ from instance tokens")
        try:
            check_tree(rec.heads)
        except ParseError as e:
            raise ParseError(f"sentence {key!r}: {e}") from None
        for k in members:
            inst = split.instances[k]
            tokens = tuple(replace(t, pos_tag=rec.pos_tags[i], head=rec.heads[i]) for i, t in enumerate(inst.tokens))
            joined[k] = replace(inst, tokens=tokens)
    return DatasetSplit(split.name, joined)


def read_parse_file(path) -> list[ParseRecord]:
    """CoNLL-U / CoNLL-X (1-based heads, 0 = root) or JSON lines with
    ``pos_tags`` and ``heads`` (0-based, -1 = root)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".jsonl", ".json"):
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(ParseRecord(tuple(obj["pos_tags"]), tuple(int(h) for h in obj["heads"]),
                                           tuple(obj["tokens"]) if "tokens" in obj else None))
            except (KeyError, ValueError) as e:
                raise FormatError(f"{path}:{lineno}: bad parse record ({e})") from None
        return records

    records, rows = [], []

    def flush():
        if rows:
            records.append(ParseRecord(tuple(r[1] for r in rows), tuple(r[2] for r in rows),
                                       tuple(r[0] for r in rows)))
            rows.clear()

    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if "-" in cols[0] or "." in cols[0]:
            continue  # multiword / empty nodes
        if len(cols) < 7:
            raise FormatError(f"{path}:{lineno}: expected at least 7 tab-separated columns")
        tag = cols[4] if cols[4] != "_" else cols[3]
        rows.append((cols[1], tag, int(cols[6]) - 1))
    flush()
    return records


# ---------------------------------------------------------------- canonical file

def instance_to_record(inst: Instance) -> dict:
    rec = {
        "tokens": inst.words,
        "pos_tags": inst.pos_tags,
        "heads": inst.heads,
        "target_span": list(inst.target_span),
        "labels": list(inst.gold_labels),
    }
    if inst.sentence_id:
        rec["sentence_id"] = inst.sentence_id
    return rec


def record_to_instance(rec: dict, split_id: str = "") -> Instance:
    words = rec["tokens"]
    n = len(words)
    pos = rec.get("pos_tags") or [None] * n
    heads = rec.get("heads") or [None] * n
    if len(pos) != n or len(heads) != n or len(rec["labels"]) != n:
        raise FormatError("field lengths differ from token count")
    tokens = tuple(Token(i, w, pos[i], heads[i]) for i, w in enumerate(words))
    return Instance(tokens, tuple(rec["target_span"]), tuple(rec["labels"]),
                    split_id=split_id, sentence_id=rec.get("sentence_id", ""))


def save_split(split: DatasetSplit, path):
    with open(path, "w", encoding="utf-8") as f:
        for inst in split.instances:
            f.write(json.dumps(instance_to_record(inst), ensure_ascii=False) + "\n")


def load_split(path, name: str | None = None) -> DatasetSplit:
    path = Path(path)
    name = name or path.stem
    split = DatasetSplit(name)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                split.instances.append(record_to_instance(json.loads(line), split_id=name))
            except (CorpusError, KeyError, ValueError, TypeError) as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    return split


# ---------------------------------------------------------------- statistics

def span_head(span: Span, heads: Sequence[int]) -> int:
    """Token in ``span`` whose head lies outside it; the first token if none does."""
    start, end = span
    for i in range(start, end):
        if not start <= heads[i] < end:
            return i
    return start


def tree_distances(heads: Sequence[int], source: int) -> list[float]:
    n = len(heads)
    adj = [[] for _ in range(n)]
    for i, h in enumerate(heads):
        if h != ROOT:
            adj[i].append(h)
            adj[h].append(i)
    dist = [math.inf] * n
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] == math.inf:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def sequential_distance(target: Span, opinion: Span) -> int:
    if opinion[0] >= target[1]:
        return opinion[0] - (target[1] - 1)
    if target[0] >= opinion[1]:
        return target[0] - (opinion[1] - 1)
    return 0


def dependency_distance(target: Span, opinion: Span, heads: Sequence[int]) -> float:
    return tree_distances(heads, span_head(target, heads))[span_head(opinion, heads)]


def compute_statistics(split: DatasetSplit) -> CorpusStats:
    n_pairs = 0
    d_sum = 0.0
    s_sum = 0.0
    n_opinions = 0
    for inst in split.instances:
        if not inst.has_parse:
            raise PreconditionError(f"instance of sentence {sentence_key(inst)!r} has no parse")
        for op in inst.opinion_spans:
            n_opinions += 1
            n_pairs += 1
            s_sum += sequential_distance(inst.target_span, op)
            d_sum += dependency_distance(inst.target_span, op, inst.heads)
    groups = distinct_sentences(split)
    total_length = sum(len(split.instances[m[0]]) for m in groups.values())
    return CorpusStats(
        num_sentences=len(groups),
        avg_sentence_length=total_length / len(groups) if groups else 0.0,
        num_aspect_terms=len(split.instances),
        num_opinion_terms=n_opinions,
        avg_dependency_distance=d_sum / n_pairs if n_pairs else 0.0,
        avg_sequential_distance=s_sum / n_pairs if n_pairs else 0.0,
        num_pairs=n_pairs,
        total_length=total_length,
    )
