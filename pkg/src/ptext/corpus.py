"""Caption tokenization and the caption collection pipeline.

Captions are gathered per class by whole-word synonym matching, cleaned of
cross-class hits for single-label tasks, balanced to ``L`` captions per class
and topped up with templated captions when too few were found.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from .errors import (
    ClassTooSmall,
    DuplicateClass,
    EmptyDict,
    EmptyText,
    NoCaptionsForClass,
    ValidationError,
)

BUCKET_COUNT = 4096

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

TEMPLATES = (
    "[CLASS] sound in the background",
    "the sound of [CLASS]",
    "a recording of [CLASS]",
    "[CLASS] can be heard",
    "someone hears [CLASS] nearby",
    "a clip containing [CLASS]",
    "[CLASS] noise in a quiet room",
    "loud [CLASS] sound",
)

TaskKind = Literal["single_label", "multi_label"]
Source = Literal["collected", "template"]

_NON_WORD = re.compile(r"[^\w\s]|_")


def normalize_words(text: str) -> list[str]:
    """Lowercase, turn punctuation into whitespace and split."""
    return _NON_WORD.sub(" ", text.lower()).split()


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def token_id(word: str, bucket_count: int = BUCKET_COUNT) -> int:
    return fnv1a_64(word.encode("utf-8")) % bucket_count


@dataclass(frozen=True)
class TokenSeq:
    tokens: tuple[int, ...]
    surface: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(text: str, bucket_count: int = BUCKET_COUNT) -> TokenSeq:
    """Map text to hashed token ids.

    >>> tokenize("A dog barks.").surface
    ('a', 'dog', 'barks')
    """
    words = normalize_words(text)
    if not words:
        raise EmptyText(f"no words left after normalizing {text!r}")
    return TokenSeq(tuple(token_id(w, bucket_count) for w in words), tuple(words))


@dataclass(frozen=True)
class SynonymDict:
    """Ordered map of class name to its synonym phrases (as word tuples)."""

    class_names: tuple[str, ...]
    entries: Mapping[str, frozenset[tuple[str, ...]]]

    def phrases(self, class_name: str) -> frozenset[tuple[str, ...]]:
        return self.entries[class_name]


def _phrase(text: str) -> tuple[str, ...]:
    return tuple(normalize_words(text))


def build_synonym_dict(
    class_names: Sequence[str], synonyms: Mapping[str, Iterable[str]] | None = None
) -> SynonymDict:
    """Each class maps to its own normalized name plus any provided synonyms.

    Synonym keys are matched against class names after normalization.
    """
    if not class_names:
        raise EmptyDict("no class names given")
    synonyms = synonyms or {}
    by_norm = {}
    for key, values in synonyms.items():
        by_norm.setdefault(" ".join(_phrase(key)), []).extend(values)

    names: list[str] = []
    entries: dict[str, frozenset[tuple[str, ...]]] = {}
    for raw in class_names:
        name_words = _phrase(raw)
        if not name_words:
            raise NoCaptionsForClass(f"class name {raw!r} is empty after normalization")
        name = " ".join(name_words)
        if name in entries:
            raise DuplicateClass(f"class names collide after normalization: {name!r}")
        phrases = {name_words}
        for syn in by_norm.get(name, ()):
            words = _phrase(syn)
            if not words:
                raise ValidationError(f"synonym {syn!r} of {name!r} is empty after normalization")
            phrases.add(words)
        names.append(name)
        entries[name] = frozenset(phrases)
    return SynonymDict(tuple(names), entries)


def load_synonym_json(path: str | Path, class_names: Sequence[str] | None = None) -> SynonymDict:
    """Read ``{class_name: [synonym, ...]}``; key order defines class order."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValidationError("synonym file must hold a JSON object")
    return build_synonym_dict(list(class_names or raw.keys()), raw)


def contains_phrase(words: Sequence[str], phrase: Sequence[str]) -> bool:
    n = len(phrase)
    return any(tuple(words[i : i + n]) == tuple(phrase) for i in range(len(words) - n + 1))


def matched_classes(words: Sequence[str], syn: SynonymDict) -> list[int]:
    return [
        c
        for c, name in enumerate(syn.class_names)
        if any(contains_phrase(words, p) for p in syn.phrases(name))
    ]


@dataclass(frozen=True)
class LabeledCaption:
    text: str
    labels: tuple[int, ...]
    source: Source = "collected"

    def label_vector(self, num_classes: int) -> np.ndarray:
        z = np.zeros(num_classes)
        z[list(self.labels)] = 1.0
        return z


@dataclass
class LabeledCorpus:
    captions: list[LabeledCaption]
    class_names: tuple[str, ...]
    task_kind: TaskKind = "single_label"

    def __post_init__(self) -> None:
        self.class_names = tuple(self.class_names)
        C = len(self.class_names)
        for cap in self.captions:
            if not cap.labels or any(not 0 <= i < C for i in cap.labels):
                raise ValidationError(f"bad labels {cap.labels} for {cap.text!r}")
            if self.task_kind == "single_label" and len(cap.labels) != 1:
                raise ValidationError(f"single-label caption with labels {cap.labels}")

    def __len__(self) -> int:
        return len(self.captions)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def label_matrix(self) -> np.ndarray:
        Z = np.zeros((len(self.captions), self.num_classes))
        for m, cap in enumerate(self.captions):
            Z[m, list(cap.labels)] = 1.0
        return Z

    def class_counts(self) -> dict[str, dict[str, int]]:
        counts = {n: {"collected": 0, "template": 0} for n in self.class_names}
        for cap in self.captions:
            for i in cap.labels:
                counts[self.class_names[i]][cap.source] += 1
        return counts

    def to_jsonl(self) -> str:
        task = "single" if self.task_kind == "single_label" else "multi"
        lines = [json.dumps({"classes": list(self.class_names), "task": task}, ensure_ascii=False)]
        for cap in self.captions:
            rec = {"text": cap.text, "labels": list(cap.labels), "source": cap.source}
            lines.append(json.dumps(rec, ensure_ascii=False))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "LabeledCorpus":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValidationError("empty corpus file")
        try:
            header = json.loads(lines[0])
            classes = header["classes"]
            task = {"single": "single_label", "multi": "multi_label"}[header["task"]]
            caps = []
            for ln in lines[1:]:
                rec = json.loads(ln)
                source = rec.get("source", "collected")
                if source not in ("collected", "template"):
                    raise ValidationError(f"unknown caption source {source!r}")
                caps.append(LabeledCaption(rec["text"], tuple(int(i) for i in rec["labels"]), source))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"malformed corpus file: {exc}") from exc
        return cls(caps, tuple(classes), task)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LabeledCorpus":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def generate_template_captions(class_name: str, count: int) -> list[str]:
    """``count`` templated captions, cycling through :data:`TEMPLATES`."""
    if not class_name.strip():
        raise NoCaptionsForClass("cannot fill templates with an empty class name")
    if count < 0:
        raise ValidationError("count must be non-negative")
    return [TEMPLATES[i % len(TEMPLATES)].replace("[CLASS]", class_name) for i in range(count)]


def collect_captions(
    raw: Iterable[str],
    syn: SynonymDict,
    task_kind: TaskKind,
    captions_per_class: int,
) -> LabeledCorpus:
    """Build a balanced labeled corpus from raw caption lines.

    A caption is accepted while every class it matches still has room below
    ``captions_per_class``. In single-label mode captions that match two or
    more classes are dropped first. Collected captions keep input order and
    are followed by template top-ups in class order.
    """
    if not syn.class_names:
        raise EmptyDict("synonym dict has no classes")
    if captions_per_class < 1:
        raise ValidationError("captions_per_class must be >= 1")
    if task_kind not in ("single_label", "multi_label"):
        raise ValidationError(f"unknown task kind {task_kind!r}")

    L = captions_per_class
    counts = [0] * len(syn.class_names)
    captions: list[LabeledCaption] = []
    for line in raw:
        text = line.strip()
        words = normalize_words(text)
        if not words:
            continue
        hits = matched_classes(words, syn)
        if not hits:
            continue
        if task_kind == "single_label" and len(hits) > 1:
            continue
        if any(counts[c] >= L for c in hits):
            continue
        for c in hits:
            counts[c] += 1
        captions.append(LabeledCaption(text, tuple(hits), "collected"))

    for c, name in enumerate(syn.class_names):
        for text in generate_template_captions(name, L - counts[c]):
            captions.append(LabeledCaption(text, (c,), "template"))
    return LabeledCorpus(captions, syn.class_names, task_kind)


def split_corpus(
    corpus: LabeledCorpus, held_out_fraction: float, seed: int
) -> tuple[LabeledCorpus, LabeledCorpus]:
    """Stratified split; template captions always stay in the training part.

    Each caption is stratified by its lowest positive class. A class with
    ``n`` captions sends ``max(1, round(fraction * n))`` collected captions
    to the held-out part, keeping at least one caption for training.
    """
    if not 0.0 < held_out_fraction < 1.0:
        raise ValidationError("held_out_fraction must lie in (0, 1)")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x5B117]))
    groups: dict[int, list[int]] = {c: [] for c in range(corpus.num_classes)}
    for m, cap in enumerate(corpus.captions):
        groups[min(cap.labels)].append(m)

    held: set[int] = set()
    for c, members in groups.items():
        if len(members) < 2:
            raise ClassTooSmall(
                f"class {corpus.class_names[c]!r} has {len(members)} caption(s); need >= 2"
            )
        collected = [m for m in members if corpus.captions[m].source == "collected"]
        want = max(1, math.floor(held_out_fraction * len(members) + 0.5))
        want = min(want, len(members) - 1, len(collected))
        order = rng.permutation(len(collected))
        held.update(collected[i] for i in order[:want])

    train = [cap for m, cap in enumerate(corpus.captions) if m not in held]
    test = [cap for m, cap in enumerate(corpus.captions) if m in held]
    return (
        LabeledCorpus(train, corpus.class_names, corpus.task_kind),
        LabeledCorpus(test, corpus.class_names, corpus.task_kind),
    )
