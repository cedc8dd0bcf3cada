"""Deterministic toy caption task used by the demo, the tests and the CLI.

Every caption names its class, adds one more keyword from that class's pool
and pads with filler words shared by all classes. A few distractor lines
(no class, or two classes) are mixed in so the collection pipeline has
something to reject.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CLASS_POOLS: dict[str, list[str]] = {
    "dog": ["bark", "puppy", "growl", "howl"],
    "rain": ["drizzle", "downpour", "raindrops", "shower"],
    "siren": ["ambulance", "alarm", "wail", "police"],
    "bird": ["chirp", "tweet", "sparrow", "birdsong"],
    "engine": ["motor", "idle", "revving", "car"],
}

FILLERS = [
    "a", "the", "loud", "soft", "in", "distance", "near", "street", "while",
    "people", "talk", "wind", "blows", "outside", "and", "is", "heard",
]

DISTRACTORS = [
    "people talk quietly in a hall",
    "wind blows through the trees",
    "a dog and a bird near the street",
    "rain falls while a siren is heard",
    "footsteps on a wooden floor",
]


def make_captions(
    classes: list[str] | None = None,
    per_class: int = 30,
    fillers: int = 4,
    seed: int = 0,
    distractors: bool = True,
) -> list[str]:
    """Raw caption lines, interleaved across classes in a seeded order."""
    classes = list(classes or CLASS_POOLS)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x70E]))
    lines = []
    for c in classes:
        pool = CLASS_POOLS[c]
        for _ in range(per_class):
            words = [str(w) for w in rng.choice(FILLERS, fillers)] + [c, str(rng.choice(pool))]
            rng.shuffle(words)
            lines.append(" ".join(words))
    order = rng.permutation(len(lines))
    lines = [lines[i] for i in order]
    if distractors:
        step = max(1, len(lines) // len(DISTRACTORS))
        for k, d in enumerate(DISTRACTORS):
            lines.insert(min(len(lines), k * (step + 1)), d)
    return lines


def synonyms(classes: list[str] | None = None) -> dict[str, list[str]]:
    return {c: list(CLASS_POOLS[c]) for c in (classes or CLASS_POOLS)}


def write_task(directory: str | Path, **kwargs) -> tuple[Path, Path]:
    """Write ``raw.txt`` and ``synonyms.json`` for the toy task."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = directory / "raw.txt"
    syn = directory / "synonyms.json"
    raw.write_text("\n".join(make_captions(kwargs.get("classes"), **{k: v for k, v in kwargs.items() if k != "classes"})) + "\n", encoding="utf-8")
    syn.write_text(json.dumps(synonyms(kwargs.get("classes")), indent=2) + "\n", encoding="utf-8")
    return raw, syn
