"""Inference, metrics and evaluation harnesses.

Held-out captions stand in for audio: their sentence features play the role
of clip-level features and their word features the role of frame-level
features. Precomputed features can be supplied instead through
:class:`FeatureFile`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np

from .corpus import LabeledCorpus, tokenize
from .encoder import EncoderWeights, PromptBank, class_features, encode_caption
from .errors import (
    ClassWithoutPositives,
    DimensionMismatch,
    LengthMismatch,
    MissingFrameFeatures,
    MissingPlaceholder,
    ValidationError,
)
from .scoring import TAU_S, coarse_scores, ensemble, fine_scores

Mode = Literal["coarse", "fine", "ensemble", "zero_shot"]
Metric = Literal["accuracy", "mAP"]

PLACEHOLDER = "[CLASS]"
ZERO_SHOT_TEMPLATE = "this is a sound of [CLASS]"


@dataclass
class EvalResult:
    metric: Metric
    value: float
    per_class: list[float]
    M: int

    def to_dict(self) -> dict[str, Any]:
        per_class = [None if np.isnan(v) else float(v) for v in self.per_class]
        return {"metric": self.metric, "value": float(self.value), "per_class": per_class, "M": self.M}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass
class FeatureFile:
    """Precomputed clip features, optional frame features, and labels."""

    clips: np.ndarray
    frames: list[np.ndarray] | None
    labels: list[tuple[int, ...]]

    def __len__(self) -> int:
        return self.clips.shape[0]

    def label_matrix(self, num_classes: int) -> np.ndarray:
        Z = np.zeros((len(self.labels), num_classes))
        for m, idx in enumerate(self.labels):
            if any(not 0 <= i < num_classes for i in idx):
                raise ValidationError(f"label index out of range in record {m}")
            Z[m, list(idx)] = 1.0
        return Z

    @staticmethod
    def _unit(rows: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(rows, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise ValidationError("zero feature vector")
        return rows / norms

    @classmethod
    def from_jsonl(cls, text: str, dim: int | None = None) -> "FeatureFile":
        clips, frames, labels = [], [], []
        have_frames = None
        for n, line in enumerate(ln for ln in text.splitlines() if ln.strip()):
            rec = json.loads(line)
            clip = np.asarray(rec["clip"], dtype=np.float64)
            if dim is not None and clip.shape != (dim,):
                raise DimensionMismatch(f"record {n}: clip has shape {clip.shape}, expected ({dim},)")
            clips.append(clip)
            has = "frames" in rec and rec["frames"] is not None
            if have_frames is None:
                have_frames = has
            elif have_frames != has:
                raise ValidationError("either every record or no record must carry frames")
            if has:
                fr = np.atleast_2d(np.asarray(rec["frames"], dtype=np.float64))
                if fr.shape[1] != clip.shape[0]:
                    raise DimensionMismatch(f"record {n}: frame dim {fr.shape[1]} != clip dim")
                frames.append(cls._unit(fr))
            labels.append(tuple(int(i) for i in rec["labels"]))
        if not clips:
            raise ValidationError("feature file is empty")
        return cls(cls._unit(np.vstack(clips)), frames if have_frames else None, labels)

    @classmethod
    def load(cls, path: str | Path, dim: int | None = None) -> "FeatureFile":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"), dim)

    def to_jsonl(self) -> str:
        lines = []
        for m in range(len(self)):
            rec: dict[str, Any] = {"clip": self.clips[m].tolist()}
            if self.frames is not None:
                rec["frames"] = self.frames[m].tolist()
            rec["labels"] = list(self.labels[m])
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"


def zero_shot_scores(encoder: EncoderWeights, template: str, class_names: Sequence[str]) -> np.ndarray:
    """Hand-written prompt features ``w_c`` (no learnable tokens), shape ``(C, d)``."""
    if PLACEHOLDER not in template:
        raise MissingPlaceholder(f"template {template!r} lacks {PLACEHOLDER}")
    return np.vstack(
        [
            encode_caption(encoder, tokenize(template.replace(PLACEHOLDER, name), encoder.bucket_count)).sentence_feat
            for name in class_names
        ]
    )


def predict_single_label(scores: np.ndarray) -> int:
    """Index of the highest score; the lowest index wins ties."""
    row = np.asarray(scores, dtype=np.float64)
    if row.size < 1:
        raise ValidationError("empty score row")
    return int(np.argmax(row))


def accuracy(predictions: Sequence[int], labels: Sequence[int], num_classes: int | None = None) -> EvalResult:
    """Fraction of correct predictions, with per-class recall (NaN for absent classes)."""
    pred = np.asarray(predictions, dtype=np.int64)
    true = np.asarray(labels, dtype=np.int64)
    if pred.shape != true.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {true.size} labels")
    if pred.size == 0:
        raise ValidationError("no samples to score")
    C = num_classes if num_classes is not None else int(max(pred.max(), true.max())) + 1
    per_class = []
    for c in range(C):
        mask = true == c
        per_class.append(float((pred[mask] == c).mean()) if mask.any() else float("nan"))
    return EvalResult("accuracy", float((pred == true).mean()), per_class, int(pred.size))


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """Mean of precision@k over the ranks k of the positives.

    Samples are ranked by descending score; equal scores keep sample order.
    """
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    hits = np.asarray(positives, dtype=bool)[order]
    if not hits.any():
        raise ClassWithoutPositives("no positive sample")
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, ranks.size + 1) / ranks))


def mean_average_precision(scores: np.ndarray, labels: np.ndarray) -> EvalResult:
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels))
    if scores.shape != labels.shape:
        raise LengthMismatch(f"scores {scores.shape} vs labels {labels.shape}")
    per_class = []
    for c in range(scores.shape[1]):
        if not labels[:, c].any():
            raise ClassWithoutPositives(f"class {c} has no positive sample")
        per_class.append(average_precision(scores[:, c], labels[:, c] == 1))
    return EvalResult("mAP", float(np.mean(per_class)), per_class, int(scores.shape[0]))


def _metric(scores: np.ndarray, labels: np.ndarray, task_kind: str) -> EvalResult:
    if task_kind == "single_label":
        preds = [predict_single_label(row) for row in scores]
        return accuracy(preds, labels.argmax(axis=1).tolist(), labels.shape[1])
    if task_kind == "multi_label":
        return mean_average_precision(scores, labels)
    raise ValidationError(f"unknown task kind {task_kind!r}")


def score_eval_set(
    bank: PromptBank | None,
    encoder: EncoderWeights,
    eval_set: LabeledCorpus | FeatureFile,
    mode: Mode,
    tau_s: float = TAU_S,
    template: str = ZERO_SHOT_TEMPLATE,
    class_names: Sequence[str] | None = None,
) -> np.ndarray:
    """``(M, C)`` scores for one evaluation mode."""
    if isinstance(eval_set, LabeledCorpus):
        encs = [encode_caption(encoder, tokenize(c.text, encoder.bucket_count)) for c in eval_set.captions]
        clips = np.vstack([e.sentence_feat for e in encs])
        frames: list[np.ndarray] | None = [e.word_feats for e in encs]
    else:
        clips, frames = eval_set.clips, eval_set.frames
    if clips.shape[1] != encoder.dim:
        raise DimensionMismatch(f"features have dim {clips.shape[1]}, encoder has {encoder.dim}")

    if mode == "zero_shot":
        names = class_names if class_names is not None else (bank.class_names if bank else eval_set.class_names)
        return coarse_scores(clips, zero_shot_scores(encoder, template, names))
    if bank is None:
        raise ValidationError(f"mode {mode!r} needs a prompt bank")
    if mode in ("fine", "ensemble") and frames is None:
        raise MissingFrameFeatures(f"mode {mode!r} needs frame-level features")
    if mode in ("coarse", "ensemble"):
        u, _ = class_features(encoder, bank, "coarse")
        coarse = coarse_scores(clips, u)
        if mode == "coarse":
            return coarse
    if mode in ("fine", "ensemble"):
        u_f, _ = class_features(encoder, bank, "fine")
        fine = fine_scores(frames, u_f, tau_s)
        if mode == "fine":
            return fine
        return ensemble(coarse, fine)
    raise ValidationError(f"unknown mode {mode!r}")


def _labels_of(eval_set: LabeledCorpus | FeatureFile, num_classes: int) -> np.ndarray:
    if isinstance(eval_set, LabeledCorpus):
        return eval_set.label_matrix()
    return eval_set.label_matrix(num_classes)


def evaluate(
    bank: PromptBank | None,
    encoder: EncoderWeights,
    eval_set: LabeledCorpus | FeatureFile,
    task_kind: str = "single_label",
    mode: Mode = "ensemble",
    tau_s: float = TAU_S,
    template: str = ZERO_SHOT_TEMPLATE,
) -> EvalResult:
    """Score ``eval_set`` in the requested mode and reduce to accuracy or mAP."""
    if isinstance(eval_set, LabeledCorpus) and bank is not None and tuple(eval_set.class_names) != bank.class_names:
        raise ValidationError("eval set classes differ from bank classes; use transfer_eval")
    names = bank.class_names if bank is not None else getattr(eval_set, "class_names", None)
    if names is None:
        raise ValidationError("class names are unknown: pass a bank or a labeled corpus")
    scores = score_eval_set(bank, encoder, eval_set, mode, tau_s, template, names)
    return _metric(scores, _labels_of(eval_set, len(names)), task_kind)


def transfer_eval(
    bank: PromptBank,
    encoder: EncoderWeights,
    target: LabeledCorpus,
    task_kind: str | None = None,
    mode: Mode = "ensemble",
    tau_s: float = TAU_S,
) -> EvalResult:
    """Apply source-learned prompt rows to the target's class names, no training."""
    target_bank = bank.with_classes(target.class_names, encoder.bucket_count)
    return evaluate(target_bank, encoder, target, task_kind or target.task_kind, mode, tau_s)


def subset_accuracy(result_scores: np.ndarray, labels: np.ndarray, classes: Sequence[int]) -> float:
    """Accuracy restricted to samples whose true class is in ``classes``."""
    true = np.asarray(labels).argmax(axis=1)
    mask = np.isin(true, list(classes))
    if not mask.any():
        raise ValidationError("no sample belongs to the requested classes")
    pred = np.asarray(result_scores).argmax(axis=1)
    return float((pred[mask] == true[mask]).mean())


@dataclass
class SweepRow:
    n_prompt: int
    result: EvalResult
    final_loss: float

    def to_dict(self) -> dict[str, Any]:
        return {"n_prompt": self.n_prompt, "final_loss": self.final_loss, **self.result.to_dict()}


def prompt_length_sweep(
    cfg,
    corpus: LabeledCorpus,
    lengths: Sequence[int],
    eval_set: LabeledCorpus | FeatureFile | None = None,
    mode: Mode = "ensemble",
    encoder: EncoderWeights | None = None,
) -> list[SweepRow]:
    """Train one bank per prompt length with an otherwise identical config."""
    from .trainer import train

    if any(n < 1 for n in lengths):
        raise ValidationError("prompt lengths must be >= 1")
    encoder = encoder or cfg.encoder()
    eval_set = eval_set if eval_set is not None else corpus
    rows = []
    for n in lengths:
        report = train(cfg.replace(n_prompt=int(n)), corpus, encoder)
        res = evaluate(report.bank, encoder, eval_set, cfg.task_kind, mode, cfg.tau_s)
        final = report.history[-1].total if report.history else float("nan")
        rows.append(SweepRow(int(n), res, final))
    return rows
