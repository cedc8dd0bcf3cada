"""Match scores between caption (or audio) features and class prompt features."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import DimensionMismatch, ValidationError, ZeroVector

ScoreGrain = Literal["coarse", "fine", "ensemble"]

TAU_S = 0.10


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _as_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def coarse_scores(caption_feat: np.ndarray, class_feats: np.ndarray) -> np.ndarray:
    """Cosine of unit caption feature(s) against C unit class features.

    A single ``(d,)`` feature gives a ``(C,)`` row; an ``(M, d)`` batch gives
    ``(M, C)``.
    """
    f = np.asarray(caption_feat, dtype=np.float64)
    u = _as_matrix(class_feats)
    if f.shape[-1] != u.shape[1]:
        raise DimensionMismatch(f"feature dim {f.shape[-1]} vs class dim {u.shape[1]}")
    return f @ u.T


def word_scores(word_feats: np.ndarray, fine_class_feats: np.ndarray) -> np.ndarray:
    """``(O, C)`` cosines between each word feature and each fine class feature."""
    wf = _as_matrix(word_feats)
    u = _as_matrix(fine_class_feats)
    if wf.shape[0] < 1 or u.shape[0] < 1:
        raise ValidationError("need at least one word and one class")
    if wf.shape[1] != u.shape[1]:
        raise DimensionMismatch(f"word dim {wf.shape[1]} vs class dim {u.shape[1]}")
    return wf @ u.T


def word_weights(p: np.ndarray, tau_s: float = TAU_S) -> np.ndarray:
    """Per-class softmax over words of ``p / tau_s`` (columns sum to one)."""
    if tau_s <= 0:
        raise ValidationError("tau_s must be positive")
    z = np.asarray(p, dtype=np.float64) / tau_s
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def aggregate_fine(p: np.ndarray, tau_s: float = TAU_S) -> np.ndarray:
    """Softmax-weighted sum over words of each class column of ``p``.

    ``p`` is ``(O, C)``; a 1-D input is read as a single column of O word
    scores and gives a scalar.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        return float(aggregate_fine(p[:, None], tau_s)[0])
    return (word_weights(p, tau_s) * p).sum(axis=0)


def aggregate_fine_backward(p: np.ndarray, tau_s: float, grad_out: np.ndarray) -> np.ndarray:
    """Pull ``dL/dq'`` (per class) back to ``dL/dp`` (per word and class).

    With weights ``a_o`` and output ``q``, ``dq/dp_o = a_o * (1 + (p_o - q) / tau_s)``.
    """
    a = word_weights(p, tau_s)
    q = (a * p).sum(axis=0)
    return a * (1.0 + (p - q) / tau_s) * np.asarray(grad_out)[None, :]


def fine_scores(word_feat_list: Sequence[np.ndarray], fine_class_feats: np.ndarray, tau_s: float = TAU_S) -> np.ndarray:
    """``(M, C)`` aggregated fine scores for a batch of captions."""
    return np.vstack([aggregate_fine(word_scores(wf, fine_class_feats), tau_s) for wf in word_feat_list])


def ensemble(coarse: np.ndarray, fine: np.ndarray) -> np.ndarray:
    coarse = np.asarray(coarse, dtype=np.float64)
    fine = np.asarray(fine, dtype=np.float64)
    if coarse.shape != fine.shape:
        raise DimensionMismatch(f"shapes {coarse.shape} and {fine.shape} differ")
    return coarse + fine


@dataclass
class ScoreMatrix:
    values: np.ndarray
    grain: ScoreGrain
    class_names: tuple[str, ...] = ()

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = self.class_names or tuple(f"class_{c}" for c in range(self.values.shape[1]))
        writer.writerow(names)
        for row in np.atleast_2d(self.values):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grain: ScoreGrain) -> "ScoreMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValidationError("empty score CSV")
        header, body = rows[0], rows[1:]
        values = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(header))
        return cls(values, grain, tuple(header))
