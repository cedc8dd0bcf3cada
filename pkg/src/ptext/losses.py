"""Classification losses on match scores and the full prompt-tuning objective.

Every loss returns its value together with the gradient with respect to the
score matrix it consumed. ``total_loss`` chains those gradients through the
scoring functions and the frozen encoder down to both prompt matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .encoder import EncoderWeights, PromptBank, backprop_class_features, class_features
from .errors import DegenerateLabels, InvalidLabel, ShapeMismatch, ValidationError
from .scoring import TAU_S, aggregate_fine_backward, coarse_scores, word_scores, aggregate_fine

TAU = 0.01
MARGIN = 1.0


@dataclass
class LossValue:
    value: float
    grad_scores: np.ndarray


@dataclass
class PromptLoss:
    """Objective value split by grain, with gradients for both prompt matrices."""

    value: float
    coarse: LossValue
    fine: LossValue | None
    grad_coarse: np.ndarray
    grad_fine: np.ndarray


def _check_shapes(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if scores.shape != labels.shape:
        raise ShapeMismatch(f"scores {scores.shape} vs labels {labels.shape}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise InvalidLabel("labels must be 0/1")
    return scores, labels


def _log_softmax(z: np.ndarray) -> np.ndarray:
    # log-sum-exp as log1p of the non-maximal terms: when one class dominates,
    # the loss is tiny and plain log(1 + tiny) would round it away
    top = z.argmax(axis=1)
    z = z - z[np.arange(z.shape[0]), top][:, None]
    e = np.exp(z)
    e[np.arange(z.shape[0]), top] = 0.0
    return z - np.log1p(e.sum(axis=1, keepdims=True))


def ce_loss(scores: np.ndarray, labels: np.ndarray, tau: float = TAU) -> LossValue:
    """Softmax cross-entropy on ``scores / tau``, summed over rows."""
    if tau <= 0:
        raise ValidationError("tau must be positive")
    scores, labels = _check_shapes(scores, labels)
    if not np.all(labels.sum(axis=1) == 1.0):
        raise InvalidLabel("cross-entropy needs exactly one positive per row")
    logp = _log_softmax(scores / tau)
    value = float(-(labels * logp).sum())
    grad = (np.exp(logp) - labels) / tau
    return LossValue(max(value, 0.0), grad)


def ranking_loss(scores: np.ndarray, labels: np.ndarray, margin: float = MARGIN) -> LossValue:
    """Pairwise hinge ``max(0, margin - q_pos + q_neg)`` over every positive/negative pair.

    At the kink (hinge argument exactly zero) the subgradient is taken as 0.
    """
    scores, labels = _check_shapes(scores, labels)
    pos_count = labels.sum(axis=1)
    if np.any(pos_count == 0) or np.any(pos_count == labels.shape[1]):
        raise DegenerateLabels("each row needs at least one positive and one negative class")
    pos = labels == 1.0
    # (M, C_i, C_j) margins for i positive, j negative
    hinge = margin - scores[:, :, None] + scores[:, None, :]
    mask = pos[:, :, None] & ~pos[:, None, :]
    active = mask & (hinge > 0.0)
    # correctly rounded sum, so the value does not depend on reduction order
    value = math.fsum(hinge[active].tolist())
    grad = active.sum(axis=1).astype(np.float64) - active.sum(axis=2).astype(np.float64)
    return LossValue(value, grad)


def score_loss(
    scores: np.ndarray, labels: np.ndarray, task_kind: str, tau: float = TAU, margin: float = MARGIN
) -> LossValue:
    if task_kind == "single_label":
        return ce_loss(scores, labels, tau)
    if task_kind == "multi_label":
        return ranking_loss(scores, labels, margin)
    raise ValidationError(f"unknown task kind {task_kind!r}")


def pt_audio_loss(
    audio_feats: np.ndarray,
    labels: np.ndarray,
    bank: PromptBank,
    encoder: EncoderWeights,
    tau: float = TAU,
) -> PromptLoss:
    """Cross-entropy of clip features against coarse prompt features.

    This is the audio-supervised baseline: only the coarse prompt receives a
    gradient, the fine gradient is all zeros.
    """
    feats = np.atleast_2d(np.asarray(audio_feats, dtype=np.float64))
    u, encs = class_features(encoder, bank, "coarse", want_grad=True)
    loss = ce_loss(coarse_scores(feats, u), labels, tau)
    grad_u = loss.grad_scores.T @ feats
    grad_v = backprop_class_features(encoder, encs, grad_u)
    return PromptLoss(loss.value, loss, None, grad_v, np.zeros_like(bank.fine))


def total_loss(
    sentence_feats: np.ndarray,
    word_feats: Sequence[np.ndarray],
    labels: np.ndarray,
    bank: PromptBank,
    encoder: EncoderWeights,
    tau: float = TAU,
    tau_s: float = TAU_S,
    task_kind: str = "single_label",
    margin: float = MARGIN,
) -> PromptLoss:
    """Coarse loss on sentence scores plus fine loss on aggregated word scores.

    ``sentence_feats`` is ``(M, d)``; ``word_feats[m]`` is ``(O_m, d)``. All
    caption features are treated as constants.
    """
    F = np.atleast_2d(np.asarray(sentence_feats, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if F.shape[0] == 0:
        raise ValidationError("empty batch")
    if len(word_feats) != F.shape[0]:
        raise ShapeMismatch("one word-feature matrix per caption is required")

    u, encs = class_features(encoder, bank, "coarse", want_grad=True)
    coarse = score_loss(coarse_scores(F, u), labels, task_kind, tau, margin)
    grad_coarse = backprop_class_features(encoder, encs, coarse.grad_scores.T @ F)

    u_f, encs_f = class_features(encoder, bank, "fine", want_grad=True)
    p_list = [word_scores(wf, u_f) for wf in word_feats]
    q_fine = np.vstack([aggregate_fine(p, tau_s) for p in p_list])
    fine = score_loss(q_fine, labels, task_kind, tau, margin)
    grad_u_f = np.zeros_like(u_f)
    for p, wf, g in zip(p_list, word_feats, fine.grad_scores):
        grad_u_f += aggregate_fine_backward(p, tau_s, g).T @ np.atleast_2d(wf)
    grad_fine = backprop_class_features(encoder, encs_f, grad_u_f)

    return PromptLoss(coarse.value + fine.value, coarse, fine, grad_coarse, grad_fine)
