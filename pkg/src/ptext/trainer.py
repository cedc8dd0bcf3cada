"""Prompt initialization, optimizers and the text-only training loop."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np

from .corpus import BUCKET_COUNT, LabeledCorpus, tokenize
from .encoder import DEFAULT_DIM, EncoderWeights, PromptBank, encode_caption, init_encoder
from .errors import ConfigError, NonFiniteLoss, ShapeMismatch, ValidationError
from .losses import MARGIN, TAU, total_loss
from .scoring import TAU_S

logger = logging.getLogger(__name__)

PROMPT_INIT_STD = 0.02
_GRAIN_TAG = {"coarse": 1, "fine": 2}
_SHUFFLE_TAG = 3


@dataclass(frozen=True)
class TrainConfig:
    n_prompt: int = 16
    dim: int = DEFAULT_DIM
    bucket_count: int = BUCKET_COUNT
    tau: float = TAU
    tau_s: float = TAU_S
    captions_per_class: int = 16
    lr: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    task_kind: Literal["single_label", "multi_label"] = "single_label"
    optimizer: Literal["adam", "sgd"] = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    margin: float = MARGIN

    def __post_init__(self) -> None:
        if self.n_prompt < 1:
            raise ConfigError("n_prompt must be >= 1")
        if self.tau <= 0 or self.tau_s <= 0:
            raise ConfigError("tau and tau_s must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1 or self.captions_per_class < 1:
            raise ConfigError("batch_size and captions_per_class must be >= 1")
        if self.task_kind not in ("single_label", "multi_label"):
            raise ConfigError(f"unknown task_kind {self.task_kind!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = dict(data)
        if values.get("task_kind") in ("single", "multi"):
            values["task_kind"] = values["task_kind"] + "_label"
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes: Any) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def encoder(self) -> EncoderWeights:
        return init_encoder(self.seed, self.dim, self.bucket_count)


def _prompt_matrix(seed: int, grain: str, n: int, dim: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=[seed, _GRAIN_TAG[grain]]))
    return rng.normal(0.0, PROMPT_INIT_STD, (n, dim))


def init_prompts(cfg: TrainConfig, class_names: Sequence[str]) -> PromptBank:
    """Fresh coarse and fine prompts, each drawn from its own seeded stream."""
    seqs = [tokenize(name, cfg.bucket_count) for name in class_names]
    return PromptBank(
        _prompt_matrix(cfg.seed, "coarse", cfg.n_prompt, cfg.dim),
        _prompt_matrix(cfg.seed, "fine", cfg.n_prompt, cfg.dim),
        tuple(class_names),
        tuple(seqs),
        cfg.seed,
    )


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params))


def adam_update(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    step: int = 1,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam step; returns new arrays, inputs are untouched."""
    if params.shape != grads.shape or state.m.shape != params.shape or state.v.shape != params.shape:
        raise ShapeMismatch("params, grads and moments must share one shape")
    if step < 1:
        raise ValidationError("step counts from 1")
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v)


def sgd_update(params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
    if params.shape != grads.shape:
        raise ShapeMismatch("params and grads must share one shape")
    return params - lr * grads


@dataclass
class EncodedCorpus:
    """Caption features computed once; the encoder is frozen so they never change."""

    sentence: np.ndarray
    words: list[np.ndarray]
    labels: np.ndarray

    @classmethod
    def build(cls, encoder: EncoderWeights, corpus: LabeledCorpus) -> "EncodedCorpus":
        encs = [encode_caption(encoder, tokenize(c.text, encoder.bucket_count)) for c in corpus.captions]
        sentence = np.vstack([e.sentence_feat for e in encs]) if encs else np.zeros((0, encoder.dim))
        return cls(sentence, [e.word_feats for e in encs], corpus.label_matrix())

    def __len__(self) -> int:
        return self.sentence.shape[0]


@dataclass
class EpochRecord:
    epoch: int
    total: float
    coarse: float
    fine: float


@dataclass
class TrainReport:
    history: list[EpochRecord]
    wall_time: float
    bank: PromptBank
    encoder_checksum: str
    steps: int = 0

    def to_dict(self, include_time: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "epochs": [dataclasses.asdict(r) for r in self.history],
            "steps": self.steps,
            "encoder_checksum": self.encoder_checksum,
            "bank_checksum": self.bank.checksum(),
        }
        if include_time:
            out["wall_time_s"] = self.wall_time
        return out


def _validate_labels(corpus: LabeledCorpus, task_kind: str) -> None:
    if len(corpus) == 0:
        raise ValidationError("cannot train on an empty corpus")
    Z = corpus.label_matrix()
    if task_kind == "single_label" and not np.all(Z.sum(axis=1) == 1):
        raise ValidationError("single-label training needs exactly one label per caption")
    if task_kind == "multi_label" and np.any(Z.sum(axis=1) == Z.shape[1]):
        raise ValidationError("ranking loss needs at least one negative class per caption")


def train(
    cfg: TrainConfig,
    corpus: LabeledCorpus,
    encoder: EncoderWeights | None = None,
    bank: PromptBank | None = None,
) -> TrainReport:
    """Optimize coarse and fine prompts on labeled captions.

    Runs ``epochs * ceil(M / batch_size)`` steps over a per-epoch permutation
    drawn from the config seed. Epoch records hold summed batch losses.
    """
    _validate_labels(corpus, cfg.task_kind)
    encoder = encoder or cfg.encoder()
    if encoder.dim != cfg.dim:
        raise ConfigError(f"encoder dim {encoder.dim} != config dim {cfg.dim}")
    checksum = encoder.checksum()
    bank = bank or init_prompts(cfg, corpus.class_names)
    data = EncodedCorpus.build(encoder, corpus)
    M = len(data)

    coarse, fine = bank.coarse.copy(), bank.fine.copy()
    state_c, state_f = AdamState.zeros_like(coarse), AdamState.zeros_like(fine)
    rng = np.random.Generator(np.random.Philox(key=[cfg.seed, _SHUFFLE_TAG]))
    history: list[EpochRecord] = []
    step = 0
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(M)
        sums = np.zeros(3)
        for lo in range(0, M, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            current = bank.replace(coarse, fine)
            loss = total_loss(
                data.sentence[idx],
                [data.words[i] for i in idx],
                data.labels[idx],
                current,
                encoder,
                cfg.tau,
                cfg.tau_s,
                cfg.task_kind,
                cfg.margin,
            )
            step += 1
            if not math.isfinite(loss.value):
                raise NonFiniteLoss(step, loss.value)
            sums += (loss.value, loss.coarse.value, loss.fine.value)
            if cfg.optimizer == "adam":
                coarse, state_c = adam_update(coarse, loss.grad_coarse, state_c, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, step)
                fine, state_f = adam_update(fine, loss.grad_fine, state_f, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, step)
            else:
                coarse = sgd_update(coarse, loss.grad_coarse, cfg.lr)
                fine = sgd_update(fine, loss.grad_fine, cfg.lr)
        history.append(EpochRecord(epoch, *map(float, sums)))
        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            logger.info("epoch %d loss %.4f (coarse %.4f, fine %.4f)", epoch, *sums)

    if encoder.checksum() != checksum:
        raise RuntimeError("encoder weights changed during training")
    return TrainReport(history, time.perf_counter() - start, bank.replace(coarse, fine), checksum, step)
