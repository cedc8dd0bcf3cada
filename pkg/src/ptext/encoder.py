"""Frozen single-block text encoder with prompt-token insertion.

The encoder is a deliberately small stand-in for a pretrained text tower:
hashed token embeddings plus sinusoidal positions, one single-head
self-attention layer with a residual connection, and L2 normalization of
the outputs. Learnable prompt rows are spliced in right after ``[CLS]`` and
the only gradient ever computed is the one with respect to those rows.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .corpus import BUCKET_COUNT, TokenSeq, tokenize
from .errors import EmptySequence, IndexOutOfRange, NoCache, ShapeMismatch, ValidationError

Grain = Literal["coarse", "fine"]

DEFAULT_DIM = 128
# Position codes and the [CLS] embedding are kept small so that the pooled
# [CLS] output is dominated by the attended tokens rather than by its own
# residual input.
POS_SCALE = 0.1
CLS_SCALE = 0.1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position codes; every row has L2 norm ``POS_SCALE``."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    half = (dim + 1) // 2
    rates = 1.0 / 10000.0 ** (2.0 * np.arange(half) / dim)
    enc = np.empty((length, 2 * half))
    enc[:, 0::2] = np.sin(pos * rates)
    enc[:, 1::2] = np.cos(pos * rates)
    enc = enc[:, :dim]
    return POS_SCALE * enc / np.linalg.norm(enc, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class EncoderWeights:
    seed: int
    dim: int
    bucket_count: int
    token_embed: np.ndarray
    cls_embed: np.ndarray
    attn_q: np.ndarray
    attn_k: np.ndarray
    attn_v: np.ndarray

    def pos_encode(self, length: int) -> np.ndarray:
        return sinusoidal_positions(length, self.dim)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (self.token_embed, self.cls_embed, self.attn_q, self.attn_k, self.attn_v):
            h.update(arr.tobytes())
        return h.hexdigest()


def init_encoder(seed: int = 0, dim: int = DEFAULT_DIM, bucket_count: int = BUCKET_COUNT) -> EncoderWeights:
    """Draw all matrices i.i.d. N(0, 1/dim) from a Philox stream keyed by ``seed``.

    The [CLS] embedding comes last from the same stream, scaled by ``CLS_SCALE``.
    """
    if dim < 2:
        raise ValidationError("dim must be >= 2")
    if bucket_count < dim:
        raise ValidationError("bucket_count must be >= dim")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    std = 1.0 / np.sqrt(dim)
    token_embed = rng.normal(0.0, std, (bucket_count, dim))
    attn_q, attn_k, attn_v = (rng.normal(0.0, std, (dim, dim)) for _ in range(3))
    cls_embed = CLS_SCALE * rng.normal(0.0, std, dim)
    return EncoderWeights(
        seed=seed,
        dim=dim,
        bucket_count=bucket_count,
        token_embed=_frozen(token_embed),
        cls_embed=_frozen(cls_embed),
        attn_q=_frozen(attn_q),
        attn_k=_frozen(attn_k),
        attn_v=_frozen(attn_v),
    )


@dataclass
class ForwardCache:
    """Activations needed to backpropagate from the [CLS] output."""

    x: np.ndarray  # (S, d) block input
    q0: np.ndarray  # (d,) query at [CLS]
    keys: np.ndarray  # (S, d)
    values: np.ndarray  # (S, d)
    attn0: np.ndarray  # (S,) attention row of [CLS]
    h0_norm: float
    prompt_rows: slice


@dataclass
class EncodedText:
    sentence_feat: np.ndarray
    word_feats: np.ndarray
    cache: ForwardCache | None = field(default=None, repr=False)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(w: EncoderWeights, emb: np.ndarray, prompt_rows: slice | None, want_grad: bool) -> EncodedText:
    S, d = emb.shape
    x = emb + w.pos_encode(S)
    q = x @ w.attn_q
    k = x @ w.attn_k
    v = x @ w.attn_v
    attn = _softmax_rows(q @ k.T / np.sqrt(d))
    h = attn @ v + x
    norms = np.linalg.norm(h, axis=1)
    out = h / norms[:, None]
    cache = None
    if want_grad:
        cache = ForwardCache(x, q[0], k, v, attn[0], float(norms[0]), prompt_rows or slice(1, 1))
    return EncodedText(out[0], out[1:], cache)


def _embed_tokens(w: EncoderWeights, tokens: Sequence[int]) -> np.ndarray:
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= w.bucket_count):
        raise IndexOutOfRange("token id outside the embedding table")
    return w.token_embed[ids]


def encode_caption(w: EncoderWeights, toks: TokenSeq) -> EncodedText:
    """Sentence feature at [CLS] and one feature per word, all unit norm."""
    if len(toks) == 0:
        raise EmptySequence("caption has no tokens")
    emb = np.vstack([w.cls_embed[None, :], _embed_tokens(w, toks.tokens)])
    return _forward(w, emb, None, want_grad=False)


def encode_text(w: EncoderWeights, text: str) -> EncodedText:
    return encode_caption(w, tokenize(text, w.bucket_count))


@dataclass
class PromptBank:
    """Learnable coarse/fine prompt rows plus the class names they serve."""

    coarse: np.ndarray
    fine: np.ndarray
    class_names: tuple[str, ...]
    class_token_seqs: tuple[TokenSeq, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        self.coarse = np.asarray(self.coarse, dtype=np.float64)
        self.fine = np.asarray(self.fine, dtype=np.float64)
        if self.coarse.ndim != 2 or self.coarse.shape != self.fine.shape:
            raise ShapeMismatch(f"coarse {self.coarse.shape} and fine {self.fine.shape} differ")
        self.class_names = tuple(self.class_names)
        self.class_token_seqs = tuple(self.class_token_seqs)
        if len(self.class_names) != len(self.class_token_seqs):
            raise ShapeMismatch("one token sequence per class name is required")

    @property
    def n_prompt(self) -> int:
        return self.coarse.shape[0]

    @property
    def dim(self) -> int:
        return self.coarse.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def matrix(self, grain: Grain) -> np.ndarray:
        if grain == "coarse":
            return self.coarse
        if grain == "fine":
            return self.fine
        raise ValidationError(f"unknown grain {grain!r}")

    def with_classes(self, class_names: Sequence[str], bucket_count: int = BUCKET_COUNT) -> "PromptBank":
        """Same prompt rows, different class names (used for transfer)."""
        seqs = tuple(tokenize(n, bucket_count) for n in class_names)
        return PromptBank(self.coarse.copy(), self.fine.copy(), tuple(class_names), seqs, self.seed)

    def replace(self, coarse: np.ndarray, fine: np.ndarray) -> "PromptBank":
        return PromptBank(coarse, fine, self.class_names, self.class_token_seqs, self.seed)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.coarse.tobytes())
        h.update(self.fine.tobytes())
        h.update("\x00".join(self.class_names).encode("utf-8"))
        return h.hexdigest()


def encode_prompt_rows(
    w: EncoderWeights, prompt: np.ndarray, class_tokens: TokenSeq, want_grad: bool = False
) -> EncodedText:
    """Encode ``[CLS] + prompt rows + class-name tokens``."""
    prompt = np.asarray(prompt, dtype=np.float64)
    if prompt.ndim != 2 or prompt.shape[1] != w.dim:
        raise ShapeMismatch(f"prompt must be (N, {w.dim}), got {prompt.shape}")
    n = prompt.shape[0]
    emb = np.vstack([w.cls_embed[None, :], prompt, _embed_tokens(w, class_tokens.tokens)])
    return _forward(w, emb, slice(1, 1 + n), want_grad)


def encode_class_prompt(
    w: EncoderWeights, bank: PromptBank, grain: Grain, class_index: int, want_grad: bool = False
) -> EncodedText:
    if not 0 <= class_index < bank.num_classes:
        raise IndexOutOfRange(f"class index {class_index} outside [0, {bank.num_classes})")
    return encode_prompt_rows(w, bank.matrix(grain), bank.class_token_seqs[class_index], want_grad)


def backprop_prompt(w: EncoderWeights, cache: ForwardCache | None, grad_sentence_feat: np.ndarray) -> np.ndarray:
    """Gradient of an upstream scalar with respect to the prompt rows.

    ``grad_sentence_feat`` is the derivative of that scalar with respect to
    the normalized [CLS] output. Returns an ``(N, d)`` matrix.
    """
    if cache is None:
        raise NoCache("forward pass was run without want_grad=True")
    g = np.asarray(grad_sentence_feat, dtype=np.float64)
    d = w.dim
    s = (cache.attn0 @ cache.values + cache.x[0]) / cache.h0_norm
    # through h / ||h||
    g_h = (g - s * (s @ g)) / cache.h0_norm
    # h0 = sum_j a_j v_j + x_0
    a = cache.attn0
    g_x = np.outer(a, g_h @ w.attn_v.T)
    g_a = cache.values @ g_h
    g_e = a * (g_a - a @ g_a)
    # logits e_j = q0 . k_j / sqrt(d); the query only feeds [CLS], which is not a prompt row
    g_x += np.outer(g_e, w.attn_k @ cache.q0) / np.sqrt(d)
    return g_x[cache.prompt_rows]


def class_features(
    w: EncoderWeights, bank: PromptBank, grain: Grain, want_grad: bool = False
) -> tuple[np.ndarray, list[EncodedText]]:
    """Stack the C sentence features for one grain."""
    encs = [encode_class_prompt(w, bank, grain, c, want_grad) for c in range(bank.num_classes)]
    return np.vstack([e.sentence_feat for e in encs]), encs


def backprop_class_features(w: EncoderWeights, encs: Sequence[EncodedText], grad_feats: np.ndarray) -> np.ndarray:
    """Sum prompt gradients over classes in class-index order."""
    total = None
    for enc, g in zip(encs, grad_feats):
        part = backprop_prompt(w, enc.cache, g)
        total = part if total is None else total + part
    return total
