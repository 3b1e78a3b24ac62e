"""A small frozen transformer encoder with low-rank adaptation hooks.

The encoder is a standard post-norm transformer (token + position
embeddings, multi-head self-attention, ReLU feed-forward, layer norm after
each residual).  Its weights are drawn once from a seed and never trained;
the only movable parts are externally supplied low-rank factors added to the
query and value projections of every block:

    query(x) = x W_q + b_q + (x D_q) U_q        (same for value)

with scaling factor 1.  Tokens map to ids through a stable content hash, so
the mapping needs no fitted vocabulary and is identical across runs and
platforms.  Everything runs in float64.

Forward code is written against the ops protocol (see
:mod:`hyperlora.mathx`), so the same function serves the plain numpy path
and the reverse-mode tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError
from .mathx import numpy_ops
from .serialization import load_tensors, save_tensors
from .transform import TokenSentence

PAD_ID = 0
UNK_ID = 1


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int = 256
    d_model: int = 32
    n_blocks: int = 2
    n_heads: int = 2
    ff_dim: int = 64
    max_len: int = 24
    lora_rank: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if not 1 <= self.lora_rank <= self.d_model:
            raise ConfigError("lora_rank must be in [1, d_model]")
        if self.vocab_size < 3:
            raise ConfigError("vocab_size must leave room for pad/unk ids")


def _fnv1a(token: str) -> int:
    h = 0xCBF29CE484222325
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def token_ids(tokens, cfg: EncoderConfig) -> np.ndarray:
    """Stable hash-based token ids; empty tokens map to the unk id."""
    ids = [UNK_ID if not t else 2 + _fnv1a(t) % (cfg.vocab_size - 2)
           for t in tokens]
    return np.array(ids, dtype=np.int64)


class FrozenWeights:
    """Immutable encoder parameters, reproducible from (config, seed)."""

    def __init__(self, cfg: EncoderConfig, tensors: dict[str, np.ndarray]):
        expected = _expected_shapes(cfg)
        if set(tensors) != set(expected):
            missing = set(expected).symmetric_difference(tensors)
            raise ConfigError(f"weight names do not match config: {missing}")
        store = {}
        for name, arr in tensors.items():
            arr = np.array(arr, dtype=np.float64)
            if arr.shape != expected[name]:
                raise ConfigError(f"{name}: shape {arr.shape}, "
                                  f"expected {expected[name]}")
            arr.flags.writeable = False
            store[name] = arr
        self._tensors = store
        self.cfg = cfg

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def tensors(self) -> dict[str, np.ndarray]:
        return dict(self._tensors)

    def byte_digest(self) -> bytes:
        import hashlib
        h = hashlib.sha256()
        for name in sorted(self._tensors):
            h.update(name.encode())
            h.update(self._tensors[name].tobytes())
        return h.digest()

    @classmethod
    def initialize(cls, cfg: EncoderConfig) -> "FrozenWeights":
        rng = np.random.default_rng(cfg.seed)
        t = {}
        d, ff = cfg.d_model, cfg.ff_dim
        t["tok_emb"] = rng.normal(0.0, 0.5, (cfg.vocab_size, d))
        t["pos_emb"] = rng.normal(0.0, 0.5, (cfg.max_len, d))
        t["ln_emb/g"] = np.ones(d)
        t["ln_emb/b"] = np.zeros(d)
        for k in range(cfg.n_blocks):
            p = f"block{k}/"
            for name in ("wq", "wk", "wv", "wo"):
                t[p + name] = rng.normal(0.0, 1.0 / math.sqrt(d), (d, d))
            for name in ("bq", "bk", "bv", "bo"):
                t[p + name] = np.zeros(d)
            t[p + "w1"] = rng.normal(0.0, 1.0 / math.sqrt(d), (d, ff))
            t[p + "b1"] = np.zeros(ff)
            t[p + "w2"] = rng.normal(0.0, 1.0 / math.sqrt(ff), (ff, d))
            t[p + "b2"] = np.zeros(d)
            t[p + "ln1/g"] = np.ones(d)
            t[p + "ln1/b"] = np.zeros(d)
            t[p + "ln2/g"] = np.ones(d)
            t[p + "ln2/b"] = np.zeros(d)
        return cls(cfg, t)

    def save(self, path):
        save_tensors(path, self._tensors,
                     meta={"kind": "encoder", "seed": self.cfg.seed})

    @classmethod
    def load(cls, path, cfg: EncoderConfig) -> "FrozenWeights":
        tensors, _ = load_tensors(path)
        return cls(cfg, tensors)


def _expected_shapes(cfg: EncoderConfig) -> dict[str, tuple]:
    d, ff = cfg.d_model, cfg.ff_dim
    shapes = {
        "tok_emb": (cfg.vocab_size, d),
        "pos_emb": (cfg.max_len, d),
        "ln_emb/g": (d,), "ln_emb/b": (d,),
    }
    for k in range(cfg.n_blocks):
        p = f"block{k}/"
        shapes.update({
            p + "wq": (d, d), p + "bq": (d,),
            p + "wk": (d, d), p + "bk": (d,),
            p + "wv": (d, d), p + "bv": (d,),
            p + "wo": (d, d), p + "bo": (d,),
            p + "w1": (d, ff), p + "b1": (ff,),
            p + "w2": (ff, d), p + "b2": (d,),
            p + "ln1/g": (d,), p + "ln1/b": (d,),
            p + "ln2/g": (d,), p + "ln2/b": (d,),
        })
    return shapes


@dataclass(frozen=True)
class LoRAParamSet:
    """Per-block low-rank factors for the query and value projections.

    ``down_*[k]`` has shape (d_model, r) and ``up_*[k]`` (r, d_model).
    Entries may be plain arrays or tape variables.
    """

    down_q: tuple
    up_q: tuple
    down_v: tuple
    up_v: tuple

    @classmethod
    def zeros(cls, cfg: EncoderConfig) -> "LoRAParamSet":
        d, r = cfg.d_model, cfg.lora_rank
        return cls(
            down_q=tuple(np.zeros((d, r)) for _ in range(cfg.n_blocks)),
            up_q=tuple(np.zeros((r, d)) for _ in range(cfg.n_blocks)),
            down_v=tuple(np.zeros((d, r)) for _ in range(cfg.n_blocks)),
            up_v=tuple(np.zeros((r, d)) for _ in range(cfg.n_blocks)),
        )

    def validate(self, cfg: EncoderConfig):
        d, r = cfg.d_model, cfg.lora_rank
        groups = (("down_q", (d, r)), ("up_q", (r, d)),
                  ("down_v", (d, r)), ("up_v", (r, d)))
        for name, want in groups:
            mats = getattr(self, name)
            if len(mats) != cfg.n_blocks:
                raise ConfigError(f"{name}: {len(mats)} blocks, "
                                  f"expected {cfg.n_blocks}")
            for k, m in enumerate(mats):
                if not isinstance(m, np.ndarray):
                    continue  # tape variables are checked at build time
                if m.shape != want:
                    raise ConfigError(f"{name}[{k}]: shape {m.shape}, "
                                      f"expected {want}")
                if not np.all(np.isfinite(m)):
                    raise ConfigError(f"{name}[{k}] has non-finite entries")


@dataclass(frozen=True)
class EncoderStack:
    """Config plus frozen weights, the unit the trainer and evaluator use."""

    cfg: EncoderConfig
    weights: FrozenWeights

    @classmethod
    def build(cls, cfg: EncoderConfig = EncoderConfig()) -> "EncoderStack":
        return cls(cfg=cfg, weights=FrozenWeights.initialize(cfg))


def forward_ids(cfg: EncoderConfig, w: FrozenWeights, lora, ids, ops,
                collect_blocks=None):
    """Encoder forward pass over token ids, generic over the ops backend.

    ``lora`` may be None (frozen base), a LoRAParamSet of arrays, or a
    LoRAParamSet of tape variables.  ``collect_blocks``, when a list, gets
    each block's output appended (used by locality tests).
    """
    x = w["tok_emb"][ids] + w["pos_emb"][:len(ids)]
    x = ops.layer_norm(x, w["ln_emb/g"], w["ln_emb/b"])
    dh = cfg.d_model // cfg.n_heads
    scale = 1.0 / math.sqrt(dh)
    for k in range(cfg.n_blocks):
        p = f"block{k}/"
        q = x @ w[p + "wq"] + w[p + "bq"]
        key = x @ w[p + "wk"] + w[p + "bk"]
        val = x @ w[p + "wv"] + w[p + "bv"]
        if lora is not None:
            q = q + (x @ lora.down_q[k]) @ lora.up_q[k]
            val = val + (x @ lora.down_v[k]) @ lora.up_v[k]
        heads = []
        for h in range(cfg.n_heads):
            cols = slice(h * dh, (h + 1) * dh)
            scores = (q[:, cols] @ key[:, cols].T) * scale
            probs = ops.softmax(scores, axis=-1)
            heads.append(probs @ val[:, cols])
        attn = ops.concat(heads, axis=1) @ w[p + "wo"] + w[p + "bo"]
        x = ops.layer_norm(x + attn, w[p + "ln1/g"], w[p + "ln1/b"])
        ff = ops.relu(x @ w[p + "w1"] + w[p + "b1"]) @ w[p + "w2"] + w[p + "b2"]
        x = ops.layer_norm(x + ff, w[p + "ln2/g"], w[p + "ln2/b"])
        if collect_blocks is not None:
            collect_blocks.append(x)
    return x


def encode(cfg: EncoderConfig, w: FrozenWeights, lora,
           sentence: TokenSentence) -> np.ndarray:
    """Last-layer token representations, shape (len, d_model).

    With a zero or absent adapter the output equals the frozen base pass
    exactly.
    """
    if len(sentence) > cfg.max_len:
        raise ArgumentError(f"sentence length {len(sentence)} exceeds "
                            f"max_len {cfg.max_len}")
    if lora is not None:
        lora.validate(cfg)
    ids = token_ids(sentence.tokens, cfg)
    return forward_ids(cfg, w, lora, ids, numpy_ops)


def batch_encode(cfg: EncoderConfig, w: FrozenWeights, lora,
                 batch) -> np.ndarray:
    """Token representations for a batch, stacked sentence by sentence.

    Returns an (N, d_model) point cloud, N = total token count; row order is
    sentence order, then token order within the sentence.
    """
    batch = list(batch)
    if not batch:
        raise ArgumentError("batch must not be empty")
    return np.vstack([encode(cfg, w, lora, s) for s in batch])
