"""Hypernetworks that turn a dialect feature vector into low-rank factors.

Two separate two-layer MLPs share the job: one generates every down
projection, the other every up projection.  Both read the same input — the
feature vector concatenated with a one-hot position code that distinguishes
the transformer block and whether the factors target the query or the value
projection:

    x = [d ; onehot(2*block + (0 query / 1 value))]
    down = reshape(relu(x W1 + b1) W2 + b2, (d_model, r))

No per-dialect parameters exist anywhere: all dialects flow through the same
two MLPs, so changing the feature vector changes every block's adapter.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .encoder import LoRAParamSet
from .errors import ArgumentError, ConfigError, ParseError
from .mathx import numpy_ops
from .serialization import load_tensors, save_tensors
from .typology import DialectFeatureVector


class InitScheme(Enum):
    ZERO_OUTPUT = "zero_output"     # up-generator second layer zeroed
    SMALL_UNIFORM = "small_uniform"


@dataclass(frozen=True)
class HypernetConfig:
    feature_dim: int
    n_blocks: int = 2
    d_model: int = 32
    r: int = 4
    hidden_dim: int = 16
    init_scheme: InitScheme = InitScheme.ZERO_OUTPUT

    def __post_init__(self):
        if self.feature_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("feature_dim and hidden_dim must be >= 1")
        if self.n_blocks < 1 or self.r < 1 or self.d_model < 1:
            raise ConfigError("n_blocks, r and d_model must be >= 1")

    @property
    def input_dim(self) -> int:
        return self.feature_dim + 2 * self.n_blocks

    @property
    def output_dim(self) -> int:
        return self.d_model * self.r


_TENSOR_NAMES = ("down/w1", "down/b1", "down/w2", "down/b2",
                 "up/w1", "up/b1", "up/w2", "up/b2")


class HypernetWeights:
    """Trainable parameters of both generator MLPs."""

    def __init__(self, cfg: HypernetConfig, tensors: dict[str, np.ndarray]):
        expected = _expected_shapes(cfg)
        if set(tensors) != set(expected):
            raise ConfigError(f"tensor names {sorted(tensors)} do not match "
                              f"the hypernet layout")
        for name, arr in tensors.items():
            if arr.shape != expected[name]:
                raise ConfigError(f"{name}: shape {arr.shape}, expected "
                                  f"{expected[name]}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} has non-finite entries")
        self.cfg = cfg
        self.tensors = {n: np.array(tensors[n], dtype=np.float64)
                        for n in _TENSOR_NAMES}

    @classmethod
    def initialize(cls, cfg: HypernetConfig, seed: int) -> "HypernetWeights":
        rng = np.random.default_rng(seed)
        t = {}
        for side in ("down", "up"):
            s1 = 1.0 / np.sqrt(cfg.input_dim)
            s2 = 1.0 / np.sqrt(cfg.hidden_dim)
            t[f"{side}/w1"] = rng.uniform(-s1, s1,
                                          (cfg.input_dim, cfg.hidden_dim))
            t[f"{side}/b1"] = np.zeros(cfg.hidden_dim)
            t[f"{side}/w2"] = rng.uniform(-s2, s2,
                                          (cfg.hidden_dim, cfg.output_dim))
            t[f"{side}/b2"] = np.zeros(cfg.output_dim)
        if cfg.init_scheme is InitScheme.ZERO_OUTPUT:
            t["up/w2"][:] = 0.0
            t["up/b2"][:] = 0.0
        return cls(cfg, t)

    def copy(self) -> "HypernetWeights":
        return HypernetWeights(self.cfg, {n: a.copy()
                                          for n, a in self.tensors.items()})

    def param_count(self) -> int:
        return sum(a.size for a in self.tensors.values())

    def save(self, path, train_seed: int = None):
        meta = {"kind": "hypernet", "train_seed": train_seed,
                "cfg": {"feature_dim": self.cfg.feature_dim,
                        "n_blocks": self.cfg.n_blocks,
                        "d_model": self.cfg.d_model,
                        "r": self.cfg.r,
                        "hidden_dim": self.cfg.hidden_dim,
                        "init_scheme": self.cfg.init_scheme.value}}
        save_tensors(path, {f"hypernet/{n}": a
                            for n, a in self.tensors.items()}, meta=meta)

    @classmethod
    def load(cls, path):
        tensors, meta = load_tensors(path)
        if meta.get("kind") != "hypernet":
            raise ParseError(f"{path}: not a hypernet checkpoint")
        cfg_d = dict(meta["cfg"])
        cfg_d["init_scheme"] = InitScheme(cfg_d["init_scheme"])
        cfg = HypernetConfig(**cfg_d)
        stripped = {}
        for name, arr in tensors.items():
            if not name.startswith("hypernet/"):
                raise ParseError(f"{path}: unprefixed tensor {name!r}")
            stripped[name[len("hypernet/"):]] = arr
        return cls(cfg, stripped), meta


def _expected_shapes(cfg: HypernetConfig) -> dict[str, tuple]:
    shapes = {}
    for side in ("down", "up"):
        shapes[f"{side}/w1"] = (cfg.input_dim, cfg.hidden_dim)
        shapes[f"{side}/b1"] = (cfg.hidden_dim,)
        shapes[f"{side}/w2"] = (cfg.hidden_dim, cfg.output_dim)
        shapes[f"{side}/b2"] = (cfg.output_dim,)
    return shapes


def param_count(cfg: HypernetConfig) -> int:
    """Trainable scalar count across both generator MLPs."""
    per_net = (cfg.input_dim * cfg.hidden_dim + cfg.hidden_dim
               + cfg.hidden_dim * cfg.output_dim + cfg.output_dim)
    return 2 * per_net


def positional_input(d: DialectFeatureVector, block: int, role: str,
                     cfg: HypernetConfig) -> np.ndarray:
    """Concatenate the feature vector with the (block, role) one-hot."""
    if not 0 <= block < cfg.n_blocks:
        raise ArgumentError(f"block {block} out of range [0, {cfg.n_blocks})")
    if role not in ("query", "value"):
        raise ArgumentError(f"role must be 'query' or 'value', got {role!r}")
    if d.n_features != cfg.feature_dim:
        raise ConfigError(f"feature vector has {d.n_features} entries, "
                          f"config expects {cfg.feature_dim}")
    onehot = np.zeros(2 * cfg.n_blocks)
    onehot[2 * block + (0 if role == "query" else 1)] = 1.0
    return np.concatenate([d.rates, onehot])


def _mlp(tensors, side: str, x_row, ops):
    h = ops.relu(x_row @ tensors[f"{side}/w1"] + tensors[f"{side}/b1"])
    return h @ tensors[f"{side}/w2"] + tensors[f"{side}/b2"]


def generate_lora(hw: HypernetWeights, d: DialectFeatureVector,
                  cfg: HypernetConfig = None, *, tensors=None,
                  ops=numpy_ops) -> LoRAParamSet:
    """Generate the full adapter set for one dialect.

    Deterministic in (weights, d).  ``tensors``/``ops`` switch the forward
    pass onto a reverse-mode tape; by default plain arrays come back.
    """
    cfg = cfg or hw.cfg
    if cfg.feature_dim != d.n_features:
        raise ConfigError(f"feature vector has {d.n_features} entries, "
                          f"config expects {cfg.feature_dim}")
    t = tensors if tensors is not None else hw.tensors
    down_q, up_q, down_v, up_v = [], [], [], []
    for k in range(cfg.n_blocks):
        for role, downs, ups in (("query", down_q, up_q),
                                 ("value", down_v, up_v)):
            x = positional_input(d, k, role, cfg).reshape(1, cfg.input_dim)
            d_flat = _mlp(t, "down", x, ops)
            u_flat = _mlp(t, "up", x, ops)
            downs.append(d_flat.reshape((cfg.d_model, cfg.r)))
            ups.append(u_flat.reshape((cfg.r, cfg.d_model)))
    return LoRAParamSet(down_q=tuple(down_q), up_q=tuple(up_q),
                        down_v=tuple(down_v), up_v=tuple(up_v))
