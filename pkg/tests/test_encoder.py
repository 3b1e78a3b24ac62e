import math

import numpy as np
import pytest

from hyperlora import encoder as E
from hyperlora.errors import ArgumentError, ConfigError
from hyperlora.transform import TokenSentence


def rand_lora(cfg, seed=0, scale=0.2):
    rng = np.random.default_rng(seed)
    d, r, k = cfg.d_model, cfg.lora_rank, cfg.n_blocks
    return E.LoRAParamSet(
        down_q=tuple(rng.normal(0, scale, (d, r)) for _ in range(k)),
        up_q=tuple(rng.normal(0, scale, (r, d)) for _ in range(k)),
        down_v=tuple(rng.normal(0, scale, (d, r)) for _ in range(k)),
        up_v=tuple(rng.normal(0, scale, (r, d)) for _ in range(k)),
    )


def sentence(words):
    return TokenSentence(tuple(words))


def straight_line_encode(cfg, w, lora, sent):
    """Independent oracle: scalar-loop forward pass, no vectorized tricks."""
    ids = E.token_ids(sent.tokens, cfg)
    n, d = len(ids), cfg.d_model
    dh = d // cfg.n_heads

    def ln(row, g, b):
        mu = sum(row) / d
        var = sum((v - mu) ** 2 for v in row) / d
        return [g[j] * (row[j] - mu) / math.sqrt(var + 1e-5) + b[j]
                for j in range(d)]

    x = [[w["tok_emb"][ids[i]][j] + w["pos_emb"][i][j] for j in range(d)]
         for i in range(n)]
    x = [ln(row, w["ln_emb/g"], w["ln_emb/b"]) for row in x]
    for k in range(cfg.n_blocks):
        p = f"block{k}/"

        def proj(mat, bias, extra_down=None, extra_up=None):
            out = []
            for row in x:
                base = [sum(row[i] * mat[i][j] for i in range(d)) + bias[j]
                        for j in range(d)]
                if extra_down is not None:
                    r = cfg.lora_rank
                    mid = [sum(row[i] * extra_down[i][c] for i in range(d))
                           for c in range(r)]
                    for j in range(d):
                        base[j] += sum(mid[c] * extra_up[c][j]
                                       for c in range(r))
                out.append(base)
            return out

        if lora is None:
            q = proj(w[p + "wq"], w[p + "bq"])
            v = proj(w[p + "wv"], w[p + "bv"])
        else:
            q = proj(w[p + "wq"], w[p + "bq"], lora.down_q[k], lora.up_q[k])
            v = proj(w[p + "wv"], w[p + "bv"], lora.down_v[k], lora.up_v[k])
        key = proj(w[p + "wk"], w[p + "bk"])
        attn = [[0.0] * d for _ in range(n)]
        for h in range(cfg.n_heads):
            lo = h * dh
            for i in range(n):
                scores = [sum(q[i][lo + c] * key[j][lo + c]
                              for c in range(dh)) / math.sqrt(dh)
                          for j in range(n)]
                m = max(scores)
                exps = [math.exp(s - m) for s in scores]
                z = sum(exps)
                probs = [e / z for e in exps]
                for c in range(dh):
                    attn[i][lo + c] = sum(probs[j] * v[j][lo + c]
                                          for j in range(n))
        proj_o = [[sum(attn[i][a] * w[p + "wo"][a][j] for a in range(d))
                   + w[p + "bo"][j] for j in range(d)] for i in range(n)]
        x = [ln([x[i][j] + proj_o[i][j] for j in range(d)],
                w[p + "ln1/g"], w[p + "ln1/b"]) for i in range(n)]
        ff_dim = cfg.ff_dim
        hmid = [[max(0.0, sum(x[i][a] * w[p + "w1"][a][j] for a in range(d))
                     + w[p + "b1"][j]) for j in range(ff_dim)]
                for i in range(n)]
        ff = [[sum(hmid[i][a] * w[p + "w2"][a][j] for a in range(ff_dim))
               + w[p + "b2"][j] for j in range(d)] for i in range(n)]
        x = [ln([x[i][j] + ff[i][j] for j in range(d)],
                w[p + "ln2/g"], w[p + "ln2/b"]) for i in range(n)]
    return np.array(x)


@pytest.fixture(scope="module")
def stack():
    return E.EncoderStack.build(E.EncoderConfig(seed=7))


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            E.EncoderConfig(d_model=30, n_heads=4)

    def test_rank_bounds(self):
        with pytest.raises(ConfigError):
            E.EncoderConfig(lora_rank=0)
        with pytest.raises(ConfigError):
            E.EncoderConfig(lora_rank=100)


class TestTokenIds:
    def test_stable_and_in_range(self):
        cfg = E.EncoderConfig()
        ids = E.token_ids(("the", "dog", "the"), cfg)
        assert ids[0] == ids[2]
        assert np.all(ids >= 2) and np.all(ids < cfg.vocab_size)

    def test_empty_token_is_unk(self):
        ids = E.token_ids(("",), E.EncoderConfig())
        assert ids[0] == E.UNK_ID


class TestFrozenWeights:
    def test_seed_determinism(self):
        cfg = E.EncoderConfig(seed=3)
        a = E.FrozenWeights.initialize(cfg)
        b = E.FrozenWeights.initialize(cfg)
        assert a.byte_digest() == b.byte_digest()
        c = E.FrozenWeights.initialize(E.EncoderConfig(seed=4))
        assert c.byte_digest() != a.byte_digest()

    def test_immutable(self, stack):
        with pytest.raises(ValueError):
            stack.weights["tok_emb"][0, 0] = 1.0

    def test_save_load_roundtrip(self, stack, tmp_path):
        p = tmp_path / "enc.ckpt"
        stack.weights.save(p)
        back = E.FrozenWeights.load(p, stack.cfg)
        assert back.byte_digest() == stack.weights.byte_digest()

    def test_load_shape_mismatch(self, stack, tmp_path):
        p = tmp_path / "enc.ckpt"
        stack.weights.save(p)
        with pytest.raises(ConfigError):
            E.FrozenWeights.load(p, E.EncoderConfig(d_model=16, seed=7))


class TestEncode:
    def test_single_token_shape(self, stack):
        out = E.encode(stack.cfg, stack.weights, None, sentence(["hello"]))
        assert out.shape == (1, 32)

    def test_zero_lora_is_identity(self, stack):
        s = sentence("the dog saw the river".split())
        base = E.encode(stack.cfg, stack.weights, None, s)
        zero = E.encode(stack.cfg, stack.weights,
                        E.LoRAParamSet.zeros(stack.cfg), s)
        assert np.array_equal(base, zero)

    def test_matches_straight_line_oracle(self, stack):
        rng = np.random.default_rng(5)
        words = ["tok%d" % rng.integers(0, 50) for _ in range(9)]
        s = sentence(words)
        for lora in (None, rand_lora(stack.cfg, seed=1)):
            fast = E.encode(stack.cfg, stack.weights, lora, s)
            slow = straight_line_encode(stack.cfg, stack.weights, lora, s)
            np.testing.assert_allclose(fast, slow, rtol=0, atol=1e-12)

    def test_too_long(self, stack):
        s = sentence(["w"] * (stack.cfg.max_len + 1))
        with pytest.raises(ArgumentError):
            E.encode(stack.cfg, stack.weights, None, s)

    def test_lora_shape_mismatch(self, stack):
        bad = rand_lora(E.EncoderConfig(d_model=16, lora_rank=2, seed=0))
        s = sentence(["a"])
        with pytest.raises(ConfigError):
            E.encode(stack.cfg, stack.weights, bad, s)

    def test_lora_locality(self, stack):
        # changing block-1 factors must not affect block-0 activations
        s = sentence("she keeps the letter".split())
        ids = E.token_ids(s.tokens, stack.cfg)
        a = rand_lora(stack.cfg, seed=2)
        mats = {f: list(getattr(a, f))
                for f in ("down_q", "up_q", "down_v", "up_v")}
        mats["down_q"][1] = mats["down_q"][1] + 0.3
        b = E.LoRAParamSet(**{f: tuple(v) for f, v in mats.items()})
        from hyperlora.mathx import numpy_ops
        blocks_a, blocks_b = [], []
        E.forward_ids(stack.cfg, stack.weights, a, ids, numpy_ops,
                      collect_blocks=blocks_a)
        E.forward_ids(stack.cfg, stack.weights, b, ids, numpy_ops,
                      collect_blocks=blocks_b)
        assert np.array_equal(blocks_a[0], blocks_b[0])
        assert not np.array_equal(blocks_a[1], blocks_b[1])

    def test_rank_bound(self, stack):
        lora = rand_lora(stack.cfg, seed=3)
        delta = lora.down_q[0] @ lora.up_q[0]
        sv = np.linalg.svd(delta, compute_uv=False)
        assert np.sum(sv > 1e-10) <= stack.cfg.lora_rank


class TestBatchEncode:
    def test_row_count(self, stack):
        batch = [sentence(["a", "b", "c"]), sentence(["d", "e", "f", "g", "h"])]
        out = E.batch_encode(stack.cfg, stack.weights, None, batch)
        assert out.shape == (8, stack.cfg.d_model)

    def test_equals_concatenated_encodes(self, stack):
        batch = [sentence(w.split()) for w in
                 ("the dog", "she is happy", "they walked the dog home")]
        lora = rand_lora(stack.cfg, seed=4)
        got = E.batch_encode(stack.cfg, stack.weights, lora, batch)
        want = np.vstack([E.encode(stack.cfg, stack.weights, lora, s)
                          for s in batch])
        assert np.array_equal(got, want)

    def test_permutation_permutes_rows(self, stack):
        batch = [sentence(["x", "y"]), sentence(["z"])]
        a = E.batch_encode(stack.cfg, stack.weights, None, batch)
        b = E.batch_encode(stack.cfg, stack.weights, None, batch[::-1])
        assert np.array_equal(a, np.vstack([b[1:], b[:1]]))

    def test_empty_batch(self, stack):
        with pytest.raises(ArgumentError):
            E.batch_encode(stack.cfg, stack.weights, None, [])
