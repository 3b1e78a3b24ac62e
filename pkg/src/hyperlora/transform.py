"""Pseudo-dialect corpus generation by probabilistic rewrite rules.

A miniature catalog of morphosyntactic rewrite rules over coarsely tagged
token sequences stands in for a full rule-based dialect transformation
system.  Each rule fires independently per sentence with the probability
given by the dialect's feature application rate for that rule id; rules are
applied in fixed catalog order, each acting on the output of the previous
one.

Randomness is counter-based (Philox keyed by seed, sentence index and rule
index), so corpora are bit-reproducible regardless of iteration order or
parallelism.

Tags are supplied by the input corpus, never inferred.  The coarse tag set:
DET, N, V, COP, PRON, NEG, MOD, ADJ, ADV, P, POS, PUNCT, OTH.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ArgumentError, ParseError
from .typology import DialectFeatureVector


@dataclass(frozen=True)
class TokenSentence:
    """A tokenized sentence with optional 1:1 coarse part-of-speech tags."""

    tokens: tuple[str, ...]
    tags: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))
        if not self.tokens:
            raise ArgumentError("sentence must contain at least one token")
        if self.tags is not None and len(self.tags) != len(self.tokens):
            raise ArgumentError("tags must align 1:1 with tokens")

    def __len__(self):
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)

    def tag_at(self, i: int) -> str:
        return self.tags[i] if self.tags is not None else "OTH"


def _rebuild(pairs) -> TokenSentence:
    toks, tags = zip(*pairs)
    return TokenSentence(toks, tags)


def _tagged(sentence: TokenSentence):
    return list(zip(sentence.tokens,
                    sentence.tags or ("OTH",) * len(sentence)))


@dataclass(frozen=True)
class RewriteRule:
    """One rewrite rule: a matcher plus a deterministic action.

    The action rewrites every matching site (to a fixpoint where rewriting
    can expose new sites), never empties a sentence, and is idempotent on
    its own output.
    """

    rule_id: str
    description: str
    matcher: Callable[[TokenSentence], bool] = field(repr=False)
    action: Callable[[TokenSentence], TokenSentence] = field(repr=False)

    def applicable(self, sentence: TokenSentence) -> bool:
        return bool(self.matcher(sentence))

    def apply(self, sentence: TokenSentence) -> TokenSentence:
        out = self.action(sentence)
        assert len(out) > 0, f"rule {self.rule_id} emptied a sentence"
        return out


# --------------------------------------------------------------- rule bodies

def _find_poss_site(pairs):
    # (DET, N, "of") followed by a span ending at the next copula; the
    # rightmost site first so nested possessives invert innermost-out
    for i in reversed(range(len(pairs) - 3)):
        if (pairs[i][1] == "DET" and pairs[i + 1][1] == "N"
                and pairs[i + 2][0] == "of"):
            for j in range(i + 3, len(pairs)):
                if pairs[j][1] == "COP":
                    if j > i + 3:
                        return i, j
                    break
    return None


def _poss_match(s):
    return s.tags is not None and _find_poss_site(_tagged(s)) is not None


def _poss_apply(s):
    pairs = _tagged(s)
    for _ in range(len(pairs)):  # fixpoint; each step removes one "of"
        site = _find_poss_site(pairs)
        if site is None:
            break
        i, j = site
        pairs = (pairs[:i] + pairs[i + 3:j] + [("'s", "POS"), pairs[i + 1]]
                 + pairs[j:])
    return _rebuild(pairs)


def _copula_del_match(s):
    if s.tags is None:
        return False
    pairs = _tagged(s)
    return any(t == "COP" and 0 < i < len(pairs) - 1
               and pairs[i + 1][1] != "NEG"
               for i, (_, t) in enumerate(pairs))


def _copula_del_apply(s):
    pairs = _tagged(s)
    out = [p for i, p in enumerate(pairs)
           if not (p[1] == "COP" and 0 < i < len(pairs) - 1
                   and pairs[i + 1][1] != "NEG")]
    return _rebuild(out)


_NEG_CONCORD = {"any": "no", "anything": "nothing", "anybody": "nobody",
                "anyone": "nobody", "ever": "never"}


def _neg_concord_match(s):
    pairs = _tagged(s)
    seen_neg = False
    for tok, tag in pairs:
        if seen_neg and tok in _NEG_CONCORD:
            return True
        seen_neg = seen_neg or tag == "NEG"
    return False


def _neg_concord_apply(s):
    pairs = _tagged(s)
    out = []
    seen_neg = False
    for tok, tag in pairs:
        if seen_neg and tok in _NEG_CONCORD:
            out.append((_NEG_CONCORD[tok], tag))
        else:
            out.append((tok, tag))
        seen_neg = seen_neg or tag == "NEG"
    return _rebuild(out)


_ARTICLES = {"the", "a", "an"}


def _zero_article_match(s):
    if s.tags is None:
        return False
    pairs = _tagged(s)
    return any(tok in _ARTICLES and tag == "DET" and i + 1 < len(pairs)
               and pairs[i + 1][1] in ("N", "ADJ")
               for i, (tok, tag) in enumerate(pairs))


def _zero_article_apply(s):
    pairs = _tagged(s)
    out = [p for i, p in enumerate(pairs)
           if not (p[0] in _ARTICLES and p[1] == "DET"
                   and i + 1 < len(pairs) and pairs[i + 1][1] in ("N", "ADJ"))]
    return _rebuild(out)


def _them_match(s):
    return any(tok == "those" and tag == "DET" for tok, tag in _tagged(s))


def _them_apply(s):
    return _rebuild([("them", tag) if tok == "those" and tag == "DET"
                     else (tok, tag) for tok, tag in _tagged(s)])


_PAST_BASE = {"walked": "walk", "talked": "talk", "played": "play",
              "watched": "watch", "looked": "look", "wanted": "want",
              "needed": "need", "liked": "like", "loved": "love",
              "went": "go", "met": "meet", "saw": "see", "came": "come",
              "took": "take", "said": "say", "made": "make", "got": "get",
              "gave": "give", "found": "find", "told": "tell"}


def _past_match(s):
    return any(tag == "V" and tok in _PAST_BASE for tok, tag in _tagged(s))


def _past_apply(s):
    return _rebuild([(_PAST_BASE[tok], tag) if tag == "V" and tok in _PAST_BASE
                     else (tok, tag) for tok, tag in _tagged(s)])


_DOUBLED_MODALS = {"could", "should"}


def _dbl_modal_match(s):
    pairs = _tagged(s)
    return any(tok in _DOUBLED_MODALS and tag == "MOD"
               and (i == 0 or pairs[i - 1][0] != "might")
               for i, (tok, tag) in enumerate(pairs))


def _dbl_modal_apply(s):
    pairs = _tagged(s)
    out = []
    for i, (tok, tag) in enumerate(pairs):
        if (tok in _DOUBLED_MODALS and tag == "MOD"
                and (i == 0 or pairs[i - 1][0] != "might")):
            out.append(("might", "MOD"))
        out.append((tok, tag))
    return _rebuild(out)


def _pro_drop_match(s):
    return (s.tags is not None and len(s) >= 2 and s.tags[0] == "PRON"
            and s.tags[1] in ("V", "COP", "MOD"))


def _pro_drop_apply(s):
    return _rebuild(_tagged(s)[1:])


def _habitual_match(s):
    pairs = _tagged(s)
    return any(tok in ("is", "are") and tag == "COP" and i + 1 < len(pairs)
               and pairs[i + 1][1] == "V" and pairs[i + 1][0].endswith("ing")
               for i, (tok, tag) in enumerate(pairs))


def _habitual_apply(s):
    pairs = _tagged(s)
    out = []
    for i, (tok, tag) in enumerate(pairs):
        if (tok in ("is", "are") and tag == "COP" and i + 1 < len(pairs)
                and pairs[i + 1][1] == "V" and pairs[i + 1][0].endswith("ing")):
            out.append(("be", "COP"))
        else:
            out.append((tok, tag))
    return _rebuild(out)


_TAG_QUESTION = (("is", "COP"), ("n't", "NEG"), ("it", "PRON"), ("?", "PUNCT"))


def _inv_tag_match(s):
    pairs = _tagged(s)
    return (pairs[-1][0] != "?"
            and any(tag in ("V", "COP") for _, tag in pairs))


def _inv_tag_apply(s):
    return _rebuild(_tagged(s) + list(_TAG_QUESTION))


CATALOG: tuple[RewriteRule, ...] = (
    RewriteRule("possessive_postposition",
                "NP-internal 'X of Y' becomes 'Y 's X'",
                _poss_match, _poss_apply),
    RewriteRule("copula_deletion",
                "drop is/are between subject and predicate",
                _copula_del_match, _copula_del_apply),
    RewriteRule("negative_concord",
                "any-series words become no-series after a negator",
                _neg_concord_match, _neg_concord_apply),
    RewriteRule("zero_article",
                "drop the/a/an before a nominal",
                _zero_article_match, _zero_article_apply),
    RewriteRule("them_demonstrative",
                "demonstrative those becomes them",
                _them_match, _them_apply),
    RewriteRule("unmarked_past",
                "past verb forms revert to the base form",
                _past_match, _past_apply),
    RewriteRule("double_modal",
                "insert might before could/should",
                _dbl_modal_match, _dbl_modal_apply),
    RewriteRule("subject_pro_drop",
                "drop a sentence-initial subject pronoun",
                _pro_drop_match, _pro_drop_apply),
    RewriteRule("habitual_be",
                "is/are before a gerund becomes invariant be",
                _habitual_match, _habitual_apply),
    RewriteRule("invariant_tag",
                "append an invariant tag question",
                _inv_tag_match, _inv_tag_apply),
)

CATALOG_IDS: tuple[str, ...] = tuple(r.rule_id for r in CATALOG)


# ----------------------------------------------------------------- sampling

class RuleStream:
    """Counter-based uniform stream keyed by (seed, sentence index).

    Each rule index addresses an independent Philox counter block, so the
    draw for rule j is the same no matter which rules were consulted before
    it, and sentences can be transformed in any order or in parallel.
    """

    def __init__(self, seed: int, sentence_index: int = 0):
        self.seed = int(seed)
        self.sentence_index = int(sentence_index)

    def uniform(self, rule_index: int) -> float:
        bg = np.random.Philox(key=[self.seed, 0x9E3779B97F4A7C15],
                              counter=[self.sentence_index, rule_index, 0, 0])
        return float(np.random.Generator(bg).random())


def transform_sentence(sentence: TokenSentence, d: DialectFeatureVector,
                       stream: RuleStream):
    """Apply the catalog to one sentence at the dialect's feature rates.

    Returns ``(rewritten sentence, frozenset of fired rule ids)``.  Rules run
    in catalog order; rule ids missing from the dialect's features count as
    rate 0; inapplicable rules are skipped silently.
    """
    rates = _rate_lookup(d)
    current = sentence
    applied = set()
    for j, rule in enumerate(CATALOG):
        rate = rates.get(rule.rule_id, 0.0)
        if rate <= 0.0 or not rule.applicable(current):
            continue
        if stream.uniform(j) < rate:
            current = rule.apply(current)
            applied.add(rule.rule_id)
    return current, frozenset(applied)


def _rate_lookup(d: DialectFeatureVector) -> dict[str, float]:
    return dict(zip(d.feature_ids, d.rates.tolist()))


@dataclass(frozen=True)
class CorpusPair:
    sae: TokenSentence
    dialect: TokenSentence
    applied_rules: frozenset[str]


@dataclass(frozen=True)
class ParallelCorpus:
    """Aligned standard/pseudo-dialect sentence pairs with provenance."""

    pairs: tuple[CorpusPair, ...]
    dialect_id: str
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise ArgumentError("parallel corpus must not be empty")
        known = set(CATALOG_IDS)
        for p in self.pairs:
            if not p.applied_rules <= known:
                raise ArgumentError(
                    f"unknown rule ids {p.applied_rules - known}")

    def sae_sentences(self):
        return [p.sae for p in self.pairs]

    def dialect_sentences(self):
        return [p.dialect for p in self.pairs]


def build_parallel_corpus(sentences, d: DialectFeatureVector,
                          seed: int) -> ParallelCorpus:
    """Transform a sentence sequence into an aligned parallel corpus.

    Deterministic in (sentences, d, seed); pair order preserves input order.
    """
    sentences = list(sentences)
    if not sentences:
        raise ArgumentError("no sentences to transform")
    pairs = []
    for i, s in enumerate(sentences):
        out, applied = transform_sentence(s, d, RuleStream(seed, i))
        pairs.append(CorpusPair(sae=s, dialect=out, applied_rules=applied))
    return ParallelCorpus(pairs=tuple(pairs), dialect_id=d.dialect_id,
                          seed=int(seed))


def corpus_stats(corpus: ParallelCorpus):
    """(percentage of pairs whose sides differ, number of distinct rules)."""
    n_diff = sum(p.sae.tokens != p.dialect.tokens for p in corpus.pairs)
    fired = set().union(*(p.applied_rules for p in corpus.pairs))
    return 100.0 * n_diff / len(corpus.pairs), len(fired)


# ------------------------------------------------------------------ file io

def read_corpus(path):
    """Read one sentence per line, space-separated tokens, optional |tag
    suffix per token."""
    sentences = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks, tags, any_tag = [], [], False
            for piece in line.split(" "):
                if "|" in piece:
                    tok, tag = piece.rsplit("|", 1)
                    any_tag = True
                else:
                    tok, tag = piece, "OTH"
                if not tok:
                    raise ParseError(f"line {lineno}: empty token")
                toks.append(tok)
                tags.append(tag)
            sentences.append(TokenSentence(tuple(toks),
                                           tuple(tags) if any_tag else None))
    if not sentences:
        raise ParseError(f"{path}: no sentences")
    return sentences


def _fmt_sentence(s: TokenSentence) -> str:
    if s.tags is None:
        return " ".join(s.tokens)
    return " ".join(f"{tok}|{tag}" for tok, tag in zip(s.tokens, s.tags))


def write_parallel_corpus(corpus: ParallelCorpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dialect={corpus.dialect_id} seed={corpus.seed}\n")
        for p in corpus.pairs:
            rules = ",".join(sorted(p.applied_rules))
            fh.write(f"{_fmt_sentence(p.sae)}\t{_fmt_sentence(p.dialect)}"
                     f"\t{rules}\n")


def _parse_sentence(text: str) -> TokenSentence:
    toks, tags, any_tag = [], [], False
    for piece in text.split(" "):
        if "|" in piece:
            tok, tag = piece.rsplit("|", 1)
            any_tag = True
        else:
            tok, tag = piece, "OTH"
        toks.append(tok)
        tags.append(tag)
    return TokenSentence(tuple(toks), tuple(tags) if any_tag else None)


def read_parallel_corpus(path) -> ParallelCorpus:
    dialect_id, seed = "unknown", 0
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                for kv in line[1:].split():
                    if kv.startswith("dialect="):
                        dialect_id = kv.split("=", 1)[1]
                    elif kv.startswith("seed="):
                        seed = int(kv.split("=", 1)[1])
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 3 fields")
            sae, dial, rules = parts
            applied = frozenset(r for r in rules.split(",") if r)
            pairs.append(CorpusPair(_parse_sentence(sae),
                                    _parse_sentence(dial), applied))
    return ParallelCorpus(tuple(pairs), dialect_id, seed)


# -------------------------------------------------------------- toy corpora

_TOY_VOCAB = {
    "PRON": ["I", "you", "she", "he", "they", "we"],
    "N": ["teacher", "dog", "girl", "man", "story", "house", "food",
          "tea", "garden", "friend", "letter", "door", "coat", "river"],
    "ADJ": ["happy", "small", "old", "nice", "real", "tired", "warm"],
    "VPAST": ["walked", "played", "watched", "wanted", "looked", "met",
              "saw", "took", "found", "told"],
    "VING": ["walking", "singing", "eating", "reading", "working"],
    "V": ["like", "see", "hear", "keep", "bring"],
    "MOD": ["could", "should"],
    "ADV": ["really", "always"],
}

_TOY_TEMPLATES = (
    ("PRON:PRON", "is:COP", "ADJ:ADJ"),
    ("PRON:PRON", "is:COP", "VING:V", "the:DET", "N:N"),
    ("the:DET", "N:N", "of:P", "the:DET", "N:N", "is:COP", "ADJ:ADJ"),
    ("PRON:PRON", "VPAST:V", "the:DET", "N:N"),
    ("PRON:PRON", "do:V", "n't:NEG", "V:V", "any:DET", "N:N"),
    ("PRON:PRON", "MOD:MOD", "V:V", "the:DET", "N:N"),
    ("the:DET", "N:N", "is:COP", "ADV:ADV", "ADJ:ADJ"),
    ("PRON:PRON", "V:V", "those:DET", "N:N"),
    ("the:DET", "N:N", "of:P", "the:DET", "N:N", "is:COP", "VING:V"),
    ("they:PRON", "are:COP", "not:NEG", "ADJ:ADJ"),
)


def toy_corpus(n_sentences: int, seed: int):
    """Seeded template-generated tagged sentences covering every rule."""
    if n_sentences < 1:
        raise ArgumentError("need at least one sentence")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_sentences):
        template = _TOY_TEMPLATES[rng.integers(0, len(_TOY_TEMPLATES))]
        toks, tags = [], []
        for slot in template:
            word, tag = slot.split(":")
            if word.isupper():
                choices = _TOY_VOCAB[word]
                word = choices[rng.integers(0, len(choices))]
            toks.append(word)
            tags.append(tag)
        out.append(TokenSentence(tuple(toks), tuple(tags)))
    return out
