"""Dialect feature vectors and the typology metrics defined over them.

A dialect is represented by a vector of feature application rates in [0, 1],
one entry per morphosyntactic feature.  Rates are usually derived from expert
attestation judgments on the eWAVE A/B/C/D scale.  This module provides the
attestation-to-rate mapping, a loader for the tab-separated vector file
format, the Manhattan distance, the multi-source coverage metric, and
exhaustive source-set selection over both.

All functions are pure and operate on immutable values; they are safe for
concurrent read-only use.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources

import numpy as np

from .errors import (ArgumentError, DegenerateTargetError, ParseError,
                     SchemaError, ValidationError)


class AttestationCode(Enum):
    """Expert judgment of how pervasively a dialect uses a feature."""

    OBLIGATORY = "A"
    NEITHER_PERVASIVE_NOR_RARE = "B"
    RARE = "C"
    ABSENT_OR_UNKNOWN = "D"


_ATTESTATION_RATE = {
    AttestationCode.OBLIGATORY: 1.0,
    AttestationCode.NEITHER_PERVASIVE_NOR_RARE: 0.6,
    AttestationCode.RARE: 0.3,
    AttestationCode.ABSENT_OR_UNKNOWN: 0.0,
}

# file letters: A/B/C as themselves, D/X/? all mean absent-or-unknown
_LETTER_CODE = {
    "A": AttestationCode.OBLIGATORY,
    "B": AttestationCode.NEITHER_PERVASIVE_NOR_RARE,
    "C": AttestationCode.RARE,
    "D": AttestationCode.ABSENT_OR_UNKNOWN,
    "X": AttestationCode.ABSENT_OR_UNKNOWN,
    "?": AttestationCode.ABSENT_OR_UNKNOWN,
}


def rate_from_attestation(code: AttestationCode) -> float:
    """Map an attestation level to a feature application rate.

    Obligatory features apply at rate 1.0, features neither pervasive nor
    rare at 0.6, rare features at 0.3, and absent-or-unknown features at 0.0.
    """
    return _ATTESTATION_RATE[code]


@dataclass(frozen=True)
class DialectFeatureVector:
    """Per-dialect vector of feature application rates.

    Two vectors are comparable only when their ``feature_ids`` sequences are
    identical (same features, same order).
    """

    dialect_id: str
    feature_ids: tuple[str, ...]
    rates: np.ndarray = field(repr=False)

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=np.float64)
        rates.flags.writeable = False
        object.__setattr__(self, "rates", rates)
        if rates.ndim != 1 or len(rates) != len(self.feature_ids):
            raise ValidationError(
                f"{self.dialect_id}: {len(self.feature_ids)} feature ids vs "
                f"rates of shape {rates.shape}")
        if len(set(self.feature_ids)) != len(self.feature_ids):
            raise ValidationError(f"{self.dialect_id}: duplicate feature ids")
        if rates.size and (rates.min() < 0.0 or rates.max() > 1.0):
            bad = int(np.argmax((rates < 0.0) | (rates > 1.0)))
            raise ValidationError(
                f"{self.dialect_id}: rate {rates[bad]} for feature "
                f"{self.feature_ids[bad]} outside [0, 1]")

    def comparable_with(self, other: "DialectFeatureVector") -> bool:
        return self.feature_ids == other.feature_ids

    @property
    def n_features(self) -> int:
        return len(self.feature_ids)

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.rates))


def _require_comparable(*vectors: DialectFeatureVector):
    first = vectors[0]
    for v in vectors[1:]:
        if not first.comparable_with(v):
            raise SchemaError(
                f"incomparable feature sets: {first.dialect_id} vs "
                f"{v.dialect_id}")


@dataclass(frozen=True)
class SourceSet:
    """A set of source dialects sharing one feature universe."""

    dialects: tuple[DialectFeatureVector, ...]

    def __post_init__(self):
        if not self.dialects:
            raise ArgumentError("source set must contain at least one dialect")
        ordered = tuple(sorted(self.dialects, key=lambda d: d.dialect_id))
        object.__setattr__(self, "dialects", ordered)
        _require_comparable(*self.dialects)

    @property
    def dialect_ids(self) -> tuple[str, ...]:
        return tuple(d.dialect_id for d in self.dialects)

    def rate_sum(self) -> np.ndarray:
        return np.sum([d.rates for d in self.dialects], axis=0)


def load_feature_vectors(path) -> dict[str, DialectFeatureVector]:
    """Load dialect feature vectors from a tab-separated text file.

    Format: an optional header line ``#features=<F>`` followed by one record
    per line, ``dialect_id<TAB>feature_id<TAB>value`` where value is either an
    attestation letter (A/B/C, with D, X and ? all meaning absent-or-unknown)
    or a decimal rate in [0, 1].  All dialects must cover the same feature
    set; the returned vectors share one feature_id ordering (first dialect's
    file order).
    """
    declared_f = None
    by_dialect: dict[str, dict[str, float]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                if line.startswith("#features="):
                    try:
                        declared_f = int(line.split("=", 1)[1])
                    except ValueError:
                        raise ParseError(f"line {lineno}: bad feature count "
                                         f"header {line!r}") from None
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"line {lineno}: expected 3 tab-separated fields, "
                    f"got {len(parts)}")
            dialect_id, feature_id, value = parts
            letter = value.strip().upper()
            if letter in _LETTER_CODE:
                rate = rate_from_attestation(_LETTER_CODE[letter])
            else:
                try:
                    rate = float(value)
                except ValueError:
                    raise ParseError(
                        f"line {lineno}: value {value!r} is neither an "
                        f"attestation letter nor a number") from None
                if not 0.0 <= rate <= 1.0:
                    raise ValidationError(
                        f"line {lineno}: rate {rate} outside [0, 1]")
            feats = by_dialect.setdefault(dialect_id, {})
            if feature_id in feats:
                raise ParseError(
                    f"line {lineno}: duplicate feature {feature_id!r} for "
                    f"dialect {dialect_id!r}")
            feats[feature_id] = rate
            if len(by_dialect) == 1:
                order.append(feature_id)
    if not by_dialect:
        raise ParseError(f"{path}: no records")
    universe = set(order)
    for dialect_id, feats in by_dialect.items():
        if set(feats) != universe:
            missing = universe.symmetric_difference(feats)
            raise SchemaError(
                f"dialect {dialect_id!r} does not share the feature universe "
                f"(mismatch on {sorted(missing)[:5]}...)")
    if declared_f is not None and declared_f != len(order):
        raise SchemaError(
            f"header declares {declared_f} features, file has {len(order)}")
    feature_ids = tuple(order)
    return {
        dialect_id: DialectFeatureVector(
            dialect_id=dialect_id,
            feature_ids=feature_ids,
            rates=np.array([feats[f] for f in feature_ids]))
        for dialect_id, feats in by_dialect.items()
    }


def bundled_vectors_path():
    """Path of the attestation vector file shipped with the package."""
    return resources.files("hyperlora").joinpath("data/ewave_attestation.tsv")


def manhattan_distance(a: DialectFeatureVector, b: DialectFeatureVector,
                       normalized: bool = False) -> float:
    """L1 distance between two comparable feature vectors.

    With ``normalized=True`` the sum is divided by the feature count, giving
    a per-feature average in [0, 1].
    """
    _require_comparable(a, b)
    dist = float(np.abs(a.rates - b.rates).sum())
    return dist / a.n_features if normalized else dist


def mean_normalized_l1(sources: SourceSet,
                       target: DialectFeatureVector) -> float:
    """Mean over sources of the normalized Manhattan distance to the target.

    This is the aggregate reported alongside coverage when scoring a source
    set against a prospective target dialect.
    """
    _require_comparable(target, *sources.dialects)
    return float(np.mean([manhattan_distance(s, target, normalized=True)
                          for s in sources.dialects]))


def coverage(sources: SourceSet, target: DialectFeatureVector) -> float:
    """Fraction of the target's weighted features covered by the sources.

    Computes ``1 - ||[sum_s d_s - d_t]_-||_1 / ||d_t||_1`` where ``[.]_-``
    keeps only negative components.  Equals 1 exactly when the summed source
    rates dominate the target componentwise; decreases by the target mass the
    sources fail to reach.
    """
    _require_comparable(target, *sources.dialects)
    target_mass = float(target.rates.sum())
    if target_mass <= 0.0:
        raise DegenerateTargetError(
            f"target {target.dialect_id!r} has zero feature mass")
    shortfall = np.minimum(sources.rate_sum() - target.rates, 0.0)
    value = 1.0 - float(np.abs(shortfall).sum()) / target_mass
    assert value <= 1.0 + 1e-12
    return value


@dataclass(frozen=True)
class SubsetScore:
    """One candidate source set with its typology metrics."""

    sources: SourceSet
    l1: float
    coverage: float
    on_frontier: bool = False

    @property
    def dialect_ids(self) -> tuple[str, ...]:
        return self.sources.dialect_ids


def _pareto_flags(scores: list[tuple[float, float]]) -> list[bool]:
    # frontier of (minimize l1, maximize coverage)
    flags = []
    for i, (l1_i, cov_i) in enumerate(scores):
        dominated = any(
            (l1_j <= l1_i and cov_j >= cov_i)
            and (l1_j < l1_i or cov_j > cov_i)
            for j, (l1_j, cov_j) in enumerate(scores) if j != i)
        flags.append(not dominated)
    return flags


def select_sources(candidates, target: DialectFeatureVector,
                   k: int) -> list[SubsetScore]:
    """Score every k-subset of candidates against the target.

    Enumerates all C(n, k) subsets, computes the averaged normalized L1 and
    the coverage for each, and returns them ranked: Pareto-optimal subsets
    first (no other subset has both lower L1 and higher coverage), then
    dominated ones, each group sorted by (L1 ascending, coverage descending)
    with ties broken lexicographically on dialect ids.  The ranking is
    invariant to the order candidates are supplied in.
    """
    candidates = list(candidates)
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if k > len(candidates):
        raise ArgumentError(
            f"k={k} exceeds the {len(candidates)} candidates")
    if any(c.dialect_id == target.dialect_id for c in candidates):
        raise ArgumentError("candidates must exclude the target dialect")
    _require_comparable(target, *candidates)
    candidates.sort(key=lambda d: d.dialect_id)
    subsets = [SourceSet(tuple(combo))
               for combo in itertools.combinations(candidates, k)]
    metrics = [(mean_normalized_l1(s, target), coverage(s, target))
               for s in subsets]
    flags = _pareto_flags(metrics)
    scored = [SubsetScore(s, l1, cov, flag)
              for s, (l1, cov), flag in zip(subsets, metrics, flags)]
    scored.sort(key=lambda r: (not r.on_frontier, r.l1, -r.coverage,
                               r.dialect_ids))
    return scored
