"""Term embedding store, similarity, and indication expectedness.

The store is the semantic layer over the PT vocabulary: each term maps
to one fixed-dimension vector, loaded from a file or produced by the
deterministic fallback encoder. All scoring below is plain cosine
geometry over those vectors.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .errors import DimensionMismatch, ParseError, UnknownTerm, ZeroVector
from .terms import canonical_term, display_term

PROVENANCE_FILE = "external_file"
PROVENANCE_FALLBACK = "fallback_encoder"


@dataclass(frozen=True)
class TermEmbedding:
    term: str
    vector: tuple[float, ...]

    def __post_init__(self):
        if not self.vector:
            raise ValueError(f"{self.term!r}: empty vector")
        if not all(math.isfinite(v) for v in self.vector):
            raise ValueError(f"{self.term!r}: vector has non-finite components")
        if all(v == 0.0 for v in self.vector):
            raise ValueError(f"{self.term!r}: zero vector")

    @property
    def dimension(self) -> int:
        return len(self.vector)


@dataclass(frozen=True)
class ExpectednessScore:
    pt_name: str
    score: float


def fallback_encode(term: str, dimension: int, seed: int = 0) -> TermEmbedding:
    """Deterministic character-trigram hash embedding.

    Trigrams of the canonicalized term (with ``#`` boundary markers) are
    hashed into ``dimension`` signed buckets and the accumulator is unit
    normalized. Purely a function of (term, dimension, seed), so it is
    stable across processes and platforms. Terms sharing substrings
    share trigram buckets and therefore score higher cosine than
    unrelated terms.
    """
    if dimension < 8:
        raise ValueError("fallback encoder needs dimension >= 8")
    canon = canonical_term(term)
    if not canon:
        raise ValueError("cannot encode an empty term")
    padded = f"#{canon}#"
    acc = [0.0] * dimension
    for i in range(len(padded) - 2):
        digest = hashlib.blake2b(
            f"{seed}:{padded[i:i + 3]}".encode(), digest_size=8
        ).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if (h >> 32) & 1 else -1.0
        acc[h % dimension] += sign
    norm = math.sqrt(sum(v * v for v in acc))
    if norm == 0.0:
        # Signed buckets can cancel exactly for very short terms; fall
        # back to a one-hot at the whole-term bucket so the output is
        # never the zero vector.
        digest = hashlib.blake2b(f"{seed}:{canon}".encode(), digest_size=8).digest()
        acc[int.from_bytes(digest, "big") % dimension] = 1.0
        norm = 1.0
    return TermEmbedding(display_term(term), tuple(v / norm for v in acc))


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable term -> vector map with a unified lookup rule.

    Lookup keys use the same canonicalization as the incidence tables.
    ``unknown_term_policy`` decides what happens for absent terms in an
    external store: ``error`` raises, ``fallback`` encodes on the fly.
    A pure-fallback store encodes every term.
    """

    dimension: int
    entries: Mapping[str, TermEmbedding]
    provenance: str
    fallback_seed: int = 0
    unknown_term_policy: str = "error"

    @classmethod
    def from_file(
        cls,
        path: str,
        unknown_term_policy: str = "error",
        fallback_seed: int = 0,
    ) -> "EmbeddingStore":
        """Load `term<TAB>v1 v2 ... vD` records; '#' lines are comments."""
        entries: dict[str, TermEmbedding] = {}
        dimension: int | None = None
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ParseError("expected term<TAB>values", lineno)
                term, values_part = parts
                if not term.strip():
                    raise ParseError("empty term", lineno)
                try:
                    values = tuple(float(v) for v in values_part.split())
                except ValueError:
                    raise ParseError("non-numeric vector component", lineno) from None
                if not values:
                    raise ParseError("empty vector", lineno)
                if dimension is None:
                    dimension = len(values)
                elif len(values) != dimension:
                    raise DimensionMismatch(
                        f"line {lineno}: expected {dimension} components, got {len(values)}"
                    )
                key = canonical_term(term)
                if key in entries:
                    raise ParseError(f"duplicate term {display_term(term)!r}", lineno)
                try:
                    entries[key] = TermEmbedding(display_term(term), values)
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from None
        if dimension is None:
            raise ParseError("no embedding records in file")
        return cls(dimension, entries, PROVENANCE_FILE, fallback_seed, unknown_term_policy)

    @classmethod
    def fallback(cls, dimension: int = 32, seed: int = 0) -> "EmbeddingStore":
        return cls(dimension, {}, PROVENANCE_FALLBACK, seed, "fallback")

    def lookup(self, term: str) -> TermEmbedding | None:
        return self.entries.get(canonical_term(term))

    def resolve(self, term: str) -> TermEmbedding:
        hit = self.lookup(term)
        if hit is not None:
            return hit
        if self.provenance == PROVENANCE_FALLBACK or self.unknown_term_policy == "fallback":
            return fallback_encode(term, self.dimension, self.fallback_seed)
        raise UnknownTerm(
            f"{display_term(term)!r} not in embedding store and fallback disabled"
        )

    def content_digest(self) -> str:
        """Stable digest of the store content, for analysis addressing."""
        h = hashlib.sha256()
        h.update(f"{self.provenance}|{self.dimension}|{self.fallback_seed}\n".encode())
        for key in sorted(self.entries):
            vec = self.entries[key].vector
            h.update(key.encode() + b"\t" + " ".join(repr(v) for v in vec).encode() + b"\n")
        return h.hexdigest()


def cosine(a: TermEmbedding, b: TermEmbedding) -> float:
    """Cosine similarity, clamped to [-1, 1] against rounding."""
    return _cosine(a.vector, b.vector)


def _cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise DimensionMismatch(f"cosine over dimensions {len(u)} and {len(v)}")
    nu = math.sqrt(sum(x * x for x in u))
    nv = math.sqrt(sum(x * x for x in v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    dot = sum(x * y for x, y in zip(u, v))
    return max(-1.0, min(1.0, dot / (nu * nv)))


def population_vector(
    population_descriptors: Sequence[str], store: EmbeddingStore
) -> tuple[float, ...]:
    """Unit-normalized mean of the descriptor embeddings."""
    if not population_descriptors:
        raise ValueError("at least one population descriptor is required")
    vectors = [store.resolve(term).vector for term in population_descriptors]
    mean = [sum(col) / len(vectors) for col in zip(*vectors)]
    norm = math.sqrt(sum(v * v for v in mean))
    if norm == 0.0:
        raise ZeroVector("population descriptors cancel to the zero vector")
    return tuple(v / norm for v in mean)


def expectedness(
    population_descriptors: Sequence[str],
    pts: Sequence[str],
    store: EmbeddingStore,
) -> list[ExpectednessScore]:
    """Cosine of each PT embedding against the population vector.

    Output order matches the input ``pts`` order.
    """
    pop = population_vector(population_descriptors, store)
    return [
        ExpectednessScore(display_term(pt), _cosine(pop, store.resolve(pt).vector))
        for pt in pts
    ]
