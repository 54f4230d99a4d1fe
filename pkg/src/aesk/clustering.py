"""Semantic grouping of PTs: PCA reduction, density clustering, labels.

Everything here is deterministic by construction: PCA components carry a
fixed sign convention, terms are stably sorted before clustering, and
the density scan visits points in that order. Determinism is a hard
requirement because artifacts are content-addressed downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .embeddings import EmbeddingStore, TermEmbedding, cosine
from .errors import DegenerateInput, DimensionMismatch, EmptyCluster, LabelerFailure
from .terms import canonical_term

NOISE = -1

# An external service can supply labels; it gets the member PT names and
# the store, and returns one display string.
ClusterLabeler = Callable[[Sequence[str], EmbeddingStore], str]


@dataclass(frozen=True)
class ReducedMatrix:
    terms: tuple[str, ...]
    coords: np.ndarray  # (n_terms, k), mean-centered projections
    explained_variance_ratio: tuple[float, ...]

    def __post_init__(self):
        self.coords.setflags(write=False)


@dataclass(frozen=True)
class ClusterParams:
    min_cluster_size: int = 3
    epsilon: float | None = None  # auto via k-distance knee when None


@dataclass(frozen=True)
class ClusterAssignment:
    pt_name: str
    cluster_id: int  # NOISE for ungrouped terms
    cluster_label: str = ""

    @property
    def is_noise(self) -> bool:
        return self.cluster_id == NOISE


@dataclass(frozen=True)
class MapCoordinates:
    pt_name: str
    x: float
    y: float


@dataclass(frozen=True)
class LabelingResult:
    assignments: tuple[ClusterAssignment, ...]
    warnings: tuple[str, ...] = ()


def _embedding_matrix(embeddings: Sequence[TermEmbedding]) -> np.ndarray:
    dims = {e.dimension for e in embeddings}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding dimensions: {sorted(dims)}")
    return np.asarray([e.vector for e in embeddings], dtype=float)


def pca_reduce(
    embeddings: Sequence[TermEmbedding], k: int | float
) -> ReducedMatrix:
    """Project embeddings onto their top principal axes.

    ``k`` is either a component count or a variance target in (0, 1],
    in which case the smallest count reaching the target is used. Sign
    convention: the largest-magnitude loading of each component is made
    positive, so repeated runs agree bit-for-bit.
    """
    if len(embeddings) < 2:
        raise ValueError("PCA needs at least 2 embeddings")
    x = _embedding_matrix(embeddings)
    n, d = x.shape
    centered = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)

    scale = max(1.0, float(np.abs(x).max()))
    if s.size == 0 or float(s[0]) <= 1e-12 * scale:
        raise DegenerateInput("all embeddings are identical; no variance to project")

    total = float(np.sum(s * s))
    ratios = (s * s) / total

    if isinstance(k, bool) or (not isinstance(k, int) and not isinstance(k, float)):
        raise ValueError(f"k must be an int count or a float variance target, got {k!r}")
    if isinstance(k, int):
        if not 1 <= k <= min(d, n):
            raise ValueError(f"k={k} outside [1, {min(d, n)}]")
        keep = k
    else:
        if not 0 < k <= 1:
            raise ValueError(f"variance target {k} outside (0, 1]")
        cumulative = np.cumsum(ratios)
        keep = int(np.searchsorted(cumulative, k - 1e-12) + 1)
        keep = min(keep, len(s))

    vt = vt.copy()
    u = u.copy()
    for i in range(keep):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
            u[:, i] = -u[:, i]
    coords = u[:, :keep] * s[:keep]

    return ReducedMatrix(
        terms=tuple(e.term for e in embeddings),
        coords=coords,
        explained_variance_ratio=tuple(float(r) for r in ratios[:keep]),
    )


def k_distance_epsilon(dist: np.ndarray, k: int) -> float:
    """Auto neighborhood radius from the sorted k-distance curve.

    Uses the knee of the ascending k-th-nearest-neighbor distances: the
    index farthest from the chord joining the curve's endpoints.
    """
    n = dist.shape[0]
    kth = np.sort(dist, axis=1)[:, min(k - 1, n - 1)]  # includes self at 0
    curve = np.sort(kth)
    if curve[-1] <= 0:
        return float(np.finfo(float).tiny)
    x0, y0 = 0.0, float(curve[0])
    x1, y1 = float(n - 1), float(curve[-1])
    span = math.hypot(x1 - x0, y1 - y0)
    if span == 0:
        return float(curve[0]) if curve[0] > 0 else float(np.finfo(float).tiny)
    xs = np.arange(n, dtype=float)
    offsets = np.abs((y1 - y0) * xs - (x1 - x0) * curve + x1 * y0 - y1 * x0) / span
    eps = float(curve[int(np.argmax(offsets))])
    if eps <= 0:
        positive = curve[curve > 0]
        eps = float(positive[0]) if positive.size else float(np.finfo(float).tiny)
    return eps


def cluster(reduced: ReducedMatrix, params: ClusterParams) -> list[ClusterAssignment]:
    """Density clustering with explicit noise flagging (DBSCAN semantics).

    A point is core when its epsilon-ball holds at least
    ``min_cluster_size`` points (itself included); clusters grow from
    cores, border points join the first cluster that reaches them, and
    everything else is flagged NOISE. Terms are visited in stable
    canonical order so cluster ids are reproducible.
    """
    n = len(reduced.terms)
    if n < 2:
        raise ValueError("clustering needs at least 2 terms")
    if params.min_cluster_size > n:
        return [ClusterAssignment(t, NOISE) for t in reduced.terms]

    order = sorted(range(n), key=lambda i: canonical_term(reduced.terms[i]))
    coords = reduced.coords[order]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))

    eps = params.epsilon if params.epsilon is not None else k_distance_epsilon(
        dist, params.min_cluster_size
    )

    within = dist <= eps
    neighbor_counts = within.sum(axis=1)
    core = neighbor_counts >= params.min_cluster_size

    labels = np.full(n, NOISE, dtype=int)
    next_id = 0
    for start in range(n):
        if labels[start] != NOISE or not core[start]:
            continue
        labels[start] = next_id
        queue = [start]
        while queue:
            p = queue.pop(0)
            for q in np.flatnonzero(within[p]):
                if labels[q] == NOISE:
                    labels[q] = next_id
                    if core[q]:
                        queue.append(int(q))
        next_id += 1

    by_input = np.empty(n, dtype=int)
    by_input[order] = labels
    return [ClusterAssignment(t, int(by_input[i])) for i, t in enumerate(reduced.terms)]


def medoid_term(members: Sequence[str], store: EmbeddingStore) -> str:
    """Member with the highest mean cosine to its co-members.

    Ties break lexicographically on the canonical name; a singleton is
    its own medoid.
    """
    if not members:
        raise EmptyCluster("medoid of an empty member list")
    vectors = {m: store.resolve(m) for m in members}
    best_term = members[0]
    best_key: tuple[float, str] | None = None
    for m in members:
        others = [cosine(vectors[m], vectors[o]) for o in members if o != m]
        mean = sum(others) / len(others) if others else 0.0
        key = (-mean, canonical_term(m))
        if best_key is None or key < best_key:
            best_term, best_key = m, key
    return best_term


def label_clusters(
    assignments: Sequence[ClusterAssignment],
    store: EmbeddingStore,
    labeler: ClusterLabeler | None = None,
) -> LabelingResult:
    """Attach display labels to clusters; membership is never changed.

    The default labeler names each cluster after its medoid PT. When an
    external labeler is supplied and fails for a cluster, the medoid
    label is used instead and the fallback is recorded as a warning.
    """
    members: dict[int, list[str]] = {}
    for a in assignments:
        if not a.is_noise:
            members.setdefault(a.cluster_id, []).append(a.pt_name)

    labels: dict[int, str] = {}
    warnings: list[str] = []
    for cid in sorted(members):
        medoid = medoid_term(members[cid], store)
        if labeler is None:
            labels[cid] = medoid
            continue
        try:
            label = labeler(tuple(members[cid]), store)
            if not label or not label.strip():
                raise LabelerFailure(f"labeler returned an empty label for cluster {cid}")
            labels[cid] = label.strip()
        except Exception as exc:  # external code: any failure falls back
            warnings.append(f"cluster {cid}: labeler failed ({exc}); using medoid {medoid!r}")
            labels[cid] = medoid

    labeled = tuple(
        a if a.is_noise else replace(a, cluster_label=labels[a.cluster_id])
        for a in assignments
    )
    return LabelingResult(labeled, tuple(warnings))


def project_2d(embeddings: Sequence[TermEmbedding]) -> list[MapCoordinates]:
    """First two principal components, max-abs rescaled to [-1, 1].

    Rank-1 inputs project to a line (all y = 0).
    """
    if len(embeddings) < 3:
        raise ValueError("2-D projection needs at least 3 terms")
    k = min(2, min(e.dimension for e in embeddings))
    reduced = pca_reduce(embeddings, k)
    coords = np.zeros((len(embeddings), 2))
    coords[:, : reduced.coords.shape[1]] = reduced.coords
    for axis in range(2):
        peak = np.abs(coords[:, axis]).max()
        if peak > 0:
            coords[:, axis] /= peak
    return [
        MapCoordinates(term, float(coords[i, 0]), float(coords[i, 1]))
        for i, term in enumerate(reduced.terms)
    ]
