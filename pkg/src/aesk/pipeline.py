"""End-to-end analysis shared by the CLI and the HTTP service.

One code path turns an incidence table plus a RunConfig into review
artifacts, so both entry points emit byte-identical JSON for the same
inputs. Analyses are content-addressed over (table, store, analysis
config), which makes recomputation caching and request deduplication
safe.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Any

from .clustering import (
    ClusterAssignment,
    ClusterLabeler,
    ClusterParams,
    LabelingResult,
    MapCoordinates,
    NOISE,
    cluster,
    label_clusters,
    medoid_term,
    pca_reduce,
    project_2d,
)
from .config import RunConfig, config_snapshot
from .embeddings import EmbeddingStore, ExpectednessScore, expectedness
from .ingest import IncidenceTable, fetch_study, load_lexicon, merge_serious_other, table_to_dict
from .signals import PriorConfig, PtSignal, cluster_ebgm, ebgm
from .visuals import ReviewArtifacts, build_evd, build_map


@dataclass(frozen=True)
class AnalysisResult:
    artifacts: ReviewArtifacts
    signals: tuple[PtSignal, ...]
    report: dict[str, Any]


def build_store(cfg: RunConfig) -> EmbeddingStore:
    if cfg.embedding_path:
        return EmbeddingStore.from_file(
            cfg.embedding_path,
            unknown_term_policy=cfg.unknown_term_policy,
            fallback_seed=cfg.fallback_seed,
        )
    return EmbeddingStore.fallback(cfg.embedding_dimension, cfg.fallback_seed)


def load_table(study_id: str, cfg: RunConfig) -> IncidenceTable:
    record = fetch_study(study_id, endpoint=cfg.endpoint, cache_dir=cfg.cache_dir)
    lexicon = load_lexicon(cfg.lexicon) if cfg.lexicon else None
    return merge_serious_other(record, lexicon)


def compute_analysis_id(table: IncidenceTable, cfg: RunConfig, store: EmbeddingStore) -> str:
    """Content address of an analysis: same inputs and config, same id."""
    payload = {
        "table": table_to_dict(table),
        "config": config_snapshot(cfg),
        "store": store.content_digest(),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _cluster_report(
    labeling: LabelingResult, store: EmbeddingStore
) -> dict[str, Any]:
    members: dict[int, list[str]] = {}
    labels: dict[int, str] = {}
    for a in labeling.assignments:
        if a.is_noise:
            continue
        members.setdefault(a.cluster_id, []).append(a.pt_name)
        labels[a.cluster_id] = a.cluster_label
    return {
        "clusters": [
            {
                "cluster_id": cid,
                "label": labels[cid],
                "medoid": medoid_term(members[cid], store),
                "members": members[cid],
            }
            for cid in sorted(members)
        ],
        "ungrouped_terms": [a.pt_name for a in labeling.assignments if a.is_noise],
        "labeler_warnings": list(labeling.warnings),
    }


def run_analysis(
    table: IncidenceTable,
    cfg: RunConfig,
    store: EmbeddingStore | None = None,
    labeler: ClusterLabeler | None = None,
) -> AnalysisResult:
    """Cluster, score, and assemble review artifacts for one study."""
    if store is None:
        store = build_store(cfg)

    pts = table.pt_names()
    embeddings = [store.resolve(pt) for pt in pts]

    if len(pts) >= 2:
        reduced = pca_reduce(embeddings, cfg.variance_target)
        cap = min(cfg.max_components, len(embeddings), embeddings[0].dimension)
        if len(reduced.explained_variance_ratio) > cap:
            reduced = pca_reduce(embeddings, cap)
        assignments = cluster(
            reduced, ClusterParams(cfg.min_cluster_size, cfg.epsilon)
        )
    else:
        assignments = [ClusterAssignment(pt, NOISE) for pt in pts]

    if len(pts) >= 3:
        coords = project_2d(embeddings)
    else:
        coords = [MapCoordinates(pt, 0.0, 0.0) for pt in pts]

    labeling = label_clusters(assignments, store, labeler)

    prior = PriorConfig(cfg.alpha, cfg.beta)
    signals = ebgm(table, prior, cfg.levels)
    cluster_signals = cluster_ebgm(signals, labeling.assignments)

    if cfg.descriptors and pts:
        scores = expectedness(cfg.descriptors, pts, store)
    else:
        # No population descriptors configured: neutral x-axis.
        scores = [ExpectednessScore(pt, 0.0) for pt in pts]

    map_points = build_map(table, coords, labeling.assignments)
    evd_points = build_evd(
        signals, scores, labeling.assignments, include_noise=cfg.evd_include_noise
    )

    artifacts = ReviewArtifacts(
        study_id=table.study_id,
        arms=table.arms,
        map_points=tuple(map_points),
        evd_points=tuple(evd_points),
        cluster_signals=tuple(cluster_signals),
        ungrouped_terms=tuple(a.pt_name for a in labeling.assignments if a.is_noise),
        config_snapshot=config_snapshot(cfg),
    )
    report = _cluster_report(labeling, store)
    if table.dropped_terms:
        report["dropped_terms"] = list(table.dropped_terms)
    return AnalysisResult(artifacts, tuple(signals), report)
