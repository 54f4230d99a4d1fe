"""Review artifact assembly: semantic-map and EVD plot datasets.

The two datasets are pure joins over upstream results; no statistic is
recomputed here, so plotted values are bit-identical to the signal
module's output. Serialization is deterministic (sorted keys, repr
floats) because artifacts are content-addressed and diffed byte-wise.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Any, Sequence

from .clustering import ClusterAssignment, MapCoordinates
from .embeddings import ExpectednessScore
from .errors import KeyMismatch, SchemaVersionError
from .ingest import Arm, IncidenceTable
from .signals import ClusterSignal, PtSignal
from .terms import canonical_term

SCHEMA_VERSION = 1

# Radius encoding is area-proportional: perceived dot area tracks the
# proportion of subjects affected. Zero incidence still draws at r_min
# so absence in one arm stays visible next to presence in another.
R_MIN = 3.0
R_MAX = 18.0


@dataclass(frozen=True)
class MapPoint:
    pt_name: str
    x: float
    y: float
    arm_id: str
    incidence: float
    radius: float
    cluster_id: int
    cluster_label: str
    is_noise: bool


@dataclass(frozen=True)
class EvdPoint:
    pt_name: str
    arm_id: str
    expectedness: float
    ebgm: float
    incidence: float
    cluster_id: int
    cluster_label: str


@dataclass(frozen=True)
class ReviewArtifacts:
    study_id: str
    arms: tuple[Arm, ...]
    map_points: tuple[MapPoint, ...]
    evd_points: tuple[EvdPoint, ...]
    cluster_signals: tuple[ClusterSignal, ...]
    ungrouped_terms: tuple[str, ...]
    config_snapshot: dict[str, Any]


def radius_for(incidence: float, r_min: float = R_MIN, r_max: float = R_MAX) -> float:
    return r_min + (r_max - r_min) * math.sqrt(incidence)


def _keyset(names) -> frozenset[str]:
    return frozenset(canonical_term(n) for n in names)


def build_map(
    table: IncidenceTable,
    coords: Sequence[MapCoordinates],
    assignments: Sequence[ClusterAssignment],
) -> list[MapPoint]:
    """One point per (PT, arm), with incidence-scaled radii."""
    pts = _keyset(r.pt_name for r in table.rows)
    if pts != _keyset(c.pt_name for c in coords):
        raise KeyMismatch("map coordinates not keyed to the incidence table's PT set")
    if pts != _keyset(a.pt_name for a in assignments):
        raise KeyMismatch("cluster assignments not keyed to the incidence table's PT set")

    coord_by_pt = {canonical_term(c.pt_name): c for c in coords}
    assign_by_pt = {canonical_term(a.pt_name): a for a in assignments}

    points: list[MapPoint] = []
    for row in table.rows:
        key = canonical_term(row.pt_name)
        c = coord_by_pt[key]
        a = assign_by_pt[key]
        for count in row.counts:
            incidence = count.n_affected / count.n_at_risk
            points.append(
                MapPoint(
                    pt_name=row.pt_name,
                    x=c.x,
                    y=c.y,
                    arm_id=count.arm_id,
                    incidence=incidence,
                    radius=radius_for(incidence),
                    cluster_id=a.cluster_id,
                    cluster_label=a.cluster_label,
                    is_noise=a.is_noise,
                )
            )
    return points


def build_evd(
    signals: Sequence[PtSignal],
    scores: Sequence[ExpectednessScore],
    assignments: Sequence[ClusterAssignment],
    include_noise: bool = False,
) -> list[EvdPoint]:
    """Join expectedness (x) with EBGM (y) per clustered PT and arm.

    Ordered by (cluster, term, arm); EBGM values are copied from the
    signals verbatim.
    """
    signal_pts = _keyset(s.pt_name for s in signals)
    if signal_pts != _keyset(s.pt_name for s in scores):
        raise KeyMismatch("expectedness scores not keyed to the signals' PT set")
    if signal_pts != _keyset(a.pt_name for a in assignments):
        raise KeyMismatch("cluster assignments not keyed to the signals' PT set")

    score_by_pt = {canonical_term(s.pt_name): s.score for s in scores}
    assign_by_pt = {canonical_term(a.pt_name): a for a in assignments}
    at_risk_incidence = {
        (canonical_term(s.pt_name), s.arm_id): s.n / s.at_risk for s in signals
    }

    arm_order: list[str] = []
    for s in signals:
        if s.arm_id not in arm_order:
            arm_order.append(s.arm_id)
    arm_rank = {arm: i for i, arm in enumerate(arm_order)}

    selected = [
        s
        for s in signals
        if include_noise or not assign_by_pt[canonical_term(s.pt_name)].is_noise
    ]
    selected.sort(
        key=lambda s: (
            assign_by_pt[canonical_term(s.pt_name)].cluster_id,
            canonical_term(s.pt_name),
            arm_rank[s.arm_id],
        )
    )
    return [
        EvdPoint(
            pt_name=s.pt_name,
            arm_id=s.arm_id,
            expectedness=score_by_pt[canonical_term(s.pt_name)],
            ebgm=s.ebgm,
            incidence=at_risk_incidence[(canonical_term(s.pt_name), s.arm_id)],
            cluster_id=assign_by_pt[canonical_term(s.pt_name)].cluster_id,
            cluster_label=assign_by_pt[canonical_term(s.pt_name)].cluster_label,
        )
        for s in selected
    ]


# ---------------------------------------------------------------------------
# Artifacts file
# ---------------------------------------------------------------------------


def artifacts_to_dict(artifacts: ReviewArtifacts) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "study_id": artifacts.study_id,
        "arms": [
            {"arm_id": a.arm_id, "arm_title": a.arm_title, "n_at_risk": a.n_at_risk}
            for a in artifacts.arms
        ],
        "map_points": [
            {
                "pt_name": p.pt_name,
                "x": p.x,
                "y": p.y,
                "arm_id": p.arm_id,
                "incidence": p.incidence,
                "radius": p.radius,
                "cluster_id": p.cluster_id,
                "cluster_label": p.cluster_label,
                "is_noise": p.is_noise,
            }
            for p in artifacts.map_points
        ],
        "evd_points": [
            {
                "pt_name": p.pt_name,
                "arm_id": p.arm_id,
                "expectedness": p.expectedness,
                "ebgm": p.ebgm,
                "incidence": p.incidence,
                "cluster_id": p.cluster_id,
                "cluster_label": p.cluster_label,
            }
            for p in artifacts.evd_points
        ],
        "cluster_signals": [
            {
                "cluster_id": s.cluster_id,
                "label": s.cluster_label,
                "arm_id": s.arm_id,
                "ebgm_cluster": s.ebgm_cluster,
                "member_count": s.member_count,
            }
            for s in artifacts.cluster_signals
        ],
        "ungrouped_terms": list(artifacts.ungrouped_terms),
        "config_snapshot": artifacts.config_snapshot,
    }


def artifacts_json_bytes(artifacts: ReviewArtifacts) -> bytes:
    return (json.dumps(artifacts_to_dict(artifacts), indent=2, sort_keys=True) + "\n").encode()


def artifacts_from_dict(payload: dict[str, Any]) -> ReviewArtifacts:
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"artifacts schema_version {version!r} unsupported (expected {SCHEMA_VERSION})"
        )
    return ReviewArtifacts(
        study_id=payload["study_id"],
        arms=tuple(
            Arm(a["arm_id"], a["arm_title"], int(a["n_at_risk"])) for a in payload["arms"]
        ),
        map_points=tuple(
            MapPoint(
                pt_name=p["pt_name"],
                x=float(p["x"]),
                y=float(p["y"]),
                arm_id=p["arm_id"],
                incidence=float(p["incidence"]),
                radius=float(p["radius"]),
                cluster_id=int(p["cluster_id"]),
                cluster_label=p["cluster_label"],
                is_noise=bool(p["is_noise"]),
            )
            for p in payload["map_points"]
        ),
        evd_points=tuple(
            EvdPoint(
                pt_name=p["pt_name"],
                arm_id=p["arm_id"],
                expectedness=float(p["expectedness"]),
                ebgm=float(p["ebgm"]),
                incidence=float(p["incidence"]),
                cluster_id=int(p["cluster_id"]),
                cluster_label=p["cluster_label"],
            )
            for p in payload["evd_points"]
        ),
        cluster_signals=tuple(
            ClusterSignal(
                cluster_id=int(s["cluster_id"]),
                cluster_label=s["label"],
                arm_id=s["arm_id"],
                ebgm_cluster=float(s["ebgm_cluster"]),
                member_count=int(s["member_count"]),
            )
            for s in payload["cluster_signals"]
        ),
        ungrouped_terms=tuple(payload["ungrouped_terms"]),
        config_snapshot=dict(payload["config_snapshot"]),
    )


def load_artifacts(path: str | os.PathLike) -> ReviewArtifacts:
    with open(path, encoding="utf-8") as fh:
        return artifacts_from_dict(json.load(fh))


def write_atomic(path: str | os.PathLike, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=os.path.basename(path), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
