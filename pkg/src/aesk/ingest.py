"""Acquisition and normalization of aggregated AE incidence data.

Sources: the ClinicalTrials.gov v2 study endpoint (JSON, cached to disk)
or a local CSV. Both normalize into an :class:`IncidenceTable` holding
per-arm counts of subjects with each Preferred Term. The table is the
single input of the downstream statistics, so its invariants are
enforced at construction: one count per arm on every row, arm-level
at-risk consistency, and canonical-unique term names.
"""

from __future__ import annotations

import csv
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import requests

from .errors import (
    DuplicateRow,
    InconsistentAtRisk,
    NoResults,
    NotFound,
    ParseError,
    SchemaError,
    UnknownPt,
    UpstreamError,
)
from .terms import canonical_term, display_term

NCT_ID_RE = re.compile(r"^NCT\d{8}$")

CSV_HEADER = ["study_id", "arm_id", "arm_title", "pt_name", "n_affected", "n_at_risk"]


@dataclass(frozen=True)
class Arm:
    arm_id: str
    arm_title: str
    n_at_risk: int

    def __post_init__(self):
        if self.n_at_risk <= 0:
            raise ValueError(f"arm {self.arm_id}: n_at_risk must be positive")


@dataclass(frozen=True)
class ArmCount:
    """Count of subjects with the event in one arm."""

    arm_id: str
    arm_title: str
    n_affected: int
    n_at_risk: int

    def __post_init__(self):
        if self.n_at_risk <= 0:
            raise ValueError(f"arm {self.arm_id}: n_at_risk must be positive")
        if not 0 <= self.n_affected <= self.n_at_risk:
            raise ValueError(
                f"arm {self.arm_id}: n_affected {self.n_affected} outside [0, {self.n_at_risk}]"
            )


@dataclass(frozen=True)
class IncidenceRow:
    pt_name: str
    counts: tuple[ArmCount, ...]


@dataclass(frozen=True)
class IncidenceTable:
    """Aggregated counts of subjects with AEs, by Preferred Term and arm.

    Rows are sorted by canonical term; arms keep source order. Rows with
    zero events in every arm are retained, so totals stay auditable.
    ``dropped_terms`` lists source terms rejected by the PT lexicon.
    """

    study_id: str
    arms: tuple[Arm, ...]
    rows: tuple[IncidenceRow, ...]
    dropped_terms: tuple[str, ...] = ()

    def __post_init__(self):
        arm_ids = [a.arm_id for a in self.arms]
        if len(set(arm_ids)) != len(arm_ids):
            raise ValueError("duplicate arm ids")
        at_risk = {a.arm_id: a.n_at_risk for a in self.arms}
        seen: set[str] = set()
        for row in self.rows:
            key = canonical_term(row.pt_name)
            if key in seen:
                raise ValueError(f"duplicate preferred term: {row.pt_name}")
            seen.add(key)
            if [c.arm_id for c in row.counts] != arm_ids:
                raise ValueError(f"row {row.pt_name}: counts not aligned with arms")
            for count in row.counts:
                if count.n_at_risk != at_risk[count.arm_id]:
                    raise ValueError(
                        f"row {row.pt_name}, arm {count.arm_id}: "
                        f"n_at_risk {count.n_at_risk} != arm-level {at_risk[count.arm_id]}"
                    )

    def pt_names(self) -> list[str]:
        return [row.pt_name for row in self.rows]

    def row(self, pt_name: str) -> IncidenceRow:
        key = canonical_term(pt_name)
        for row in self.rows:
            if canonical_term(row.pt_name) == key:
                return row
        raise UnknownPt(pt_name)


@dataclass(frozen=True)
class RawEvent:
    pt_name: str
    arm_id: str
    count: int
    at_risk: int

    def __post_init__(self):
        if self.count < 0:
            raise ValueError(f"{self.pt_name}/{self.arm_id}: negative count")
        if self.at_risk <= 0:
            raise ValueError(f"{self.pt_name}/{self.arm_id}: at_risk must be positive")


@dataclass(frozen=True)
class RawStudyRecord:
    """Parsed adverse-events results section, before serious/other merging."""

    study_id: str
    arms: tuple[tuple[str, str], ...]  # (arm_id, arm_title), source order
    serious_events: tuple[RawEvent, ...] = ()
    other_events: tuple[RawEvent, ...] = ()


# ---------------------------------------------------------------------------
# Registry fetch + cache
# ---------------------------------------------------------------------------


def _require(mapping, key: str, path: str):
    if not isinstance(mapping, dict) or key not in mapping or mapping[key] is None:
        raise SchemaError(f"{path}.{key}" if path else key)
    return mapping[key]


def _parse_events(ae_module: dict, kind: str, groups: Mapping[str, int | None]) -> list[RawEvent]:
    events = ae_module.get(kind) or []
    base = f"resultsSection.adverseEventsModule.{kind}"
    parsed: list[RawEvent] = []
    for i, event in enumerate(events):
        term = _require(event, "term", f"{base}[{i}]")
        stats = _require(event, "stats", f"{base}[{i}]")
        for j, stat in enumerate(stats):
            spath = f"{base}[{i}].stats[{j}]"
            group_id = _require(stat, "groupId", spath)
            if group_id not in groups:
                raise SchemaError(f"{spath}.groupId", "unknown event group")
            affected = _require(stat, "numAffected", spath)
            at_risk = stat.get("numAtRisk")
            if at_risk is None:
                at_risk = groups[group_id]
            if at_risk is None:
                raise SchemaError(f"{spath}.numAtRisk")
            if not isinstance(affected, int) or not isinstance(at_risk, int):
                raise SchemaError(spath, "counts must be integers")
            parsed.append(RawEvent(str(term), str(group_id), affected, at_risk))
    return parsed


def parse_study_json(study_id: str, payload: dict) -> RawStudyRecord:
    """Parse a v2 study record's adverse-events module into a RawStudyRecord."""
    results = payload.get("resultsSection")
    if not results:
        raise NoResults(f"{study_id}: no results section")
    ae_module = results.get("adverseEventsModule")
    if not ae_module:
        raise NoResults(f"{study_id}: no adverse-events module")

    group_list = _require(ae_module, "eventGroups", "resultsSection.adverseEventsModule")
    arms: list[tuple[str, str]] = []
    serious_default: dict[str, int | None] = {}
    other_default: dict[str, int | None] = {}
    for i, group in enumerate(group_list):
        gid = str(_require(group, "id", f"resultsSection.adverseEventsModule.eventGroups[{i}]"))
        arms.append((gid, str(group.get("title", gid))))
        serious_default[gid] = group.get("seriousNumAtRisk")
        other_default[gid] = group.get("otherNumAtRisk")

    serious = _parse_events(ae_module, "seriousEvents", serious_default)
    other = _parse_events(ae_module, "otherEvents", other_default)
    return RawStudyRecord(study_id, tuple(arms), tuple(serious), tuple(other))


def cache_path(cache_dir: str | os.PathLike, study_id: str) -> Path:
    return Path(cache_dir) / f"{study_id}.json"


def _write_cache(path: Path, body: bytes, endpoint: str) -> None:
    # Single-line metadata header, then the raw response bytes. Written
    # atomically so concurrent fetches never leave a torn entry.
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    header = f"# fetched {stamp} {endpoint}\n".encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header + body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_cached_body(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw.startswith(b"#"):
        _, _, raw = raw.partition(b"\n")
    return raw


def fetch_study(
    study_id: str,
    endpoint: str = "https://clinicaltrials.gov/api/v2/studies",
    cache_dir: str | os.PathLike = "cache",
    timeout: float = 30.0,
) -> RawStudyRecord:
    """Fetch one study's AE results, caching the raw body on disk.

    A warm cache is authoritative: repeated calls never touch the
    network, so test and review runs are reproducible offline.
    """
    if not NCT_ID_RE.match(study_id):
        raise ValueError(f"study id must match NCT########: {study_id!r}")
    path = cache_path(cache_dir, study_id)
    if path.exists():
        body = read_cached_body(path)
    else:
        url = f"{endpoint.rstrip('/')}/{study_id}"
        try:
            resp = requests.get(url, timeout=timeout, headers={"Accept": "application/json"})
        except requests.RequestException as exc:
            raise UpstreamError(f"{study_id}: registry request failed: {exc}") from exc
        if resp.status_code == 404:
            raise NotFound(f"unknown study id: {study_id}")
        if resp.status_code != 200:
            raise UpstreamError(f"{study_id}: registry returned HTTP {resp.status_code}")
        body = resp.content
        _write_cache(path, body, endpoint)
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise SchemaError("<record root>", f"cached body is not valid JSON ({exc.msg})") from exc
    if not isinstance(payload, dict):
        raise SchemaError("<record root>", "record must be a JSON object")
    return parse_study_json(study_id, payload)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def load_lexicon(path: str | os.PathLike) -> frozenset[str]:
    """Valid-PT lexicon: one term per line, '#' comments, canonical keys."""
    terms = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                terms.add(canonical_term(line))
    return frozenset(terms)


def merge_serious_other(
    record: RawStudyRecord, lexicon: frozenset[str] | None = None
) -> IncidenceTable:
    """Sum serious and other counts into one subjects-with-event table.

    A subject reported under both lists for the same PT is counted twice
    by the sum; that is the documented aggregation rule and the caveat
    travels with it. When a lexicon is given, terms outside it are
    dropped and reported via ``dropped_terms``.
    """
    at_risk: dict[str, int] = {}
    for event in record.serious_events + record.other_events:
        prev = at_risk.get(event.arm_id)
        if prev is None:
            at_risk[event.arm_id] = event.at_risk
        elif prev != event.at_risk:
            raise InconsistentAtRisk(
                f"arm {event.arm_id}: at_risk reported as both {prev} and {event.at_risk}"
            )

    # Arms keep source order; arms with no events carry no denominator
    # and are omitted.
    titles = dict(record.arms)
    arms = tuple(
        Arm(arm_id, display_term(titles.get(arm_id, arm_id)), at_risk[arm_id])
        for arm_id, _ in record.arms
        if arm_id in at_risk
    )

    display: dict[str, str] = {}
    order: list[str] = []
    sums: dict[tuple[str, str], int] = {}
    for event in record.serious_events + record.other_events:
        key = canonical_term(event.pt_name)
        if key not in display:
            display[key] = display_term(event.pt_name)
            order.append(key)
        sums[(key, event.arm_id)] = sums.get((key, event.arm_id), 0) + event.count

    dropped: list[str] = []
    kept: list[str] = []
    for key in order:
        if lexicon is not None and key not in lexicon:
            dropped.append(display[key])
        else:
            kept.append(key)

    rows = tuple(
        IncidenceRow(
            display[key],
            tuple(
                ArmCount(a.arm_id, a.arm_title, sums.get((key, a.arm_id), 0), a.n_at_risk)
                for a in arms
            ),
        )
        for key in sorted(kept)
    )
    return IncidenceTable(record.study_id, arms, rows, tuple(dropped))


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------


def load_csv(path: str | os.PathLike) -> IncidenceTable:
    """Read an incidence CSV (schema: study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header", 1) from None
        if header != CSV_HEADER:
            raise ParseError(f"header must be {','.join(CSV_HEADER)}", 1)

        study_id: str | None = None
        arm_order: list[str] = []
        arm_title: dict[str, str] = {}
        arm_at_risk: dict[str, int] = {}
        display: dict[str, str] = {}
        pt_order: list[str] = []
        cells: dict[tuple[str, str], int] = {}

        for lineno, fields in enumerate(reader, start=2):
            if not fields or fields == [""]:
                continue
            if len(fields) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} fields, got {len(fields)}", lineno)
            sid, arm_id, title, pt_name, affected_s, at_risk_s = fields
            try:
                affected = int(affected_s)
                at_risk = int(at_risk_s)
            except ValueError:
                raise ParseError("counts must be integers", lineno) from None
            if at_risk <= 0:
                raise ParseError("n_at_risk must be positive", lineno)
            if not 0 <= affected <= at_risk:
                raise ParseError(f"n_affected {affected} outside [0, {at_risk}]", lineno)
            if not pt_name.strip():
                raise ParseError("empty pt_name", lineno)

            if study_id is None:
                study_id = sid
            elif sid != study_id:
                raise ParseError(f"mixed study ids: {study_id!r} and {sid!r}", lineno)

            if arm_id not in arm_at_risk:
                arm_order.append(arm_id)
                arm_title[arm_id] = display_term(title)
                arm_at_risk[arm_id] = at_risk
            elif arm_at_risk[arm_id] != at_risk:
                raise InconsistentAtRisk(
                    f"line {lineno}: arm {arm_id} at_risk {at_risk} != earlier {arm_at_risk[arm_id]}"
                )

            key = canonical_term(pt_name)
            if key not in display:
                display[key] = display_term(pt_name)
                pt_order.append(key)
            if (key, arm_id) in cells:
                raise DuplicateRow(f"line {lineno}: {display[key]} / {arm_id} repeated")
            cells[(key, arm_id)] = affected

    if study_id is None:
        return IncidenceTable("", (), ())
    arms = tuple(Arm(a, arm_title[a], arm_at_risk[a]) for a in arm_order)
    rows = tuple(
        IncidenceRow(
            display[key],
            tuple(
                ArmCount(a.arm_id, a.arm_title, cells.get((key, a.arm_id), 0), a.n_at_risk)
                for a in arms
            ),
        )
        for key in sorted(pt_order)
    )
    return IncidenceTable(study_id, arms, rows)


def write_csv(table: IncidenceTable, path: str | os.PathLike) -> None:
    """Write the canonical CSV form: header, then rows x arms in table order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in table.rows:
            for count in row.counts:
                writer.writerow(
                    [
                        table.study_id,
                        count.arm_id,
                        count.arm_title,
                        row.pt_name,
                        count.n_affected,
                        count.n_at_risk,
                    ]
                )


# ---------------------------------------------------------------------------
# Wire form (shared by the HTTP service and the artifacts file)
# ---------------------------------------------------------------------------


def table_to_dict(table: IncidenceTable) -> dict:
    return {
        "study_id": table.study_id,
        "arms": [
            {"arm_id": a.arm_id, "arm_title": a.arm_title, "n_at_risk": a.n_at_risk}
            for a in table.arms
        ],
        "rows": [
            {
                "pt_name": row.pt_name,
                "counts": [
                    {"arm_id": c.arm_id, "n_affected": c.n_affected, "n_at_risk": c.n_at_risk}
                    for c in row.counts
                ],
            }
            for row in table.rows
        ],
        "dropped_terms": list(table.dropped_terms),
    }


def table_from_dict(payload: dict) -> IncidenceTable:
    arms = tuple(
        Arm(a["arm_id"], a["arm_title"], int(a["n_at_risk"])) for a in payload["arms"]
    )
    titles = {a.arm_id: a.arm_title for a in arms}
    rows = tuple(
        IncidenceRow(
            row["pt_name"],
            tuple(
                ArmCount(
                    c["arm_id"], titles[c["arm_id"]], int(c["n_affected"]), int(c["n_at_risk"])
                )
                for c in row["counts"]
            ),
        )
        for row in payload["rows"]
    )
    return IncidenceTable(
        payload["study_id"], arms, rows, tuple(payload.get("dropped_terms", ()))
    )
