"""Ingestion: registry parsing, caching, serious/other merge, CSV I/O."""

from __future__ import annotations

import http.server
import json
import threading
from pathlib import Path

import pytest

from aesk.errors import (
    DuplicateRow,
    InconsistentAtRisk,
    NoResults,
    NotFound,
    ParseError,
    SchemaError,
    UpstreamError,
)
from aesk.ingest import (
    RawEvent,
    RawStudyRecord,
    fetch_study,
    load_csv,
    merge_serious_other,
    parse_study_json,
    table_from_dict,
    table_to_dict,
    write_csv,
)

from .conftest import CACHE_DIR, DEAD_ENDPOINT, FIXTURES

NARCO_EXPECTED = {
    "Insomnia": (0, 3, 2, 0),
    "Anxiety": (4, 5, 1, 1),
    "Headache": (14, 18, 6, 3),
    "Dizziness": (1, 3, 2, 2),
    "Decreased appetite": (5, 9, 5, 1),
    "Weight increased": (0, 1, 2, 3),
    "Weight decreased": (1, 3, 1, 0),
    "Heart rate increased": (0, 4, 0, 0),
    "Fatigue": (2, 3, 0, 0),
    "Nausea": (6, 6, 3, 1),
    "Dyspepsia": (2, 3, 1, 0),
    "Constipation": (1, 0, 3, 1),
}


class TestFetchStudy:
    def test_warm_cache_reads_offline(self, narco_table):
        # endpoint is unroutable; reaching the network would error out
        assert narco_table.study_id == "NCT02348593"
        assert len(narco_table.rows) == 12
        assert [a.n_at_risk for a in narco_table.arms] == [59, 59, 59, 59]

    def test_bad_id_pattern_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            fetch_study("EUDRA-123", cache_dir=tmp_path)

    def test_cold_cache_fetches_and_persists(self, tmp_path):
        record_body = json.dumps(
            {
                "resultsSection": {
                    "adverseEventsModule": {
                        "eventGroups": [{"id": "EG000", "title": "Arm A"}],
                        "otherEvents": [
                            {
                                "term": "Headache",
                                "stats": [
                                    {"groupId": "EG000", "numAffected": 3, "numAtRisk": 20}
                                ],
                            }
                        ],
                    }
                }
            }
        ).encode()
        hits = []

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_GET(self):
                hits.append(self.path)
                if self.path.endswith("NCT11111111"):
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.end_headers()
                    self.wfile.write(record_body)
                elif self.path.endswith("NCT00000000"):
                    self.send_response(404)
                    self.end_headers()
                else:
                    self.send_response(500)
                    self.end_headers()

            def log_message(self, *args):
                pass

        server = http.server.HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        endpoint = f"http://127.0.0.1:{server.server_port}/api/v2/studies"
        try:
            record = fetch_study("NCT11111111", endpoint=endpoint, cache_dir=tmp_path)
            assert record.other_events[0].pt_name == "Headache"
            cached = tmp_path / "NCT11111111.json"
            assert cached.exists()
            first_line = cached.read_bytes().splitlines()[0]
            assert first_line.startswith(b"# fetched ") and endpoint.encode() in first_line

            # warm cache: no further network hits
            hit_count = len(hits)
            fetch_study("NCT11111111", endpoint=endpoint, cache_dir=tmp_path)
            assert len(hits) == hit_count

            with pytest.raises(NotFound):
                fetch_study("NCT00000000", endpoint=endpoint, cache_dir=tmp_path)
            with pytest.raises(UpstreamError):
                fetch_study("NCT22222222", endpoint=endpoint, cache_dir=tmp_path)
        finally:
            server.shutdown()
            server.server_close()

    def test_unreachable_endpoint_raises_upstream(self, tmp_path):
        with pytest.raises(UpstreamError):
            fetch_study("NCT12345678", endpoint=DEAD_ENDPOINT, cache_dir=tmp_path, timeout=0.2)

    def test_malformed_cached_body_names_first_missing_field(self, tmp_path):
        bad = {"resultsSection": {"adverseEventsModule": {"otherEvents": []}}}
        (tmp_path / "NCT12345678.json").write_text(json.dumps(bad))
        with pytest.raises(SchemaError) as excinfo:
            fetch_study("NCT12345678", cache_dir=tmp_path)
        assert "eventGroups" in str(excinfo.value)

    def test_cached_non_json_body(self, tmp_path):
        (tmp_path / "NCT12345678.json").write_bytes(b"# fetched x y\nnot-json{")
        with pytest.raises(SchemaError):
            fetch_study("NCT12345678", cache_dir=tmp_path)

    def test_record_without_results_section(self, tmp_path):
        (tmp_path / "NCT12345678.json").write_text(json.dumps({"protocolSection": {}}))
        with pytest.raises(NoResults):
            fetch_study("NCT12345678", cache_dir=tmp_path)


class TestParseStudyJson:
    def test_stat_without_at_risk_uses_group_default(self):
        payload = {
            "resultsSection": {
                "adverseEventsModule": {
                    "eventGroups": [{"id": "EG000", "title": "A", "otherNumAtRisk": 40}],
                    "otherEvents": [
                        {"term": "Nausea", "stats": [{"groupId": "EG000", "numAffected": 2}]}
                    ],
                }
            }
        }
        record = parse_study_json("NCT12345678", payload)
        assert record.other_events[0].at_risk == 40

    def test_unknown_group_id(self):
        payload = {
            "resultsSection": {
                "adverseEventsModule": {
                    "eventGroups": [{"id": "EG000", "title": "A"}],
                    "otherEvents": [
                        {
                            "term": "Nausea",
                            "stats": [{"groupId": "EG999", "numAffected": 2, "numAtRisk": 10}],
                        }
                    ],
                }
            }
        }
        with pytest.raises(SchemaError) as excinfo:
            parse_study_json("NCT12345678", payload)
        assert "groupId" in str(excinfo.value)


class TestMergeSeriousOther:
    def test_serious_plus_other_sums(self, narco_table):
        # single serious event sits on top of three non-serious ones
        row = narco_table.row("Anxiety")
        assert [c.n_affected for c in row.counts] == [4, 5, 1, 1]

    def test_golden_counts(self, narco_table):
        for pt, expected in NARCO_EXPECTED.items():
            row = narco_table.row(pt)
            assert tuple(c.n_affected for c in row.counts) == expected, pt

    def test_per_arm_totals_match_source(self, narco_table):
        record = fetch_study("NCT02348593", endpoint=DEAD_ENDPOINT, cache_dir=CACHE_DIR)
        source_totals: dict[str, int] = {}
        for event in record.serious_events + record.other_events:
            source_totals[event.arm_id] = source_totals.get(event.arm_id, 0) + event.count
        for arm in narco_table.arms:
            table_total = sum(
                c.n_affected for row in narco_table.rows for c in row.counts if c.arm_id == arm.arm_id
            )
            assert table_total == source_totals[arm.arm_id]

    def test_absent_side_counts_zero(self):
        record = RawStudyRecord(
            "NCT12345678",
            (("A", "Arm A"),),
            serious_events=(),
            other_events=(RawEvent("Nausea", "A", 3, 30),),
        )
        table = merge_serious_other(record)
        assert table.row("Nausea").counts[0].n_affected == 3

    def test_commutative_in_event_lists(self):
        serious = (RawEvent("Anxiety", "A", 1, 30), RawEvent("Rash", "A", 2, 30))
        other = (RawEvent("Anxiety", "A", 3, 30), RawEvent("Nausea", "A", 1, 30))
        record_a = RawStudyRecord("NCT12345678", (("A", "Arm A"),), serious, other)
        record_b = RawStudyRecord("NCT12345678", (("A", "Arm A"),), other, serious)
        assert merge_serious_other(record_a) == merge_serious_other(record_b)

    def test_inconsistent_at_risk(self):
        record = RawStudyRecord(
            "NCT12345678",
            (("A", "Arm A"),),
            serious_events=(RawEvent("Anxiety", "A", 1, 59),),
            other_events=(RawEvent("Anxiety", "A", 3, 60),),
        )
        with pytest.raises(InconsistentAtRisk):
            merge_serious_other(record)

    def test_zero_total_rows_retained(self):
        record = RawStudyRecord(
            "NCT12345678",
            (("A", "Arm A"),),
            other_events=(RawEvent("Nausea", "A", 0, 30),),
        )
        table = merge_serious_other(record)
        assert table.row("Nausea").counts[0].n_affected == 0

    def test_lexicon_drops_unknown_terms(self):
        record = RawStudyRecord(
            "NCT12345678",
            (("A", "Arm A"),),
            other_events=(
                RawEvent("Nausea", "A", 3, 30),
                RawEvent("Free text finding", "A", 1, 30),
            ),
        )
        lexicon = frozenset({"nausea"})
        table = merge_serious_other(record, lexicon)
        assert table.pt_names() == ["Nausea"]
        assert table.dropped_terms == ("Free text finding",)

    def test_case_and_whitespace_canonicalization(self):
        record = RawStudyRecord(
            "NCT12345678",
            (("A", "Arm A"),),
            serious_events=(RawEvent("  NAUSEA ", "A", 1, 30),),
            other_events=(RawEvent("Nausea", "A", 2, 30),),
        )
        table = merge_serious_other(record)
        assert table.pt_names() == ["NAUSEA"]  # first-seen casing kept
        assert table.row("nausea").counts[0].n_affected == 3


class TestCsv:
    def test_fixture_csv_loads(self, fixtures_dir):
        table = load_csv(fixtures_dir / "narcolepsy_incidence.csv")
        assert len(table.rows) == 12
        assert len(table.arms) == 4
        assert table.row("Headache").counts[1].n_affected == 18

    def test_round_trip_canonical_form(self, fixtures_dir, tmp_path):
        src = fixtures_dir / "narcolepsy_incidence.csv"
        table = load_csv(src)
        out = tmp_path / "roundtrip.csv"
        write_csv(table, out)
        assert out.read_bytes() == src.read_bytes()

    def test_empty_data_section_valid(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk\n")
        table = load_csv(path)
        assert table.rows == ()

    def test_duplicate_row(self, tmp_path):
        path = tmp_path / "dup.csv"
        path.write_text(
            "study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk\n"
            "NCT12345678,A,Arm A,Headache,18,59\n"
            "NCT12345678,A,Arm A,Headache,18,59\n"
        )
        with pytest.raises(DuplicateRow):
            load_csv(path)

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk\n"
            "NCT12345678,A,Arm A,Headache,eighteen,59\n"
        )
        with pytest.raises(ParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.line == 2

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("study,arm\nx,y\n")
        with pytest.raises(ParseError) as excinfo:
            load_csv(path)
        assert excinfo.value.line == 1

    def test_mixed_study_ids(self, tmp_path):
        path = tmp_path / "mixed.csv"
        path.write_text(
            "study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk\n"
            "NCT11111111,A,Arm A,Headache,1,59\n"
            "NCT22222222,A,Arm A,Nausea,1,59\n"
        )
        with pytest.raises(ParseError):
            load_csv(path)

    def test_count_bounds(self, tmp_path):
        path = tmp_path / "bounds.csv"
        path.write_text(
            "study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk\n"
            "NCT11111111,A,Arm A,Headache,60,59\n"
        )
        with pytest.raises(ParseError):
            load_csv(path)

    def test_zero_fill_missing_cells(self, tmp_path):
        path = tmp_path / "sparse.csv"
        path.write_text(
            "study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk\n"
            "NCT11111111,A,Arm A,Headache,5,59\n"
            "NCT11111111,B,Arm B,Headache,2,40\n"
            "NCT11111111,A,Arm A,Nausea,1,59\n"
        )
        table = load_csv(path)
        nausea = table.row("Nausea")
        assert [c.n_affected for c in nausea.counts] == [1, 0]
        assert nausea.counts[1].n_at_risk == 40

    def test_csv_inconsistent_at_risk(self, tmp_path):
        path = tmp_path / "inconsistent.csv"
        path.write_text(
            "study_id,arm_id,arm_title,pt_name,n_affected,n_at_risk\n"
            "NCT11111111,A,Arm A,Headache,5,59\n"
            "NCT11111111,A,Arm A,Nausea,1,60\n"
        )
        with pytest.raises(InconsistentAtRisk):
            load_csv(path)


class TestWireForm:
    def test_dict_round_trip(self, narco_table):
        assert table_from_dict(table_to_dict(narco_table)) == narco_table
