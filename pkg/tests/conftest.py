"""Shared fixtures: offline fixture studies, reference store, configs.

The fake registry endpoint is unroutable on purpose — every test that
reads a study must be served from the cache directory, proving the
offline path works.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from aesk.config import RunConfig, load_config
from aesk.embeddings import EmbeddingStore
from aesk.ingest import IncidenceTable, fetch_study, merge_serious_other

FIXTURES = Path(__file__).parent / "fixtures"
CACHE_DIR = FIXTURES / "cache"
DEAD_ENDPOINT = "http://registry.invalid:1/api"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def narco_table() -> IncidenceTable:
    record = fetch_study("NCT02348593", endpoint=DEAD_ENDPOINT, cache_dir=CACHE_DIR)
    return merge_serious_other(record)


@pytest.fixture(scope="session")
def dmd_table() -> IncidenceTable:
    record = fetch_study("NCT05096221", endpoint=DEAD_ENDPOINT, cache_dir=CACHE_DIR)
    return merge_serious_other(record)


@pytest.fixture(scope="session")
def reference_store() -> EmbeddingStore:
    return EmbeddingStore.from_file(str(FIXTURES / "reference_embeddings.tsv"))


@pytest.fixture(scope="session")
def dmd_config() -> RunConfig:
    return load_config(
        config_file=str(FIXTURES / "dmd_analysis.conf"),
        environ={},
        flag_overrides={
            "embedding.path": str(FIXTURES / "reference_embeddings.tsv"),
            "fetch.endpoint": DEAD_ENDPOINT,
            "fetch.cache_dir": str(CACHE_DIR),
        },
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(report, "when", "call") == "call":
                name = nodeid.split("::")[-1]
                lines.append((name, label))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, label in sorted(lines):
            terminalreporter.write_line(f"{label}  {name}")
