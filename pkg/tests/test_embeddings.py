"""Embedding store, fallback encoder, cosine, expectedness."""

from __future__ import annotations

import math
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aesk.embeddings import (
    EmbeddingStore,
    TermEmbedding,
    cosine,
    expectedness,
    fallback_encode,
    population_vector,
)
from aesk.errors import DimensionMismatch, ParseError, UnknownTerm, ZeroVector


class TestStoreLoading:
    def test_basic_file(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text(
            "# comment\n"
            "Nausea\t1 0 0 0\n"
            "Vomiting\t0.9 0.1 0 0\n"
            "Epistaxis\t0 0 1 0\n"
        )
        store = EmbeddingStore.from_file(str(path))
        assert store.dimension == 4
        assert len(store.entries) == 3
        assert store.provenance == "external_file"
        assert store.lookup("  nausea ") is not None

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("a\t1 0 0 0\nb\t1 0 0 0 0\n")
        with pytest.raises(DimensionMismatch):
            EmbeddingStore.from_file(str(path))

    def test_duplicate_term_identified(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("Nausea\t1 0 0 0\nNAUSEA\t0 1 0 0\n")
        with pytest.raises(ParseError) as excinfo:
            EmbeddingStore.from_file(str(path))
        assert "NAUSEA" in str(excinfo.value)
        assert excinfo.value.line == 2

    def test_non_numeric_component(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("a\t1 x 0 0\n")
        with pytest.raises(ParseError) as excinfo:
            EmbeddingStore.from_file(str(path))
        assert excinfo.value.line == 1

    def test_empty_file(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("# nothing here\n")
        with pytest.raises(ParseError):
            EmbeddingStore.from_file(str(path))

    def test_unknown_term_policy(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("Nausea\t1 0 0 0 0 0 0 0\n")
        strict = EmbeddingStore.from_file(str(path))
        with pytest.raises(UnknownTerm):
            strict.resolve("Vertigo")
        lax = EmbeddingStore.from_file(str(path), unknown_term_policy="fallback")
        assert lax.resolve("Vertigo").dimension == 8


class TestFallbackEncoder:
    def test_deterministic(self):
        assert fallback_encode("Nausea", 32, 0) == fallback_encode("Nausea", 32, 0)

    def test_deterministic_across_processes(self):
        code = (
            "from aesk.embeddings import fallback_encode;"
            "print(repr(fallback_encode('Hepatotoxicity', 32, 7).vector))"
        )
        runs = {
            subprocess.run(
                [sys.executable, "-c", code], capture_output=True, text=True, check=True
            ).stdout
            for _ in range(2)
        }
        assert len(runs) == 1
        assert runs.pop() == repr(fallback_encode("Hepatotoxicity", 32, 7).vector) + "\n"

    def test_seed_changes_vector(self):
        assert fallback_encode("Nausea", 32, 0) != fallback_encode("Nausea", 32, 1)

    def test_canonicalization_shared_with_tables(self):
        assert fallback_encode(" NAUSEA  ", 32, 0).vector == fallback_encode("nausea", 32, 0).vector

    @pytest.mark.parametrize(
        "stem_a,stem_b,unrelated",
        [
            ("Gastroenteritis", "Gastroenteritis viral", "Epistaxis"),
            ("Hepatic enzyme increased", "Hepatic enzyme abnormal", "Insomnia"),
            ("Weight increased", "Weight decreased", "Anal abscess"),
        ],
    )
    def test_shared_stems_score_higher(self, stem_a, stem_b, unrelated):
        a = fallback_encode(stem_a, 32, 0)
        b = fallback_encode(stem_b, 32, 0)
        c = fallback_encode(unrelated, 32, 0)
        assert cosine(a, b) > cosine(a, c)

    def test_empty_term_rejected(self):
        with pytest.raises(ValueError):
            fallback_encode("   ", 32, 0)

    def test_dimension_floor(self):
        with pytest.raises(ValueError):
            fallback_encode("Nausea", 4, 0)

    def test_unit_norm(self):
        vec = fallback_encode("Blood bilirubin increased", 64, 3).vector
        assert abs(math.sqrt(sum(v * v for v in vec)) - 1.0) < 1e-12

    @given(st.text(min_size=1, max_size=12).filter(lambda s: s.strip()))
    @settings(max_examples=200, deadline=None)
    def test_never_zero_vector(self, term):
        vec = fallback_encode(term, 16, 0).vector
        assert any(v != 0 for v in vec)


class TestCosine:
    def test_identity(self):
        a = TermEmbedding("a", (1.0, 2.0, 2.0))
        assert cosine(a, a) == 1.0

    def test_orthogonal(self):
        assert cosine(TermEmbedding("a", (1.0, 0.0)), TermEmbedding("b", (0.0, 1.0))) == 0.0

    def test_hand_value(self):
        a = TermEmbedding("a", (1.0, 2.0, 2.0))
        b = TermEmbedding("b", (2.0, 1.0, 2.0))
        assert abs(cosine(a, b) - 8.0 / 9.0) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine(TermEmbedding("a", (1.0, 0.0)), TermEmbedding("b", (1.0, 0.0, 0.0)))

    component = st.floats(-10, 10).map(lambda x: 0.0 if abs(x) < 1e-6 else x)

    @given(
        st.lists(component, min_size=3, max_size=3),
        st.lists(component, min_size=3, max_size=3),
        st.floats(0.001, 1000),
    )
    @settings(max_examples=300, deadline=None)
    def test_symmetry_and_scale_invariance(self, u, v, k):
        if all(x == 0 for x in u) or all(x == 0 for x in v):
            return
        a = TermEmbedding("a", tuple(u))
        b = TermEmbedding("b", tuple(v))
        assert abs(cosine(a, b) - cosine(b, a)) <= 1e-12
        scaled = TermEmbedding("ka", tuple(k * x for x in u))
        assert abs(cosine(scaled, b) - cosine(a, b)) <= 1e-12


class TestExpectedness:
    def test_descriptor_equal_to_pt_scores_one(self):
        store = EmbeddingStore.fallback(32, 0)
        scores = expectedness(["Muscular dystrophy"], ["Muscular dystrophy"], store)
        assert scores[0].score == 1.0

    def test_opposite_descriptors_raise_zero_vector(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("up\t1 0 0 0 0 0 0 0\ndown\t-1 0 0 0 0 0 0 0\npt\t0 1 0 0 0 0 0 0\n")
        store = EmbeddingStore.from_file(str(path))
        with pytest.raises(ZeroVector):
            expectedness(["up", "down"], ["pt"], store)

    def test_empty_descriptors_rejected(self):
        with pytest.raises(ValueError):
            population_vector([], EmbeddingStore.fallback(32, 0))

    def test_output_order_matches_input(self):
        store = EmbeddingStore.fallback(32, 0)
        pts = ["Nausea", "Epistaxis", "Fall"]
        scores = expectedness(["Narcolepsy"], pts, store)
        assert [s.pt_name for s in scores] == pts

    def test_permutation_equivariance(self):
        store = EmbeddingStore.fallback(32, 0)
        pts = ["Nausea", "Epistaxis", "Fall", "Contusion"]
        base = {s.pt_name: s.score for s in expectedness(["Narcolepsy"], pts, store)}
        flipped = {
            s.pt_name: s.score
            for s in expectedness(["Narcolepsy"], list(reversed(pts)), store)
        }
        assert base == flipped

    def test_reference_store_ranks_respiratory_lowest(self, reference_store, dmd_config):
        pts = ["Nasopharyngitis", "Epistaxis", "Fall", "Contusion", "Liver injury"]
        scores = {
            s.pt_name: s.score
            for s in expectedness(list(dmd_config.descriptors), pts, reference_store)
        }
        assert scores["Fall"] > scores["Liver injury"] > scores["Nasopharyngitis"]
        assert scores["Contusion"] > scores["Epistaxis"]
