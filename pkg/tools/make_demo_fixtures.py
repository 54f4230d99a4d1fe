"""Regenerate the demo/test fixture data.

Writes, under tests/fixtures/:
  - cache/NCT*.json          cached registry records (results sections with
                             the adverse-events module only), in the same
                             shape as the v2 study endpoint
  - reference_embeddings.tsv a term-embedding store engineered so the DMD
                             demo study clusters into 7 groups of 44 terms
                             with 28 ungrouped, and so expectedness ranks
                             musculoskeletal-trauma terms highest and acute
                             respiratory terms lowest
  - narcolepsy_incidence.csv canonical CSV of the merged narcolepsy table
  - dmd_analysis.conf        the analysis parameters the fixtures were
                             validated against

and, under frontend/test/fixtures/: the DMD artifacts and incidence JSON
consumed by the explorer UI tests.

The script is deterministic and verifies every structural target before
writing, so regenerating cannot silently break the golden tests.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from aesk.config import RunConfig  # noqa: E402
from aesk.embeddings import EmbeddingStore, expectedness  # noqa: E402
from aesk.ingest import merge_serious_other, parse_study_json, table_to_dict, write_csv  # noqa: E402
from aesk.pipeline import run_analysis  # noqa: E402
from aesk.terms import canonical_term  # noqa: E402
from aesk.visuals import artifacts_json_bytes  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"
FRONTEND_FIXTURES = ROOT / "frontend" / "test" / "fixtures"

EMBED_DIM = 16
CENTER_SCALE = 6.0
JITTER_SCALE = 0.25
NOISE_RADIUS = 4.0
EPSILON = 0.8

# ---------------------------------------------------------------------------
# DMD demo study (NCT05096221): 72 PTs, 44 of which form 7 semantic groups.
# Counts are synthetic but follow the published directional profile of the
# trial: liver-enzyme terms concentrate in the treated arms of both parts.
# Arm order: Part 1 treated / Part 1 placebo / Part 2 treated / Part 2 placebo.
# ---------------------------------------------------------------------------

DMD_ARMS = [
    ("EG000", "Part 1: Delandistrogene Moxeparvovec", 63),
    ("EG001", "Part 1: Placebo", 61),
    ("EG002", "Part 2: Delandistrogene Moxeparvovec", 60),
    ("EG003", "Part 2: Placebo", 58),
]

DMD_GROUPS: dict[str, dict[str, tuple[int, int, int, int]]] = {
    "liver": {
        "Transaminases increased": (20, 2, 18, 1),
        "Hepatic enzyme increased": (12, 1, 10, 1),
        "Glutamate dehydrogenase increased": (8, 0, 7, 0),
        "Gamma-glutamyltransferase increased": (6, 0, 16, 0),
        "Blood bilirubin increased": (5, 0, 12, 0),
        "Liver injury": (3, 0, 3, 0),
        "Hepatotoxicity": (2, 0, 2, 0),
    },
    "gastro": {
        "Vomiting": (38, 12, 30, 8),
        "Nausea": (20, 8, 16, 6),
        "Diarrhoea": (10, 6, 8, 5),
        "Constipation": (6, 4, 5, 4),
        "Gastroenteritis": (5, 3, 4, 2),
        "Gastroenteritis viral": (3, 2, 3, 1),
        "Rotavirus infection": (2, 1, 2, 0),
    },
    "abdominal": {
        "Abdominal pain": (8, 7, 8, 2),
        "Abdominal pain upper": (6, 6, 6, 1),
        "Appendicitis": (1, 1, 1, 0),
        "Anal abscess": (1, 0, 1, 0),
    },
    "respiratory": {
        "Nasopharyngitis": (10, 12, 8, 7),
        "Upper respiratory tract infection": (8, 9, 7, 6),
        "Cough": (6, 7, 5, 5),
        "Rhinorrhoea": (4, 5, 3, 3),
        "Epistaxis": (3, 4, 2, 2),
        "Oropharyngeal pain": (3, 3, 2, 2),
        "Rhinitis": (2, 3, 2, 1),
        "Pharyngitis": (2, 2, 1, 1),
    },
    "behavioral": {
        "Irritability": (5, 5, 4, 3),
        "Agitation": (3, 3, 2, 2),
        "Aggression": (2, 2, 2, 1),
        "Crying": (2, 2, 1, 1),
        "Initial insomnia": (1, 2, 1, 1),
        "Mood swings": (1, 1, 1, 1),
    },
    "trauma": {
        "Fall": (7, 8, 6, 5),
        "Contusion": (6, 7, 5, 4),
        "Joint injury": (3, 4, 3, 2),
        "Ligament sprain": (2, 3, 2, 2),
        "Limb injury": (2, 3, 2, 1),
        "Laceration": (2, 2, 1, 1),
        "Foot fracture": (1, 1, 1, 1),
    },
    "cardiac": {
        "Troponin increased": (2, 4, 2, 3),
        "Troponin I increased": (1, 3, 1, 2),
        "Blood creatine phosphokinase MB increased": (1, 2, 1, 2),
        "Myocarditis": (1, 1, 0, 1),
        "Ejection fraction decreased": (0, 1, 0, 1),
    },
}

DMD_UNGROUPED: dict[str, tuple[int, int, int, int]] = {
    "Pyrexia": (12, 10, 9, 8),
    "Headache": (9, 8, 7, 6),
    "Rash": (5, 4, 4, 3),
    "Fatigue": (4, 4, 3, 3),
    "Dizziness": (3, 2, 2, 2),
    "Pain in extremity": (4, 5, 3, 3),
    "Back pain": (2, 3, 2, 2),
    "Arthralgia": (3, 3, 2, 2),
    "Myalgia": (2, 2, 2, 1),
    "Seasonal allergy": (2, 1, 1, 1),
    "Conjunctivitis": (2, 2, 1, 1),
    "Otitis media": (1, 2, 1, 1),
    "Ear pain": (1, 1, 1, 0),
    "Influenza": (2, 3, 1, 2),
    "COVID-19": (3, 2, 2, 2),
    "Urticaria": (2, 1, 1, 0),
    "Papule": (1, 0, 1, 0),
    "Dry skin": (1, 1, 0, 1),
    "Eczema": (1, 1, 1, 0),
    "Enuresis": (1, 0, 1, 0),
    "Pollakiuria": (0, 1, 1, 0),
    "Dehydration": (1, 0, 1, 0),
    "Decreased appetite": (2, 1, 1, 1),
    "Sleep disorder": (1, 1, 0, 1),
    "Toothache": (1, 1, 1, 0),
    "Lymphadenopathy": (1, 0, 0, 1),
    "Thrombocytopenia": (1, 1, 0, 0),
    "Hypertension": (0, 1, 1, 0),
}

# (term, counts) of rows that are reported as serious; the remainder of
# each term's total stays under "other" so the merge path is exercised.
DMD_SERIOUS: dict[str, tuple[int, int, int, int]] = {
    "Liver injury": (1, 0, 1, 0),
    "Appendicitis": (1, 1, 1, 0),
    "Myocarditis": (1, 1, 0, 1),
    "Vomiting": (2, 0, 1, 0),
}

DMD_SOC = {
    "liver": "Investigations",
    "gastro": "Gastrointestinal disorders",
    "abdominal": "Gastrointestinal disorders",
    "respiratory": "Infections and infestations",
    "behavioral": "Psychiatric disorders",
    "trauma": "Injury, poisoning and procedural complications",
    "cardiac": "Investigations",
}

DMD_DESCRIPTORS = (
    "Duchenne muscular dystrophy",
    "Progressive proximal muscle weakness",
    "Ambulatory paediatric males",
)

# ---------------------------------------------------------------------------
# Narcolepsy demo study (NCT02348593): 12 PTs x 4 equal arms of 59.
# The single serious event is one Anxiety case in the 150 mg arm.
# ---------------------------------------------------------------------------

NARCO_ARMS = [
    ("EG000", "JZP-110 150 mg", 59),
    ("EG001", "JZP-110 300 mg", 59),
    ("EG002", "JZP-110 75 mg", 59),
    ("EG003", "Placebo", 59),
]

NARCO_COUNTS: dict[str, tuple[int, int, int, int]] = {
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

NARCO_SERIOUS: dict[str, tuple[int, int, int, int]] = {
    "Anxiety": (1, 0, 0, 0),
}

NARCO_SOC = {
    "Insomnia": "Psychiatric disorders",
    "Anxiety": "Psychiatric disorders",
    "Headache": "Nervous system disorders",
    "Dizziness": "Nervous system disorders",
    "Decreased appetite": "Metabolism and nutrition disorders",
    "Weight increased": "Investigations",
    "Weight decreased": "Investigations",
    "Heart rate increased": "Investigations",
    "Fatigue": "General disorders",
    "Nausea": "Gastrointestinal disorders",
    "Dyspepsia": "Gastrointestinal disorders",
    "Constipation": "Gastrointestinal disorders",
}

# ---------------------------------------------------------------------------
# Lymphoma demo study (NCT05008224): sequential design, unbalanced arms.
# ---------------------------------------------------------------------------

HODGKIN_ARMS = [
    ("EG000", "Pembrolizumab", 30),
    ("EG001", "AVD", 84),
    ("EG002", "escBEACOPP", 28),
]

HODGKIN_COUNTS: dict[str, tuple[int, int, int]] = {
    "Anaemia": (3, 30, 22),
    "Neutropenia": (1, 28, 24),
    "Febrile neutropenia": (0, 6, 12),
    "Thrombocytopenia": (1, 9, 16),
    "Bone marrow failure": (0, 2, 5),
    "Nausea": (4, 40, 18),
    "Vomiting": (2, 22, 12),
    "Fatigue": (6, 35, 15),
    "Pyrexia": (3, 12, 10),
    "Alopecia": (0, 30, 20),
    "Stomatitis": (1, 8, 9),
    "Hypothyroidism": (4, 2, 0),
    "Pneumonia": (1, 3, 2),
}

HODGKIN_SERIOUS: dict[str, tuple[int, int, int]] = {
    "Febrile neutropenia": (0, 4, 8),
    "Pneumonia": (1, 3, 2),
}


def event_entry(term: str, soc: str, counts, arms) -> dict:
    return {
        "term": term,
        "organSystem": soc,
        "sourceVocabulary": "MedDRA 26.0",
        "assessmentType": "SYSTEMATIC_ASSESSMENT",
        "stats": [
            {
                "groupId": arm_id,
                "numEvents": int(c),
                "numAffected": int(c),
                "numAtRisk": at_risk,
            }
            for (arm_id, _, at_risk), c in zip(arms, counts)
        ],
    }


def study_record(study_id, title, arms, other_counts, serious_counts, soc_of) -> dict:
    groups = []
    for i, (arm_id, arm_title, at_risk) in enumerate(arms):
        serious_total = sum(serious_counts.get(t, tuple([0] * len(arms)))[i] for t in other_counts)
        groups.append(
            {
                "id": arm_id,
                "title": arm_title,
                "deathsNumAffected": 0,
                "deathsNumAtRisk": at_risk,
                "seriousNumAffected": serious_total,
                "seriousNumAtRisk": at_risk,
                "otherNumAffected": 0,
                "otherNumAtRisk": at_risk,
            }
        )
    serious_events = [
        event_entry(term, soc_of(term), counts, arms)
        for term, counts in serious_counts.items()
    ]
    other_events = []
    for term, total in other_counts.items():
        serious = serious_counts.get(term, tuple([0] * len(arms)))
        other = tuple(t - s for t, s in zip(total, serious))
        if any(c < 0 for c in other):
            raise ValueError(f"{term}: serious counts exceed totals")
        if any(c > 0 for c in other) or term not in serious_counts:
            other_events.append(event_entry(term, soc_of(term), other, arms))
    return {
        "protocolSection": {
            "identificationModule": {"nctId": study_id, "briefTitle": title}
        },
        "resultsSection": {
            "adverseEventsModule": {
                "frequencyThreshold": "0",
                "eventGroups": groups,
                "seriousEvents": serious_events,
                "otherEvents": other_events,
            }
        },
    }


def dmd_record() -> dict:
    other: dict[str, tuple[int, int, int, int]] = {}
    soc: dict[str, str] = {}
    for group, members in DMD_GROUPS.items():
        for term, counts in members.items():
            other[term] = counts
            soc[term] = DMD_SOC[group]
    for term, counts in DMD_UNGROUPED.items():
        other[term] = counts
        soc[term] = "General disorders"
    return study_record(
        "NCT05096221",
        "Gene Transfer Therapy Study in Duchenne Muscular Dystrophy",
        DMD_ARMS,
        other,
        DMD_SERIOUS,
        lambda t: soc[t],
    )


def narcolepsy_record() -> dict:
    return study_record(
        "NCT02348593",
        "Twelve-week Study of JZP-110 in the Treatment of Narcolepsy",
        NARCO_ARMS,
        NARCO_COUNTS,
        NARCO_SERIOUS,
        lambda t: NARCO_SOC[t],
    )


def hodgkin_record() -> dict:
    return study_record(
        "NCT05008224",
        "Sequential Pembrolizumab and Chemotherapy in Classical Hodgkin Lymphoma",
        HODGKIN_ARMS,
        HODGKIN_COUNTS,
        HODGKIN_SERIOUS,
        lambda t: "Blood and lymphatic system disorders",
    )


# ---------------------------------------------------------------------------
# Reference embedding store
# ---------------------------------------------------------------------------


def fibonacci_sphere(n: int, radius: float) -> np.ndarray:
    """n well-spread points on a 3-sphere surface (deterministic)."""
    golden = (1 + 5**0.5) / 2
    points = np.zeros((n, 3))
    for i in range(n):
        z = 1 - 2 * (i + 0.5) / n
        r = math.sqrt(max(0.0, 1 - z * z))
        theta = 2 * math.pi * i / golden
        points[i] = (r * math.cos(theta), r * math.sin(theta), z)
    return points * radius


def term_jitter(term: str, rng_seed: int = 20240501) -> np.ndarray:
    # Per-term deterministic jitter so the file regenerates identically.
    seed = abs(hash_term(term)) % (2**32)
    rng = np.random.default_rng(rng_seed + seed)
    vec = rng.normal(0, 1, EMBED_DIM)
    return vec / np.linalg.norm(vec) * JITTER_SCALE


def hash_term(term: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.blake2b(term.encode(), digest_size=4).digest(), "big")


def build_reference_embeddings() -> dict[str, np.ndarray]:
    vectors: dict[str, np.ndarray] = {}
    group_names = list(DMD_GROUPS)
    for g, group in enumerate(group_names):
        center = np.zeros(EMBED_DIM)
        center[g] = CENTER_SCALE
        for term in DMD_GROUPS[group]:
            vectors[term] = center + term_jitter(term)

    noise_terms = list(DMD_UNGROUPED)
    sphere = fibonacci_sphere(len(noise_terms), NOISE_RADIUS)
    for i, term in enumerate(noise_terms):
        vec = np.zeros(EMBED_DIM)
        vec[7:10] = sphere[i]
        vectors[term] = vec + term_jitter(term) * 0.4

    # Population descriptors: close to the musculoskeletal-trauma group,
    # pushed away from the acute-respiratory group.
    trauma_axis = group_names.index("trauma")
    resp_axis = group_names.index("respiratory")
    for k, descriptor in enumerate(DMD_DESCRIPTORS):
        vec = np.zeros(EMBED_DIM)
        vec[trauma_axis] = 3.0
        vec[resp_axis] = -1.0
        vectors[descriptor] = vec + term_jitter(descriptor) * (0.2 + 0.1 * k)
    return vectors


def write_embeddings(vectors: dict[str, np.ndarray], path: Path) -> None:
    lines = ["# reference term embeddings for the demo studies (dimension 16)"]
    for term in sorted(vectors, key=canonical_term):
        values = " ".join(f"{v:.6f}" for v in vectors[term])
        lines.append(f"{term}\t{values}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Verification against the real pipeline
# ---------------------------------------------------------------------------


def dmd_config(embedding_path: Path) -> RunConfig:
    return RunConfig(
        embedding_path=str(embedding_path),
        min_cluster_size=3,
        epsilon=EPSILON,
        variance_target=0.999,
        max_components=10,
        alpha=0.5,
        beta=0.5,
        descriptors=DMD_DESCRIPTORS,
    ).validate()


def verify(fixtures: Path) -> None:
    record = parse_study_json("NCT05096221", dmd_record())
    table = merge_serious_other(record)
    assert len(table.rows) == 72, len(table.rows)

    cfg = dmd_config(fixtures / "reference_embeddings.tsv")
    result = run_analysis(table, cfg)
    artifacts = result.artifacts

    clusters: dict[int, list[str]] = {}
    for point in artifacts.map_points:
        if not point.is_noise:
            clusters.setdefault(point.cluster_id, []).append(point.pt_name)
    member_sets = {cid: set(m) for cid, m in clusters.items()}
    n_clustered = sum(len(s) for s in member_sets.values())
    assert len(member_sets) == 7, f"expected 7 clusters, got {len(member_sets)}"
    assert n_clustered == 44, f"expected 44 clustered PTs, got {n_clustered}"
    assert len(artifacts.ungrouped_terms) == 28

    expected_groups = [set(m) for m in DMD_GROUPS.values()]
    for members in member_sets.values():
        assert members in expected_groups, f"unexpected cluster {sorted(members)}"

    liver_id = next(
        cid for cid, m in member_sets.items() if "Liver injury" in m
    )
    by_cluster_arm = {
        (s.cluster_id, s.arm_id): s.ebgm_cluster for s in artifacts.cluster_signals
    }
    for treated, placebo in (("EG000", "EG001"), ("EG002", "EG003")):
        t = by_cluster_arm[(liver_id, treated)]
        p = by_cluster_arm[(liver_id, placebo)]
        assert t > 1 > p, f"liver cluster {treated}={t} {placebo}={p}"
    ratios = {
        cid: by_cluster_arm[(cid, "EG002")] / by_cluster_arm[(cid, "EG003")]
        for cid in member_sets
    }
    assert max(ratios, key=ratios.get) == liver_id, ratios

    liver_evd = {
        p.pt_name: p.ebgm
        for p in artifacts.evd_points
        if p.cluster_id == liver_id and p.arm_id == "EG002"
    }
    top2 = sorted(liver_evd, key=liver_evd.get, reverse=True)[:2]
    assert set(top2) == {"Gamma-glutamyltransferase increased", "Blood bilirubin increased"}
    assert all(liver_evd[t] > 2 for t in top2), liver_evd

    store = EmbeddingStore.from_file(str(fixtures / "reference_embeddings.tsv"))
    scores = {
        s.pt_name: s.score
        for s in expectedness(DMD_DESCRIPTORS, table.pt_names(), store)
    }
    ordered = sorted(scores, key=scores.get)
    median = sorted(scores.values())[len(scores) // 2]
    assert scores["Nasopharyngitis"] < median and scores["Epistaxis"] < median
    trauma = set(DMD_GROUPS["trauma"])
    assert set(ordered[-len(trauma):]) == trauma, ordered[-len(trauma):]
    respiratory = set(DMD_GROUPS["respiratory"])
    assert set(ordered[: len(respiratory)]) == respiratory, ordered[: len(respiratory)]

    print(f"verified: 7 clusters / 44 clustered / 28 ungrouped; liver ratios {ratios[liver_id]:.2f}")


def main() -> None:
    cache = FIXTURES / "cache"
    cache.mkdir(parents=True, exist_ok=True)
    for study_id, record in (
        ("NCT05096221", dmd_record()),
        ("NCT02348593", narcolepsy_record()),
        ("NCT05008224", hodgkin_record()),
    ):
        body = json.dumps(record, indent=1).encode()
        header = b"# fetched 2026-08-01T00:00:00Z https://clinicaltrials.gov/api/v2/studies\n"
        (cache / f"{study_id}.json").write_bytes(header + body)

    write_embeddings(build_reference_embeddings(), FIXTURES / "reference_embeddings.tsv")

    narco = merge_serious_other(parse_study_json("NCT02348593", narcolepsy_record()))
    write_csv(narco, FIXTURES / "narcolepsy_incidence.csv")

    conf = "\n".join(
        [
            "# analysis parameters the demo fixtures are validated against",
            "cluster.min_cluster_size = 3",
            f"cluster.epsilon = {EPSILON}",
            "pca.variance_target = 0.999",
            "pca.max_components = 10",
            "prior.alpha = 0.5",
            "prior.beta = 0.5",
            "expectedness.descriptors = "
            + ", ".join(f'"{d}"' for d in DMD_DESCRIPTORS),
        ]
    )
    (FIXTURES / "dmd_analysis.conf").write_text(conf + "\n", encoding="utf-8")

    verify(FIXTURES)

    # Frontend fixtures: artifacts + incidence wire payloads of the DMD demo.
    FRONTEND_FIXTURES.mkdir(parents=True, exist_ok=True)
    record = parse_study_json("NCT05096221", dmd_record())
    table = merge_serious_other(record)
    cfg = dmd_config(FIXTURES / "reference_embeddings.tsv")
    result = run_analysis(table, cfg)
    (FRONTEND_FIXTURES / "dmd_artifacts.json").write_bytes(
        artifacts_json_bytes(result.artifacts)
    )
    (FRONTEND_FIXTURES / "dmd_incidence.json").write_text(
        json.dumps(table_to_dict(table), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(f"fixtures written under {FIXTURES} and {FRONTEND_FIXTURES}")


if __name__ == "__main__":
    main()
