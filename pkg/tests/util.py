"""Small builders shared by the test modules."""

from __future__ import annotations

from aesk.ingest import Arm, ArmCount, IncidenceRow, IncidenceTable


def make_table(
    counts_by_pt: dict[str, list[int]],
    at_risks: list[int],
    study_id: str = "NCT99999999",
) -> IncidenceTable:
    arms = tuple(
        Arm(f"A{i}", f"Arm {i}", at_risk) for i, at_risk in enumerate(at_risks)
    )
    rows = tuple(
        IncidenceRow(
            pt,
            tuple(
                ArmCount(arm.arm_id, arm.arm_title, counts[i], arm.n_at_risk)
                for i, arm in enumerate(arms)
            ),
        )
        for pt in sorted(counts_by_pt, key=str.casefold)
        for counts in [counts_by_pt[pt]]
    )
    return IncidenceTable(study_id, arms, rows)
