"""Shrinkage disproportionality per arm: expected counts, EBGM, intervals.

The background is internal to the trial: a PT's expected count in an arm
is the arm size times the pooled across-arm incidence of that PT, so
arms are compared against the whole study rather than an external rate.
Point estimates use gamma-prior stabilization, (n + alpha)/(E + beta),
whose conjugate posterior Gamma(alpha + n, rate beta + E) has exactly
that mean; interval endpoints are quantiles of that posterior.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

from scipy.stats import gamma as gamma_dist

from .clustering import ClusterAssignment
from .errors import EmptyCluster, InvalidLevel, KeyMismatch
from .ingest import IncidenceTable
from .terms import canonical_term


@dataclass(frozen=True)
class PriorConfig:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("prior alpha and beta must be positive")


@dataclass(frozen=True)
class PtSignal:
    pt_name: str
    arm_id: str
    n: int
    at_risk: int
    expected: float
    ebgm: float
    variance: float
    weight: float
    ci90: tuple[float, float]
    degenerate: bool = False  # PT absent everywhere: EBGM pinned at alpha/beta


@dataclass(frozen=True)
class ClusterSignal:
    cluster_id: int
    cluster_label: str
    arm_id: str
    ebgm_cluster: float
    member_count: int


def expected_counts(table: IncidenceTable, pt_name: str) -> list[float]:
    """Per-arm expected counts: N_i times the pooled incidence of the PT.

    Aligned with ``table.arms``; the per-PT totals are conserved, i.e.
    the expected counts sum to the observed total.
    """
    row = table.row(pt_name)
    total_n = sum(c.n_affected for c in row.counts)
    total_at_risk = sum(a.n_at_risk for a in table.arms)
    if total_at_risk <= 0:
        raise ValueError("table has no subjects at risk")
    rate = total_n / total_at_risk
    return [a.n_at_risk * rate for a in table.arms]


def posterior_interval(
    n: int,
    expected: float,
    prior: PriorConfig,
    levels: Sequence[float] = (0.05, 0.95),
) -> tuple[float, ...]:
    """Quantiles of the relative-risk posterior Gamma(alpha+n, rate beta+E)."""
    if expected < 0:
        raise ValueError("expected count must be >= 0")
    for level in levels:
        if not 0 < level < 1:
            raise InvalidLevel(f"quantile level {level} outside (0, 1)")
    shape = prior.alpha + n
    rate = prior.beta + expected
    return tuple(float(gamma_dist.ppf(level, a=shape, scale=1.0 / rate)) for level in levels)


def ebgm(
    table: IncidenceTable,
    prior: PriorConfig,
    levels: Sequence[float] = (0.05, 0.95),
) -> list[PtSignal]:
    """One signal per (PT, arm), in table row-major order.

    EBGM = (n + alpha)/(E + beta); Var = EBGM^2/(n + alpha) with the same
    alpha; weight = 1/Var. A PT with zero events everywhere has E = 0 and
    is kept with EBGM = alpha/beta, flagged degenerate.
    """
    if len(levels) < 2:
        raise InvalidLevel("need at least two levels for the ci90 field")
    signals: list[PtSignal] = []
    for row in table.rows:
        expected = expected_counts(table, row.pt_name)
        row_total = sum(c.n_affected for c in row.counts)
        for count, e_i in zip(row.counts, expected):
            point = (count.n_affected + prior.alpha) / (e_i + prior.beta)
            variance = point * point / (count.n_affected + prior.alpha)
            ci = posterior_interval(count.n_affected, e_i, prior, levels)
            signals.append(
                PtSignal(
                    pt_name=row.pt_name,
                    arm_id=count.arm_id,
                    n=count.n_affected,
                    at_risk=count.n_at_risk,
                    expected=e_i,
                    ebgm=point,
                    variance=variance,
                    weight=1.0 / variance,
                    ci90=(ci[0], ci[-1]),
                    degenerate=row_total == 0,
                )
            )
    return signals


def cluster_ebgm(
    signals: Sequence[PtSignal],
    assignments: Sequence[ClusterAssignment],
) -> list[ClusterSignal]:
    """Precision-weighted mean of member EBGMs, per cluster and arm.

    Weights are arm-local (each arm's own n and EBGM); NOISE terms take
    no part. The result is a convex combination of member EBGMs.
    """
    members: dict[int, list[str]] = {}
    labels: dict[int, str] = {}
    for a in assignments:
        if a.is_noise:
            continue
        members.setdefault(a.cluster_id, []).append(canonical_term(a.pt_name))
        labels[a.cluster_id] = a.cluster_label

    by_key: dict[tuple[str, str], PtSignal] = {}
    arm_order: list[str] = []
    for s in signals:
        if s.arm_id not in arm_order:
            arm_order.append(s.arm_id)
        by_key[(canonical_term(s.pt_name), s.arm_id)] = s

    out: list[ClusterSignal] = []
    for cid in sorted(members):
        terms = members[cid]
        if not terms:
            raise EmptyCluster(f"cluster {cid} has no members")
        for arm_id in arm_order:
            num = 0.0
            den = 0.0
            for term in terms:
                s = by_key.get((term, arm_id))
                if s is None:
                    raise KeyMismatch(f"no signal for {term!r} in arm {arm_id}")
                num += s.weight * s.ebgm
                den += s.weight
            out.append(
                ClusterSignal(cid, labels.get(cid, ""), arm_id, num / den, len(terms))
            )
    return out


def signals_to_csv(signals: Sequence[PtSignal], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "pt_name",
                "arm_id",
                "n",
                "at_risk",
                "expected",
                "ebgm",
                "variance",
                "weight",
                "ci_low",
                "ci_high",
            ]
        )
        for s in signals:
            writer.writerow(
                [
                    s.pt_name,
                    s.arm_id,
                    s.n,
                    s.at_risk,
                    repr(s.expected),
                    repr(s.ebgm),
                    repr(s.variance),
                    repr(s.weight),
                    repr(s.ci90[0]),
                    repr(s.ci90[1]),
                ]
            )


def cluster_signals_to_csv(
    cluster_signals: Sequence[ClusterSignal], path: str | os.PathLike
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cluster_id", "label", "arm_id", "ebgm_cluster", "member_count"])
        for s in cluster_signals:
            writer.writerow(
                [s.cluster_id, s.cluster_label, s.arm_id, repr(s.ebgm_cluster), s.member_count]
            )
