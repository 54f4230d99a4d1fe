"""Preferred-term string canonicalization.

One rule for the whole package: matching is whitespace-collapsed and
case-folded, display keeps the original casing. Incidence tables and the
embedding store must agree on this, otherwise joins silently miss.
"""

from __future__ import annotations


def display_term(raw: str) -> str:
    """Trim and collapse internal whitespace, preserving case."""
    return " ".join(raw.split())


def canonical_term(raw: str) -> str:
    """Matching key for a term: collapsed whitespace, case-folded."""
    return display_term(raw).casefold()
