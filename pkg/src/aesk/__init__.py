"""aesk — adverse-event safety review with a semantic term layer.

Builds per-arm shrinkage disproportionality (EBGM) from aggregated
incidence tables, groups Preferred Terms into semantic clusters over a
term-embedding store, scores indication expectedness, and assembles the
two review graphics (semantic map and expectedness-vs-disproportionality
plot) as deterministic datasets and SVG files.
"""

__version__ = "0.1.0"
