"""Cardinality computation for star predicate sets and star-to-star links.

Distinct-entity counts are sums of entity counts over the characteristic
sets containing the queried predicates and are exact on unmerged statistics.
Bag-mode estimates scale each CS by the average number of triples per
predicate (total occurrences over entity count). Link cardinalities sum CP
or FCP link counts the same way, scaled by the non-link predicates' averages
in bag mode. Values are exact rationals; round only for display.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .cs_builder import CpStatistics, DatasetStatistics
from .fed_linker import FcpStatistics

LinkStatistics = Union[CpStatistics, FcpStatistics]

BASIS_CS = "cs"
BASIS_CP = "cp"
BASIS_FCP = "fcp"


@dataclass
class CardinalityEstimate:
    value: Fraction
    exact: bool
    basis: str
    contributors: int = 0

    def rounded(self) -> int:
        return round_half_up(self.value)


def round_half_up(value: Fraction) -> int:
    return int((value + Fraction(1, 2)).__floor__())


def star_cardinality_distinct(P: Iterable[str], stats: DatasetStatistics) -> CardinalityEstimate:
    """Number of distinct entities carrying every predicate in P."""
    props = set(P)
    if not props:
        raise ValueError("predicate set must be non-empty")
    rows = stats.containing(props)
    total = sum(row.count for row in rows)
    return CardinalityEstimate(Fraction(total), not stats.merged, BASIS_CS, len(rows))


def star_cardinality_bag(P: Iterable[str], stats: DatasetStatistics) -> CardinalityEstimate:
    """Duplicate-aware star cardinality using per-predicate triple averages."""
    props = set(P)
    if not props:
        raise ValueError("predicate set must be non-empty")
    total = Fraction(0)
    rows = stats.containing(props)
    for row in rows:
        if row.count == 0:
            continue
        value = Fraction(row.count)
        for p in props:
            value *= Fraction(row.occurrences[p], row.count)
        total += value
    return CardinalityEstimate(total, False, BASIS_CS, len(rows))


def _matching_links(
    P_k: set[str], P_l: set[str], p: str, cps: Sequence[LinkStatistics]
) -> list[LinkStatistics]:
    return [
        entry
        for entry in cps
        if entry.cp.predicate == p
        and P_k <= set(entry.cp.source_cs.properties)
        and P_l <= set(entry.cp.target_cs.properties)
    ]


def link_cardinality_distinct(
    P_k: Iterable[str], P_l: Iterable[str], p: str, cps: Sequence[LinkStatistics]
) -> CardinalityEstimate:
    """Distinct join pairs between two stars connected by predicate p."""
    source, target = set(P_k), set(P_l)
    if p not in source:
        raise ValueError("link predicate must belong to the source star")
    matched = _matching_links(source, target, p, cps)
    total = sum(entry.count for entry in matched)
    exact = all(getattr(entry, "exact", True) for entry in matched)
    basis = BASIS_FCP if any(isinstance(e, FcpStatistics) for e in matched) else BASIS_CP
    return CardinalityEstimate(Fraction(total), exact, basis, len(matched))


def link_cardinality_bag(
    P_k: Iterable[str],
    P_l: Iterable[str],
    p: str,
    cps: Sequence[LinkStatistics],
    stats_src: DatasetStatistics,
    stats_dst: DatasetStatistics,
) -> CardinalityEstimate:
    """Duplicate-aware link cardinality.

    The link predicate is excluded from the source-side product because the
    link count already covers those triples; every target predicate
    contributes its average.
    """
    source, target = set(P_k), set(P_l)
    if p not in source:
        raise ValueError("link predicate must belong to the source star")
    matched = _matching_links(source, target, p, cps)
    total = Fraction(0)
    for entry in matched:
        src_row = stats_src.lookup(entry.cp.source_cs)
        dst_row = stats_dst.lookup(entry.cp.target_cs)
        if src_row is None or dst_row is None or src_row.count == 0 or dst_row.count == 0:
            continue
        value = Fraction(entry.count)
        for pk in source - {p}:
            value *= Fraction(src_row.occurrences[pk], src_row.count)
        for pl in target:
            value *= Fraction(dst_row.occurrences[pl], dst_row.count)
        total += value
    basis = BASIS_FCP if any(isinstance(e, FcpStatistics) for e in matched) else BASIS_CP
    return CardinalityEstimate(total, False, basis, len(matched))
