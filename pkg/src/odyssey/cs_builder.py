"""Characteristic-set and characteristic-pair statistics for one dataset.

A characteristic set (CS) is the exact set of predicates attached to a
subject; subjects sharing a CS are aggregated into one CsStatistics row with
an entity count and per-predicate triple totals. A characteristic pair (CP)
records how many triples link subjects of one CS to subjects of another CS
via a given predicate. ``merge_to_budget`` caps the number of CSs, folding
low-count CSs into kept ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .rdf_model import BLANK, IRI, Dataset, Term, scan_by_subject


class InvalidBudget(ValueError):
    pass


@dataclass(frozen=True)
class CharacteristicSet:
    """A sorted, duplicate-free set of predicate IRIs."""

    properties: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.properties:
            raise ValueError("characteristic set cannot be empty")
        if list(self.properties) != sorted(set(self.properties)):
            raise ValueError("properties must be sorted and unique")

    @staticmethod
    def of(properties: Iterable[str]) -> "CharacteristicSet":
        return CharacteristicSet(tuple(sorted(set(properties))))

    def __contains__(self, prop: str) -> bool:
        return prop in self.properties

    def contains_all(self, props: Iterable[str]) -> bool:
        return set(props) <= set(self.properties)

    def __len__(self) -> int:
        return len(self.properties)


@dataclass
class CsStatistics:
    cs: CharacteristicSet
    count: int
    occurrences: dict[str, int]


@dataclass(frozen=True)
class CharacteristicPair:
    source_cs: CharacteristicSet
    target_cs: CharacteristicSet
    predicate: str

    def __post_init__(self) -> None:
        if self.predicate not in self.source_cs:
            raise ValueError("link predicate must belong to the source characteristic set")


@dataclass
class CpStatistics:
    cp: CharacteristicPair
    count: int


# Routing of a raw (pre-merge) property set to the kept CSs it merged into:
# one (index, covered properties) entry, or two for a split CS.
Routing = dict[tuple[str, ...], tuple[tuple[int, frozenset[str]], ...]]


@dataclass
class DatasetStatistics:
    """CS and CP statistics of one dataset, in canonical order.

    ``routing`` is populated by ``merge_to_budget`` and maps each original
    property set to the kept CS entries absorbing it; it is in-memory only
    (not serialized) and identity-like when ``merged`` is false.
    """

    dataset_id: str
    cs_stats: list[CsStatistics]
    cp_stats: list[CpStatistics] = field(default_factory=list)
    merged: bool = False
    cs_budget: int | None = None
    routing: Routing | None = None

    def __post_init__(self) -> None:
        self.cs_stats.sort(key=lambda s: s.cs.properties)
        self._index = {s.cs.properties: i for i, s in enumerate(self.cs_stats)}
        if len(self._index) != len(self.cs_stats):
            raise ValueError("duplicate characteristic sets")
        self._sort_cps()

    def _sort_cps(self) -> None:
        self.cp_stats.sort(
            key=lambda c: (c.cp.source_cs.properties, c.cp.target_cs.properties, c.cp.predicate)
        )

    def cs_index(self, cs: CharacteristicSet) -> int:
        return self._index[cs.properties]

    def by_index(self, i: int) -> CsStatistics:
        return self.cs_stats[i]

    def lookup(self, cs: CharacteristicSet) -> CsStatistics | None:
        i = self._index.get(cs.properties)
        return None if i is None else self.cs_stats[i]

    def containing(self, props: Iterable[str]) -> list[CsStatistics]:
        """The CS rows whose property set includes all of ``props``."""
        wanted = set(props)
        return [s for s in self.cs_stats if wanted <= set(s.cs.properties)]

    def route(self, props: Iterable[str]) -> tuple[tuple[int, frozenset[str]], ...]:
        """Kept CS entries for a raw subject property set."""
        key = tuple(sorted(set(props)))
        if self.routing is not None:
            return self.routing[key]
        return ((self._index[key], frozenset(key)),)


def build_cs(d: Dataset) -> DatasetStatistics:
    """One CsStatistics row per distinct subject property set."""
    counts: dict[tuple[str, ...], int] = {}
    occurrences: dict[tuple[str, ...], dict[str, int]] = {}
    for _, triples in scan_by_subject(d):
        props = tuple(sorted({t.predicate.lexical for t in triples}))
        counts[props] = counts.get(props, 0) + 1
        occ = occurrences.setdefault(props, {})
        for t in triples:
            occ[t.predicate.lexical] = occ.get(t.predicate.lexical, 0) + 1
    rows = [
        CsStatistics(CharacteristicSet(props), counts[props], occurrences[props])
        for props in counts
    ]
    return DatasetStatistics(d.id, rows)


def build_cp(d: Dataset, stats: DatasetStatistics) -> list[CpStatistics]:
    """Count link triples whose object is itself a subject of the dataset.

    Blank-node subjects participate like IRIs: a link onto a blank subject of
    the same dataset is a real join partner for star queries, so it must be
    visible to CP-based source pruning.
    """
    if stats.merged:
        raise ValueError("characteristic pairs must be built from unmerged statistics")
    subject_cs: dict[Term, CharacteristicSet] = {}
    for subject, triples in scan_by_subject(d):
        subject_cs[subject] = CharacteristicSet.of(t.predicate.lexical for t in triples)
    counts: dict[tuple[tuple[str, ...], tuple[str, ...], str], int] = {}
    for t in d.triples:
        target = subject_cs.get(t.object)
        if target is None:
            continue
        key = (subject_cs[t.subject].properties, target.properties, t.predicate.lexical)
        counts[key] = counts.get(key, 0) + 1
    cps = [
        CpStatistics(
            CharacteristicPair(CharacteristicSet(src), CharacteristicSet(dst), pred), n
        )
        for (src, dst, pred), n in counts.items()
    ]
    cps.sort(key=lambda c: (c.cp.source_cs.properties, c.cp.target_cs.properties, c.cp.predicate))
    return cps


def build_statistics(d: Dataset) -> DatasetStatistics:
    """Full per-dataset statistics: CS rows plus CP link counts."""
    stats = build_cs(d)
    stats.cp_stats = build_cp(d, stats)
    stats._sort_cps()
    return stats


# --- CS budget merging ----------------------------------------------------


def merge_to_budget(stats: DatasetStatistics, budget: int) -> DatasetStatistics:
    """Reduce the CS count to at most ``budget``.

    The budget CSs with the largest entity counts are kept. Every removed CS
    is folded into the kept superset with the fewest properties; failing
    that, it is split into two disjoint parts that each have a kept superset;
    anything still unmergeable lands in a catch-all CS holding the union of
    the residual property sets (reserving one budget slot). Splits register
    their entities under both parts, so single-part containment queries stay
    accurate at the price of inflating the total entity count.
    """
    if budget < 1:
        raise InvalidBudget(f"budget must be >= 1, got {budget}")
    if len(stats.cs_stats) <= budget:
        return stats
    merged = _merge_with_kept(stats, budget, catch_all=False)
    if merged is None:
        merged = _merge_with_kept(stats, budget - 1, catch_all=True)
        assert merged is not None
    merged.cs_budget = budget
    return merged


def _best_superset(part: frozenset[str], kept: list[CsStatistics]) -> int | None:
    best: int | None = None
    for i, row in enumerate(kept):
        if part <= set(row.cs.properties):
            if best is None or (len(row.cs.properties), row.cs.properties) < (
                len(kept[best].cs.properties),
                kept[best].cs.properties,
            ):
                best = i
    return best


def _merge_with_kept(
    stats: DatasetStatistics, n_keep: int, catch_all: bool
) -> DatasetStatistics | None:
    order = sorted(stats.cs_stats, key=lambda s: (-s.count, s.cs.properties))
    kept, removed = order[:n_keep], order[n_keep:]
    kept_search = sorted(kept, key=lambda s: (len(s.cs.properties), s.cs.properties))

    # target slot -> (count delta, occurrence deltas)
    additions: dict[int, tuple[int, dict[str, int]]] = {}
    slot_routes: dict[tuple[str, ...], tuple[tuple[CsStatistics, frozenset[str]], ...]] = {}
    residuals: list[CsStatistics] = []

    def add_into(row: CsStatistics, source: CsStatistics, covered: frozenset[str]) -> None:
        slot = id(row)
        count, occ = additions.get(slot, (0, {}))
        count += source.count
        for p in covered:
            occ[p] = occ.get(p, 0) + source.occurrences[p]
        additions[slot] = (count, occ)

    for row in kept:
        slot_routes[row.cs.properties] = ((row, frozenset(row.cs.properties)),)

    for row in removed:
        props = frozenset(row.cs.properties)
        dest = _best_superset(props, kept_search)
        if dest is not None:
            target = kept_search[dest]
            add_into(target, row, props)
            slot_routes[row.cs.properties] = ((target, props),)
            continue
        split = _find_split(props, kept_search)
        if split is not None:
            (t1, part1), (t2, part2) = split
            add_into(t1, row, part1)
            add_into(t2, row, part2)
            slot_routes[row.cs.properties] = ((t1, part1), (t2, part2))
            continue
        if not catch_all:
            return None
        residuals.append(row)

    new_rows: list[CsStatistics] = []
    for row in kept:
        count, occ_delta = additions.get(id(row), (0, {}))
        occ = dict(row.occurrences)
        for p, n in occ_delta.items():
            occ[p] = occ.get(p, 0) + n
        new_rows.append(CsStatistics(row.cs, row.count + count, occ))

    catch_row: CsStatistics | None = None
    if residuals:
        union = sorted({p for r in residuals for p in r.cs.properties})
        occ: dict[str, int] = {p: 0 for p in union}
        total = 0
        for r in residuals:
            total += r.count
            for p, n in r.occurrences.items():
                occ[p] += n
        catch_row = CsStatistics(CharacteristicSet(tuple(union)), total, occ)
        new_rows.append(catch_row)
        for r in residuals:
            slot_routes[r.cs.properties] = ((catch_row, frozenset(r.cs.properties)),)

    result = DatasetStatistics(stats.dataset_id, new_rows, merged=True)
    routing: Routing = {}
    for props, entries in slot_routes.items():
        routing[props] = tuple(
            (result.cs_index(row.cs), covered) for row, covered in entries
        )
    result.routing = routing
    result.cp_stats = _rewrite_cps(stats.cp_stats, result, routing)
    result._sort_cps()
    return result


def _find_split(
    props: frozenset[str], kept_search: list[CsStatistics]
) -> tuple[tuple[CsStatistics, frozenset[str]], tuple[CsStatistics, frozenset[str]]] | None:
    for row in kept_search:
        part1 = props & set(row.cs.properties)
        if not part1 or part1 == props:
            continue
        part2 = props - part1
        second = _best_superset(part2, kept_search)
        if second is None:
            continue
        first = _best_superset(part1, kept_search)
        assert first is not None
        return (kept_search[first], part1), (kept_search[second], part2)
    return None


def _rewrite_cps(
    cps: Sequence[CpStatistics], result: DatasetStatistics, routing: Routing
) -> list[CpStatistics]:
    # Sources follow the part holding the link predicate; targets follow every
    # part, biasing link pruning toward keeping sources rather than losing them.
    counts: dict[tuple[int, int, str], int] = {}
    for cp in cps:
        pred = cp.cp.predicate
        src_idx = next(
            idx for idx, covered in routing[cp.cp.source_cs.properties] if pred in covered
        )
        for dst_idx, _ in routing[cp.cp.target_cs.properties]:
            key = (src_idx, dst_idx, pred)
            counts[key] = counts.get(key, 0) + cp.count
    out = []
    for (src_idx, dst_idx, pred), n in counts.items():
        pair = CharacteristicPair(result.by_index(src_idx).cs, result.by_index(dst_idx).cs, pred)
        out.append(CpStatistics(pair, n))
    return out


# --- JSON statistics file -------------------------------------------------


def stats_to_dict(stats: DatasetStatistics) -> dict:
    """Canonical statistics document: CS array in canonical order, CPs by index."""
    return {
        "dataset_id": stats.dataset_id,
        "merged": stats.merged,
        "cs": [
            {"props": list(s.cs.properties), "count": s.count, "occ": dict(sorted(s.occurrences.items()))}
            for s in stats.cs_stats
        ],
        "cp": [
            {
                "src": stats.cs_index(c.cp.source_cs),
                "dst": stats.cs_index(c.cp.target_cs),
                "pred": c.cp.predicate,
                "count": c.count,
            }
            for c in stats.cp_stats
        ],
    }


def stats_from_dict(doc: dict) -> DatasetStatistics:
    rows = [
        CsStatistics(CharacteristicSet(tuple(entry["props"])), entry["count"], dict(entry["occ"]))
        for entry in doc["cs"]
    ]
    stats = DatasetStatistics(doc["dataset_id"], rows, merged=doc["merged"])
    by_position = [CharacteristicSet(tuple(entry["props"])) for entry in doc["cs"]]
    cps = []
    for entry in doc["cp"]:
        pair = CharacteristicPair(by_position[entry["src"]], by_position[entry["dst"]], entry["pred"])
        cps.append(CpStatistics(pair, entry["count"]))
    stats.cp_stats = cps
    stats._sort_cps()
    return stats
