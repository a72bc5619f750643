"""Source selection, star-local pattern ordering, and join ordering.

Sources are pruned by containment: a dataset is relevant for a star only if
one of its characteristic sets includes every star predicate, and a dataset
pair supports an inter-star link only if a CP or FCP matches both stars and
the link predicate. Pruning can overestimate but never drops a dataset that
contributes to the answer. Join ordering treats each star as a meta-node and
runs exact dynamic programming over connected subsets, costing a plan by its
result size plus all transferred intermediate results; a subtree whose stars
are single-sourced at one endpoint ships only its result.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

from .cs_builder import CharacteristicSet, CpStatistics, DatasetStatistics
from .estimator import (
    link_cardinality_bag,
    link_cardinality_distinct,
    star_cardinality_bag,
    star_cardinality_distinct,
)
from .fed_linker import FcpStatistics, FederationStatistics
from .query_model import StarGraph, StarLink, StarSubquery
from .rdf_model import TriplePattern, Variable


@dataclass
class LinkSupport:
    """One CP or FCP entry backing a link for a concrete dataset pair."""

    source_dataset: str
    target_dataset: str
    stat: Union[CpStatistics, FcpStatistics]


@dataclass
class SourceSelection:
    star_sources: list[dict[str, list[CharacteristicSet]]]
    link_support: dict[StarLink, list[LinkSupport]]
    empty_result: bool = False
    empty_stars: list[int] = field(default_factory=list)

    def sources_of(self, star_index: int) -> list[str]:
        return sorted(self.star_sources[star_index])

    def nss(self, sg: StarGraph) -> int:
        return sum(
            len(self.star_sources[i]) * len(star.patterns) for i, star in enumerate(sg.stars)
        )


def _link_entries(
    link: StarLink, sg: StarGraph, fed: FederationStatistics
) -> list[LinkSupport]:
    p_k = set(sg.stars[link.source].predicates)
    p_l = set(sg.stars[link.target].predicates)
    entries: list[LinkSupport] = []
    for ds_id in fed.dataset_ids():
        for cp in fed.datasets[ds_id].cp_stats:
            if (
                cp.cp.predicate == link.predicate
                and p_k <= set(cp.cp.source_cs.properties)
                and p_l <= set(cp.cp.target_cs.properties)
            ):
                entries.append(LinkSupport(ds_id, ds_id, cp))
    for (src_ds, dst_ds), fcps in sorted(fed.fcps.items()):
        for f in fcps:
            if (
                f.cp.predicate == link.predicate
                and p_k <= set(f.cp.source_cs.properties)
                and p_l <= set(f.cp.target_cs.properties)
            ):
                entries.append(LinkSupport(src_ds, dst_ds, f))
    return entries


def select_sources(sg: StarGraph, fed: FederationStatistics) -> SourceSelection:
    """Relevant datasets per star and supporting CP/FCP entries per link.

    Star selections are iterated to a fixpoint against the link support: a
    dataset stays selected for a star only while every incident link still
    has a supporting entry pairing it with a selected counterpart.
    """
    star_sources: list[dict[str, list[CharacteristicSet]]] = []
    for star in sg.stars:
        per_ds: dict[str, list[CharacteristicSet]] = {}
        for ds_id in fed.dataset_ids():
            rows = fed.datasets[ds_id].containing(star.predicates)
            if rows:
                per_ds[ds_id] = [r.cs for r in rows]
        star_sources.append(per_ds)

    links = [l for l in sg.links if l.source != l.target]
    support = {link: _link_entries(link, sg, fed) for link in links}

    changed = True
    while changed:
        changed = False
        for link in links:
            entries = [
                e
                for e in support[link]
                if e.source_dataset in star_sources[link.source]
                and e.target_dataset in star_sources[link.target]
            ]
            support[link] = entries
            src_ok = {e.source_dataset for e in entries}
            dst_ok = {e.target_dataset for e in entries}
            for ds in list(star_sources[link.source]):
                if ds not in src_ok:
                    del star_sources[link.source][ds]
                    changed = True
            for ds in list(star_sources[link.target]):
                if ds not in dst_ok:
                    del star_sources[link.target][ds]
                    changed = True

    empty_stars = [i for i, per_ds in enumerate(star_sources) if not per_ds]
    return SourceSelection(
        star_sources=star_sources,
        link_support=support,
        empty_result=bool(empty_stars),
        empty_stars=empty_stars,
    )


def order_star(
    star: StarSubquery, stats_list: Sequence[DatasetStatistics]
) -> list[TriplePattern]:
    """Greedy pattern order: repeatedly push out the pattern whose removal
    leaves the cheapest distinct-count subquery; ties prefer excluding the
    smallest pattern label."""
    current = list(star.patterns)
    tail: list[TriplePattern] = []

    def subset_card(patterns: list[TriplePattern]) -> Fraction:
        props = {p.predicate.lexical for p in patterns}
        return sum(
            (star_cardinality_distinct(props, stats).value for stats in stats_list),
            Fraction(0),
        )

    while len(current) > 1:
        best: tuple[Fraction, int] | None = None
        best_excluded: TriplePattern | None = None
        for excluded in current:
            subset = [p for p in current if p is not excluded]
            key = (subset_card(subset), excluded.label)
            if best is None or key < best:
                best = key
                best_excluded = excluded
        assert best_excluded is not None
        tail.append(best_excluded)
        current = [p for p in current if p is not best_excluded]
    return current + list(reversed(tail))


# --- plan nodes -------------------------------------------------------------


@dataclass
class PlanLeaf:
    star_index: int
    star: StarSubquery
    ordered_patterns: list[TriplePattern]
    sources: list[str]
    est_card: Fraction = Fraction(0)
    cost: Fraction = Fraction(0)
    endpoint_assignment: str | None = None
    n_remote: int = 1
    leaf_seq: tuple[int, ...] = ()

    def variables(self) -> set[Variable]:
        return self.star.variables()


@dataclass
class PlanJoin:
    left: "PlanNode"
    right: "PlanNode"
    join_vars: frozenset[Variable]
    cartesian: bool = False
    est_card: Fraction = Fraction(0)
    cost: Fraction = Fraction(0)
    endpoint_assignment: str | None = None
    n_remote: int = 2
    leaf_seq: tuple[int, ...] = ()

    def variables(self) -> set[Variable]:
        return self.left.variables() | self.right.variables()


PlanNode = Union[PlanLeaf, PlanJoin]


def plan_cost(node: PlanNode, weights: dict[str, Fraction] | None = None) -> Fraction:
    """Result size of the node plus all transferred intermediate results.

    A subtree assigned wholly to one endpoint transfers only its result, so
    it contributes its estimated cardinality alone; everything else adds its
    children's costs on top of its own result size.
    """
    weights = weights or {}
    if isinstance(node, PlanLeaf):
        return node.cost
    if node.endpoint_assignment is not None:
        return node.est_card * weights.get(node.endpoint_assignment, Fraction(1))
    return node.est_card + plan_cost(node.left, weights) + plan_cost(node.right, weights)


# --- cardinality model over star subsets ------------------------------------


class _CardModel:
    """Deterministic cardinality for any star subset.

    Singletons use star statistics; larger subsets multiply the member
    cardinalities by one selectivity factor per link (pair link count over
    the product of the pair's cardinalities). Star pairs connected only
    through shared non-center variables fall back to min(left, right).
    """

    def __init__(
        self,
        sg: StarGraph,
        sel: SourceSelection,
        fed: FederationStatistics,
        distinct: bool,
    ):
        self.sg = sg
        self.sel = sel
        self.fed = fed
        self.distinct = distinct
        self._star_cards: dict[int, Fraction] = {}
        self._memo: dict[frozenset[int], Fraction] = {}

    def star_card(self, i: int) -> Fraction:
        if i not in self._star_cards:
            star = self.sg.stars[i]
            total = Fraction(0)
            for ds_id in self.sel.sources_of(i):
                stats = self.fed.datasets[ds_id]
                if self.distinct:
                    total += star_cardinality_distinct(star.predicates, stats).value
                else:
                    total += star_cardinality_bag(star.predicates, stats).value
            self._star_cards[i] = total
        return self._star_cards[i]

    def link_card(self, link: StarLink) -> Fraction:
        p_k = self.sg.stars[link.source].predicates
        p_l = self.sg.stars[link.target].predicates
        entries = self.sel.link_support.get(link, [])
        by_pair: dict[tuple[str, str], list] = {}
        for e in entries:
            by_pair.setdefault((e.source_dataset, e.target_dataset), []).append(e.stat)
        total = Fraction(0)
        for (src_ds, dst_ds) in sorted(by_pair):
            stats_pair = by_pair[(src_ds, dst_ds)]
            if self.distinct:
                total += link_cardinality_distinct(p_k, p_l, link.predicate, stats_pair).value
            else:
                total += link_cardinality_bag(
                    p_k,
                    p_l,
                    link.predicate,
                    stats_pair,
                    self.fed.datasets[src_ds],
                    self.fed.datasets[dst_ds],
                ).value
        return total

    def subset_card(self, subset: frozenset[int]) -> Fraction:
        if subset in self._memo:
            return self._memo[subset]
        members = sorted(subset)
        if len(members) == 1:
            value = self.star_card(members[0])
        else:
            value = Fraction(1)
            for i in members:
                card = self.star_card(i)
                if card == 0:
                    value = Fraction(0)
                    break
                value *= card
            if value != 0:
                for i, j in itertools.combinations(members, 2):
                    pair_links = self.sg.links_between(i, j) + self.sg.links_between(j, i)
                    if pair_links:
                        for link in pair_links:
                            value *= self.link_card(link) / (
                                self.star_card(link.source) * self.star_card(link.target)
                            )
                    elif self.sg.shared_variables(i, j):
                        low = min(self.star_card(i), self.star_card(j))
                        value *= low / (self.star_card(i) * self.star_card(j))
        self._memo[subset] = value
        return value


# --- dynamic-programming join ordering ---------------------------------------


@dataclass
class PlanResult:
    star_graph: StarGraph
    selection: SourceSelection
    root: PlanNode | None
    distinct: bool
    empty: bool = False
    dp_table: dict[tuple[int, ...], tuple[Fraction, Fraction]] = field(default_factory=dict)
    weights: dict[str, Fraction] = field(default_factory=dict)


def _make_leaf(
    i: int,
    sg: StarGraph,
    sel: SourceSelection,
    fed: FederationStatistics,
    model: _CardModel,
    weights: dict[str, Fraction],
) -> PlanLeaf:
    star = sg.stars[i]
    sources = sel.sources_of(i)
    ordered = order_star(star, [fed.datasets[ds] for ds in sources])
    est = model.star_card(i)
    cost = sum(
        (
            _per_source_card(star, fed.datasets[ds], model.distinct)
            * weights.get(ds, Fraction(1))
            for ds in sources
        ),
        Fraction(0),
    )
    return PlanLeaf(
        star_index=i,
        star=star,
        ordered_patterns=ordered,
        sources=sources,
        est_card=est,
        cost=cost,
        endpoint_assignment=sources[0] if len(sources) == 1 else None,
        n_remote=max(len(sources), 1),
        leaf_seq=(i,),
    )


def _per_source_card(star: StarSubquery, stats: DatasetStatistics, distinct: bool) -> Fraction:
    if distinct:
        return star_cardinality_distinct(star.predicates, stats).value
    return star_cardinality_bag(star.predicates, stats).value


def _colocated_endpoint(subset: frozenset[int], sel: SourceSelection) -> str | None:
    endpoints = set()
    for i in subset:
        sources = sel.sources_of(i)
        if len(sources) != 1:
            return None
        endpoints.add(sources[0])
    return endpoints.pop() if len(endpoints) == 1 else None


def _cross_connected(a: frozenset[int], b: frozenset[int], sg: StarGraph) -> bool:
    return any(sg.connected(i, j) for i in a for j in b)


def _candidate_key(node: PlanNode) -> tuple[Fraction, int, tuple[int, ...]]:
    return (node.cost, node.n_remote, node.leaf_seq)


def plan_joins(
    sg: StarGraph,
    sel: SourceSelection,
    fed: FederationStatistics,
    distinct: bool,
    weights: dict[str, Fraction] | None = None,
) -> PlanResult:
    """Optimal bushy join tree over the star meta-nodes.

    Exact DP over connected star subsets; ties prefer fewer remote requests,
    then the lexicographically smallest left-to-right star sequence.
    Disconnected components are planned independently and cartesian-joined
    in ascending cardinality order.
    """
    if not sg.stars:
        raise ValueError("cannot plan a query without stars")
    weights = weights or {}
    model = _CardModel(sg, sel, fed, distinct)
    if sel.empty_result:
        return PlanResult(sg, sel, None, distinct, empty=True, weights=weights)

    n = len(sg.stars)
    components = _components(sg, n)
    component_plans: list[PlanNode] = []
    dp_table: dict[tuple[int, ...], tuple[Fraction, Fraction]] = {}

    for component in components:
        best: dict[frozenset[int], PlanNode] = {}
        for i in sorted(component):
            leaf = _make_leaf(i, sg, sel, fed, model, weights)
            best[frozenset([i])] = leaf
            dp_table[(i,)] = (leaf.cost, leaf.est_card)
        members = sorted(component)
        for size in range(2, len(members) + 1):
            for combo in itertools.combinations(members, size):
                subset = frozenset(combo)
                candidates: list[PlanJoin] = []
                for a in _proper_subsets(subset):
                    b = subset - a
                    if a not in best or b not in best:
                        continue
                    if not _cross_connected(a, b, sg):
                        continue
                    for left_set, right_set in ((a, b), (b, a)):
                        candidates.append(
                            _make_join(
                                best[left_set], best[right_set], subset, model, sel, weights
                            )
                        )
                if candidates:
                    winner = min(candidates, key=_candidate_key)
                    best[subset] = winner
                    dp_table[tuple(sorted(subset))] = (winner.cost, winner.est_card)
        component_plans.append(best[frozenset(component)])

    component_plans.sort(key=lambda p: (p.est_card, p.leaf_seq))
    root = component_plans[0]
    for nxt in component_plans[1:]:
        subset = frozenset(root.leaf_seq) | frozenset(nxt.leaf_seq)
        root = _make_join(root, nxt, subset, model, sel, weights, cartesian=True)
        dp_table[tuple(sorted(subset))] = (root.cost, root.est_card)
    return PlanResult(sg, sel, root, distinct, dp_table=dp_table, weights=weights)


def _make_join(
    left: PlanNode,
    right: PlanNode,
    subset: frozenset[int],
    model: _CardModel,
    sel: SourceSelection,
    weights: dict[str, Fraction],
    cartesian: bool = False,
) -> PlanJoin:
    est = model.subset_card(subset)
    # a cartesian fragment is never shipped as a unit, so it costs like a
    # local join even when all its stars live at one endpoint
    colocated = None if cartesian else _colocated_endpoint(subset, sel)
    join_vars = frozenset(left.variables() & right.variables())
    node = PlanJoin(
        left=left,
        right=right,
        join_vars=join_vars,
        cartesian=cartesian,
        est_card=est,
        endpoint_assignment=colocated,
        leaf_seq=left.leaf_seq + right.leaf_seq,
    )
    if colocated is not None:
        node.cost = est * weights.get(colocated, Fraction(1))
        node.n_remote = 1
    else:
        node.cost = est + left.cost + right.cost
        node.n_remote = left.n_remote + right.n_remote
    return node


def _components(sg: StarGraph, n: int) -> list[set[int]]:
    seen: set[int] = set()
    components: list[set[int]] = []
    for start in range(n):
        if start in seen:
            continue
        frontier = [start]
        component = {start}
        while frontier:
            current = frontier.pop()
            for other in range(n):
                if other not in component and sg.connected(current, other):
                    component.add(other)
                    frontier.append(other)
        seen |= component
        components.append(component)
    return components


def _proper_subsets(subset: frozenset[int]):
    """Non-empty proper subsets containing min(subset), so each unordered
    split is produced once."""
    members = sorted(subset)
    anchor, rest = members[0], members[1:]
    for size in range(0, len(rest) + 1):
        for combo in itertools.combinations(rest, size):
            candidate = frozenset((anchor,) + combo)
            if candidate != subset:
                yield candidate


def explain_dp_table(result: PlanResult) -> str:
    lines = ["subset\tcost\test_card"]
    for subset in sorted(result.dp_table, key=lambda s: (len(s), s)):
        cost, est = result.dp_table[subset]
        label = "{" + ",".join(str(i) for i in subset) + "}"
        lines.append(f"{label}\t{cost}\t{est}")
    return "\n".join(lines)
