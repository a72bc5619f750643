"""Shared toy builders and independent oracles for the test suite.

Oracle implementations here re-derive everything from raw triples with plain
dict/set bookkeeping; they intentionally share no code with the statistics
builders, estimator, linker, or planner they are used to check.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from odyssey.cs_builder import DatasetStatistics
from odyssey.estimator import star_cardinality_bag, star_cardinality_distinct
from odyssey.fed_executor import Endpoint
from odyssey.fed_linker import (
    DatasetSummary,
    FederationStatistics,
    link_federation,
    summarize_dataset,
)
from odyssey.optimizer import SourceSelection, _CardModel
from odyssey.query_model import StarGraph
from odyssey.rdf_model import IRI, Dataset, Term, Triple

X = "http://x/"


def term(token: str) -> Term:
    """'<name>' makes an IRI under the shared toy namespace, '_:l' a blank,
    anything else a plain literal."""
    if token.startswith("<") and token.endswith(">"):
        return Term.iri(X + token[1:-1])
    if token.startswith("_:"):
        return Term.blank(token[2:])
    return Term.literal(token)


def toy_dataset(dataset_id: str, rows: list[tuple[str, str, str]]) -> Dataset:
    triples = [Triple(term(f"<{s}>") if not s.startswith(("_", "<")) else term(s),
                      Term.iri(X + p),
                      term(o)) for s, p, o in rows]
    return Dataset(dataset_id, triples)


def p(name: str) -> str:
    return X + name


# T1 and T2 toys used across the statistics and estimator tests.
def t1_dataset() -> Dataset:
    return toy_dataset(
        "t1",
        [
            ("e1", "p1", "v1"),
            ("e1", "p2", "v2"),
            ("e2", "p1", "v3"),
            ("e2", "p2", "v4"),
            ("e2", "p2", "v5"),
            ("e3", "p1", "v6"),
        ],
    )


def t2_dataset() -> Dataset:
    rows = [
        ("e1", "p1", "v1"),
        ("e1", "p2", "v2"),
        ("e2", "p1", "v3"),
        ("e2", "p2", "v4"),
        ("e2", "p2", "v5"),
        ("e3", "p1", "v6"),
        ("f1", "p9", "w"),
        ("e1", "p3", "<f1>"),
    ]
    return toy_dataset("t2", rows)


# --- oracles over raw triples ----------------------------------------------


def subject_property_multiplicities(d: Dataset) -> dict[Term, dict[str, int]]:
    out: dict[Term, dict[str, int]] = {}
    for t in d.triples:
        preds = out.setdefault(t.subject, {})
        preds[t.predicate.lexical] = preds.get(t.predicate.lexical, 0) + 1
    return out


def oracle_distinct_star(d: Dataset, props) -> int:
    wanted = set(props)
    return sum(
        1 for preds in subject_property_multiplicities(d).values() if wanted <= set(preds)
    )


def oracle_bag_star(d: Dataset, props) -> int:
    wanted = set(props)
    total = 0
    for preds in subject_property_multiplicities(d).values():
        if wanted <= set(preds):
            rows = 1
            for q in wanted:
                rows *= preds[q]
            total += rows
    return total


def oracle_cp_counts(d: Dataset) -> dict[tuple[tuple[str, ...], tuple[str, ...], str], int]:
    """Intra-dataset link-triple tallies keyed by raw property sets."""
    props = {s: tuple(sorted(preds)) for s, preds in subject_property_multiplicities(d).items()}
    counts: dict[tuple[tuple[str, ...], tuple[str, ...], str], int] = {}
    for t in d.triples:
        if t.object in props:
            key = (props[t.subject], props[t.object], t.predicate.lexical)
            counts[key] = counts.get(key, 0) + 1
    return counts


def oracle_fcp_counts(
    d1: Dataset, d2: Dataset
) -> dict[tuple[tuple[str, ...], tuple[str, ...], str], int]:
    """Distinct shared entities per (source CS, target CS, predicate).

    An entity counts when it is the IRI object of a triple in d1 and an IRI
    subject in d2.
    """
    src_props = {
        s: tuple(sorted(preds))
        for s, preds in subject_property_multiplicities(d1).items()
    }
    dst_props = {
        s.lexical: tuple(sorted(preds))
        for s, preds in subject_property_multiplicities(d2).items()
        if s.kind == IRI
    }
    shared: dict[tuple[tuple[str, ...], tuple[str, ...], str], set[str]] = {}
    for t in d1.triples:
        if t.object.kind != IRI or t.object.lexical not in dst_props:
            continue
        key = (src_props[t.subject], dst_props[t.object.lexical], t.predicate.lexical)
        shared.setdefault(key, set()).add(t.object.lexical)
    return {key: len(entities) for key, entities in shared.items()}


def oracle_pair_join(d_src: Dataset, d_dst: Dataset, p_k, p_l, pred: str) -> int:
    """Distinct (source, target) pairs joined by ``pred`` link triples."""
    src = subject_property_multiplicities(d_src)
    dst = subject_property_multiplicities(d_dst)
    pairs = set()
    for t in d_src.triples:
        if t.predicate.lexical != pred:
            continue
        if set(p_k) <= set(src.get(t.subject, {})) and set(p_l) <= set(dst.get(t.object, {})):
            pairs.add((t.subject, t.object))
    return len(pairs)


# --- exhaustive join-tree enumeration ----------------------------------------


def enumerate_tree_costs(
    sg: StarGraph,
    sel: SourceSelection,
    fed: FederationStatistics,
    distinct: bool,
) -> Fraction:
    """Minimum cost over every join tree the planner's plan space admits.

    Valid trees split each node into two cross-connected parts. The cost of
    a subtree wholly single-sourced at one endpoint is its result size; any
    other node adds its children's costs to its own result size. Cardinality
    semantics are shared with the planner; the search is exhaustive.
    """
    model = _CardModel(sg, sel, fed, distinct)

    def leaf_cost(i: int) -> Fraction:
        total = Fraction(0)
        for ds in sel.sources_of(i):
            stats = fed.datasets[ds]
            props = sg.stars[i].predicates
            if distinct:
                total += star_cardinality_distinct(props, stats).value
            else:
                total += star_cardinality_bag(props, stats).value
        return total

    def connected_subset(subset: frozenset[int]) -> bool:
        members = set(subset)
        frontier = [next(iter(members))]
        seen = {frontier[0]}
        while frontier:
            i = frontier.pop()
            for j in members - seen:
                if sg.connected(i, j):
                    seen.add(j)
                    frontier.append(j)
        return seen == members

    def colocated(subset: frozenset[int]) -> bool:
        if not connected_subset(subset):
            return False
        endpoints = set()
        for i in subset:
            sources = sel.sources_of(i)
            if len(sources) != 1:
                return False
            endpoints.add(sources[0])
        return len(endpoints) == 1

    def tree_costs(subset: frozenset[int]) -> list[Fraction]:
        if len(subset) == 1:
            return [leaf_cost(min(subset))]
        if colocated(subset):
            return [model.subset_card(subset)]
        costs = []
        members = sorted(subset)
        for size in range(1, len(members)):
            for combo in itertools.combinations(members[1:], size - 1):
                a = frozenset((members[0],) + combo)
                b = subset - a
                if not any(sg.connected(i, j) for i in a for j in b):
                    continue
                for ca in tree_costs(a):
                    for cb in tree_costs(b):
                        costs.append(model.subset_card(subset) + ca + cb)
        return costs

    full = frozenset(range(len(sg.stars)))
    return min(tree_costs(full))


# --- federation assembly ------------------------------------------------------


def build_federation(
    datasets: list[Dataset],
    max_cs: int | None = None,
    leaf_capacity: int = 4096,
    exact: bool = False,
) -> tuple[FederationStatistics, dict[str, Endpoint]]:
    summaries = [
        summarize_dataset(d, max_cs=max_cs, leaf_capacity=leaf_capacity, with_descriptions=exact)
        for d in datasets
    ]
    fed = link_federation(summaries)
    endpoints = {d.id: Endpoint(d.id, d) for d in datasets}
    return fed, endpoints


def random_rng(seed: int) -> random.Random:
    return random.Random(seed)
