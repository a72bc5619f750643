"""Randomized datasets, federations, statistics, and queries.

Generators for experiments and property testing. Federations keep each
entity's triples inside a single dataset (per-dataset IRI namespaces), while
link triples may point at entities owned by other datasets; that is the data
shape the planner's per-star source selection assumes.
"""

from __future__ import annotations

import random

from .cs_builder import CharacteristicSet, CsStatistics, DatasetStatistics
from .query_model import Query
from .rdf_model import IRI, Dataset, Term, Triple, TriplePattern, Variable, scan_by_subject

VOCAB = "http://vocab.example/"
DEFAULT_LINK_PREDICATES = (VOCAB + "linksTo", VOCAB + "sameAs")


def predicate_pool(n: int = 6) -> list[str]:
    return [f"{VOCAB}p{i}" for i in range(1, n + 1)]


def entity_iri(dataset_id: str, n: int) -> str:
    return f"http://{dataset_id}.example/res/e{n}"


def random_dataset(
    rng: random.Random,
    dataset_id: str,
    n_entities: int = 10,
    predicates: list[str] | None = None,
    max_props: int = 4,
    max_mult: int = 2,
    uniform_mult: bool = False,
    iri_object_rate: float = 0.0,
) -> Dataset:
    """Entities with random property sets and per-predicate multiplicities.

    With ``uniform_mult`` every entity carrying a predicate gets the same
    number of triples for it, which makes duplicate-aware star estimates
    exact by construction.
    """
    preds = predicates or predicate_pool()
    mult_map = {p: rng.randint(1, max_mult) for p in preds} if uniform_mult else None
    triples: list[Triple] = []
    value = 0
    for i in range(n_entities):
        subject = Term.iri(entity_iri(dataset_id, i))
        k = rng.randint(1, min(max_props, len(preds)))
        for p in sorted(rng.sample(preds, k)):
            mult = mult_map[p] if mult_map else rng.randint(1, max_mult)
            for _ in range(mult):
                value += 1
                if iri_object_rate and rng.random() < iri_object_rate:
                    obj = Term.iri(f"http://misc.example/x/{value}")
                else:
                    obj = Term.literal(f"v{value}")
                triples.append(Triple(subject, Term.iri(p), obj))
    return Dataset(dataset_id, triples)


def random_federation(
    rng: random.Random,
    n_datasets: int = 2,
    entities_per_dataset: int = 8,
    n_links: int = 5,
    predicates: list[str] | None = None,
    link_predicates: tuple[str, ...] = DEFAULT_LINK_PREDICATES,
    max_props: int = 3,
    max_mult: int = 2,
    cross_only: bool = False,
    functional_links: bool = False,
) -> list[Dataset]:
    """Datasets with disjoint subject namespaces joined by link triples.

    ``functional_links`` makes each link predicate a partial matching (no
    entity is the source or the target of two links with the same
    predicate), the shape of sameAs-style alignments; joins over such links
    never produce more rows than their inputs.
    """
    preds = predicates or predicate_pool()
    base = [
        random_dataset(
            rng, f"ds{i}", entities_per_dataset, preds, max_props=max_props, max_mult=max_mult
        )
        for i in range(n_datasets)
    ]
    extra: dict[int, list[Triple]] = {i: [] for i in range(n_datasets)}
    used_sources: dict[str, set[str]] = {lp: set() for lp in link_predicates}
    used_targets: dict[str, set[str]] = {lp: set() for lp in link_predicates}
    for _ in range(n_links):
        si = rng.randrange(n_datasets)
        ti = rng.randrange(n_datasets)
        if cross_only and n_datasets > 1:
            while ti == si:
                ti = rng.randrange(n_datasets)
        lp = rng.choice(link_predicates)
        source = entity_iri(f"ds{si}", rng.randrange(entities_per_dataset))
        target = entity_iri(f"ds{ti}", rng.randrange(entities_per_dataset))
        if functional_links:
            if source in used_sources[lp] or target in used_targets[lp]:
                continue
            used_sources[lp].add(source)
            used_targets[lp].add(target)
        extra[si].append(Triple(Term.iri(source), Term.iri(lp), Term.iri(target)))
    return [Dataset(d.id, list(d.triples) + extra[i]) for i, d in enumerate(base)]


def random_query(
    rng: random.Random,
    datasets: list[Dataset],
    max_stars: int = 3,
    max_patterns: int = 6,
    distinct: bool | None = None,
) -> Query:
    """A star-chain query derived from actual entities and link triples.

    Stars follow a chain of link triples present in the data, so multi-star
    queries usually have non-empty answers.
    """
    subject_props: dict[str, list[str]] = {}
    for d in datasets:
        for subject, triples in scan_by_subject(d):
            if subject.kind == IRI:
                subject_props[subject.lexical] = sorted({t.predicate.lexical for t in triples})
    edges: dict[str, list[tuple[str, str]]] = {}
    for d in datasets:
        for t in d.triples:
            if (
                t.subject.kind == IRI
                and t.object.kind == IRI
                and t.object.lexical in subject_props
            ):
                edges.setdefault(t.subject.lexical, []).append(
                    (t.predicate.lexical, t.object.lexical)
                )
    n_stars = rng.randint(1, max_stars)
    entities = sorted(subject_props)
    if n_stars > 1:
        sources = sorted(edges) or entities
        current = rng.choice(sources)
    else:
        current = rng.choice(entities)
    chain: list[str] = [current]
    chain_links: list[tuple[str, str]] = []  # (predicate, next entity)
    while len(chain) < n_stars:
        outs = sorted(set(edges.get(current, [])))
        if not outs:
            break
        pred, nxt = rng.choice(outs)
        if nxt in chain:
            break
        chain.append(nxt)
        chain_links.append((pred, nxt))
        current = nxt

    centers = [Variable(f"s{i}") for i in range(len(chain))]
    patterns: list[TriplePattern] = []
    label = 1
    budget_per_star = max(1, max_patterns // len(chain))
    fresh = 0
    for i, entity in enumerate(chain):
        props = list(subject_props[entity])
        if i < len(chain_links):
            link_pred = chain_links[i][0]
            patterns.append(
                TriplePattern(centers[i], Term.iri(link_pred), centers[i + 1], label=label)
            )
            label += 1
            props = [p for p in props if p != link_pred]
        k = rng.randint(0 if i < len(chain_links) else 1, max(1, min(len(props), budget_per_star)))
        for p in sorted(rng.sample(props, min(k, len(props)))):
            fresh += 1
            patterns.append(
                TriplePattern(centers[i], Term.iri(p), Variable(f"o{fresh}"), label=label)
            )
            label += 1
    if distinct is None:
        distinct = rng.random() < 0.5
    return Query(patterns, distinct=distinct, projection=None)


def random_statistics(
    rng: random.Random,
    dataset_id: str = "synthetic",
    n_cs: int = 8,
    predicates: list[str] | None = None,
    include_universal: bool = False,
) -> DatasetStatistics:
    """Standalone CS statistics without an underlying dataset.

    ``include_universal`` adds a top-count CS over every predicate, which
    guarantees each removed CS has a kept superset under budget merging.
    """
    preds = predicates or predicate_pool()
    rows: dict[tuple[str, ...], CsStatistics] = {}
    while len(rows) < n_cs:
        k = rng.randint(1, len(preds))
        props = tuple(sorted(rng.sample(preds, k)))
        if props in rows:
            continue
        count = rng.randint(1, 50)
        occ = {p: rng.randint(count, count * 3) for p in props}
        rows[props] = CsStatistics(CharacteristicSet(props), count, occ)
    if include_universal:
        props = tuple(sorted(preds))
        count = max(r.count for r in rows.values()) + 1
        rows[props] = CsStatistics(
            CharacteristicSet(props), count, {p: rng.randint(count, count * 3) for p in props}
        )
    return DatasetStatistics(dataset_id, list(rows.values()))
