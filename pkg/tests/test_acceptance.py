"""Acceptance suite.

One test per acceptance criterion; each prints a [PASS]/[FAIL] line naming
the criterion (visible with ``pytest -s`` or in failure output). Tolerances
are exact (0) unless a criterion states otherwise.
"""

import itertools
import json
import random
import shutil
import time
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

import pytest

from odyssey.cs_builder import (
    CharacteristicSet,
    CsStatistics,
    DatasetStatistics,
    build_statistics,
    merge_to_budget,
)
from odyssey.decomposer import RemoteNode, UnionNode, decompose_result
from odyssey.estimator import (
    link_cardinality_distinct,
    star_cardinality_bag,
    star_cardinality_distinct,
)
from odyssey.fed_executor import execute, federated_oracle
from odyssey.fed_linker import compute_fcps_exact, compute_fcps_synopsis, summarize_dataset
from odyssey.optimizer import PlanJoin, PlanLeaf, plan_cost, plan_joins, select_sources
from odyssey.query_model import decompose_stars
from odyssey import synthetic

from corpus import (
    build_federation,
    enumerate_tree_costs,
    oracle_bag_star,
    oracle_distinct_star,
    oracle_pair_join,
    subject_property_multiplicities,
)
from test_cli import run_pipeline
from test_optimizer import _seeded_star_and_stats, qf_setup
from test_synopsis import find_lsb_collision

TOY_DIR = Path(__file__).resolve().parent.parent / "data" / "toy"


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number:2d}: {description}")
        raise
    print(f"[PASS] criterion {number:2d}: {description}")


def _predicate_subsets(preds):
    for size in range(1, len(preds) + 1):
        yield from itertools.combinations(preds, size)


def test_criterion_1_distinct_star_counts_exact():
    with criterion(1, "distinct star counts match the brute-force oracle exactly"):
        start = time.monotonic()
        rng = random.Random(1001)
        preds = synthetic.predicate_pool(6)
        for _ in range(100):
            d = synthetic.random_dataset(
                rng,
                "c1",
                n_entities=rng.randint(1, 50),
                predicates=preds,
                max_props=6,
                max_mult=3,
            )
            stats = build_statistics(d)
            assert not stats.merged
            for subset in _predicate_subsets(preds):
                got = star_cardinality_distinct(subset, stats)
                assert got.value == oracle_distinct_star(d, subset)
                assert got.exact
        elapsed = time.monotonic() - start
        assert elapsed < 30, f"took {elapsed:.1f}s"


def test_criterion_2_bag_star_estimates():
    with criterion(2, "duplicate-aware star estimates: exact on uniform data, bounded error otherwise"):
        rng = random.Random(1002)
        preds = synthetic.predicate_pool(4)
        for _ in range(40):
            d = synthetic.random_dataset(
                rng,
                "c2u",
                n_entities=rng.randint(1, 30),
                predicates=preds,
                max_mult=3,
                uniform_mult=True,
            )
            stats = build_statistics(d)
            for subset in _predicate_subsets(preds):
                assert star_cardinality_bag(subset, stats).value == oracle_bag_star(d, subset)

        total, within = 0, 0
        for _ in range(100):
            d = synthetic.random_dataset(
                rng, "c2a", n_entities=rng.randint(3, 50), max_props=5, max_mult=3
            )
            stats = build_statistics(d)
            pool = sorted({q for row in stats.cs_stats for q in row.cs.properties})
            subset = rng.sample(pool, rng.randint(1, min(3, len(pool))))
            true = oracle_bag_star(d, subset)
            if true == 0:
                continue
            est = star_cardinality_bag(subset, stats).value
            total += 1
            if abs(est - true) / Fraction(true) <= Fraction(1, 2):
                within += 1
        assert total >= 80
        assert within >= 0.9 * total, f"{within}/{total} within 50% relative error"


def test_criterion_3_link_counts_exact_on_single_link_federations():
    with criterion(3, "distinct link cardinality equals the pair-join oracle on 1-link federations"):
        rng = random.Random(1003)
        checked = 0
        for _ in range(100):
            pair = synthetic.random_federation(
                rng, 2, entities_per_dataset=rng.randint(2, 8), n_links=1, cross_only=True
            )
            # the single link triple fixes the source/target direction
            d1, d2 = (pair if any(
                t.object.kind == "iri" and t.object.lexical.startswith(f"http://{pair[1].id}")
                for t in pair[0].triples
            ) else (pair[1], pair[0]))
            s1 = summarize_dataset(d1, with_descriptions=True)
            s2 = summarize_dataset(d2, with_descriptions=True)
            fcps = compute_fcps_exact(
                s1.descriptions.local_objects, s2.descriptions.local_subjects, d1.id, d2.id
            )
            link_triple = next(
                t
                for t in d1.triples
                if t.object.kind == "iri"
                and t.object.lexical.startswith(f"http://{d2.id}")
            )
            src_props = subject_property_multiplicities(d1)[link_triple.subject]
            dst_props = subject_property_multiplicities(d2)[link_triple.object]
            lp = link_triple.predicate.lexical
            for _ in range(4):
                p_k = set(rng.sample(sorted(src_props), rng.randint(1, len(src_props))))
                p_k.add(lp)
                p_l = set(rng.sample(sorted(dst_props), rng.randint(0, len(dst_props))))
                est = link_cardinality_distinct(p_k, p_l, lp, fcps)
                assert est.value == oracle_pair_join(d1, d2, p_k, p_l, lp)
                checked += 1
        assert checked == 400


def test_criterion_4_exact_linking_matches_oracle():
    with criterion(4, "exact federated link counts equal the cross-dataset oracle"):
        rng = random.Random(1004)
        for _ in range(30):
            d1, d2 = synthetic.random_federation(
                rng,
                2,
                entities_per_dataset=rng.randint(3, 9),
                n_links=rng.randint(1, 8),
            )
            for a, b in ((d1, d2), (d2, d1)):
                sa = summarize_dataset(a, with_descriptions=True)
                sb = summarize_dataset(b, with_descriptions=True)
                fcps = compute_fcps_exact(
                    sa.descriptions.local_objects, sb.descriptions.local_subjects, a.id, b.id
                )
                got = {
                    (f.cp.source_cs.properties, f.cp.target_cs.properties, f.cp.predicate): f.count
                    for f in fcps
                }
                from corpus import oracle_fcp_counts

                assert got == oracle_fcp_counts(a, b)


def test_criterion_5_synopsis_never_misses_links():
    with criterion(5, "synopsis links are a superset of exact links; collisions only add"):
        rng = random.Random(1005)
        federations = 0
        while federations < 100:
            n = rng.randint(2, 4)
            datasets = synthetic.random_federation(
                rng, n, entities_per_dataset=rng.randint(2, 7), n_links=rng.randint(1, 8)
            )
            summaries = [
                summarize_dataset(
                    d, with_descriptions=True, leaf_capacity=rng.choice([1, 2, 8, 4096])
                )
                for d in datasets
            ]
            for a in summaries:
                for b in summaries:
                    if a is b:
                        continue
                    exact = {
                        (f.cp.source_cs, f.cp.target_cs, f.cp.predicate): f.count
                        for f in compute_fcps_exact(
                            a.descriptions.local_objects, b.descriptions.local_subjects
                        )
                    }
                    approx = {
                        (f.cp.source_cs, f.cp.target_cs, f.cp.predicate): f.count
                        for f in compute_fcps_synopsis(a.tree, b.tree)
                    }
                    assert set(exact) <= set(approx)
                    for key, count in exact.items():
                        assert approx[key] >= count
            federations += 1

        # constructed low-bits collision: a spurious link is tolerated
        from corpus import toy_dataset

        a, b, fence = find_lsb_collision()
        d1 = toy_dataset(
            "col1", [("s1", "p1", "v"), ("s1", "q", f"<{a}>"), ("s1", "q", f"<{fence}>")]
        )
        d2 = toy_dataset("col2", [(b, "p2", "v")])
        s1 = summarize_dataset(d1, with_descriptions=True)
        s2 = summarize_dataset(d2, with_descriptions=True)
        exact = compute_fcps_exact(s1.descriptions.local_objects, s2.descriptions.local_subjects)
        approx = compute_fcps_synopsis(s1.tree, s2.tree)
        assert exact == []
        assert len(approx) == 1


def test_criterion_6_greedy_star_order_trace():
    with criterion(6, "greedy pattern ordering reproduces the seeded trace [tp2, tp1, tp3]"):
        from odyssey.optimizer import order_star

        star, stats = _seeded_star_and_stats()
        order = order_star(star, [stats])
        assert [tp.label for tp in order] == [2, 1, 3]


def test_criterion_7_cost_arithmetic_trace():
    with criterion(7, "join cost = result size 417 + transferred intermediates 1,548 = 1,965"):
        left = PlanLeaf(0, None, [], ["a"], est_card=Fraction(1131), cost=Fraction(1131))
        right = PlanLeaf(1, None, [], ["b"], est_card=Fraction(417), cost=Fraction(417))
        join = PlanJoin(left, right, frozenset(), est_card=Fraction(417))
        assert plan_cost(join) == 1965


def test_criterion_8_dp_matches_exhaustive_enumeration():
    with criterion(8, "DP join ordering cost equals exhaustive join-tree enumeration"):
        start = time.monotonic()
        rng = random.Random(1008)
        sizes = []
        attempts = 0
        while len(sizes) < 30 and attempts < 300:
            attempts += 1
            datasets = synthetic.random_federation(
                rng,
                rng.randint(2, 4),
                entities_per_dataset=7,
                n_links=14,
            )
            fed, _ = build_federation(datasets)
            q = synthetic.random_query(rng, datasets, max_stars=5, max_patterns=10)
            sg = decompose_stars(q)
            if not (2 <= len(sg.stars) <= 5):
                continue
            sel = select_sources(sg, fed)
            if sel.empty_result:
                continue
            result = plan_joins(sg, sel, fed, q.distinct)
            assert result.root.cost == enumerate_tree_costs(sg, sel, fed, q.distinct)
            sizes.append(len(sg.stars))
        assert len(sizes) == 30
        assert max(sizes) >= 4, f"star sizes covered: {sorted(set(sizes))}"
        elapsed = time.monotonic() - start
        assert elapsed < 60, f"took {elapsed:.1f}s"


def _run_query(query, fed, endpoints, merge=True):
    sg = decompose_stars(query)
    sel = select_sources(sg, fed)
    result = plan_joins(sg, sel, fed, query.distinct)
    plan = decompose_result(result, query, merge=merge)
    return plan, execute(plan, endpoints, timeout=60)


def test_criterion_9_end_to_end_completeness():
    with criterion(9, "plan execution returns exactly the federated oracle answer"):
        query, fed, endpoints = qf_setup()
        assert len(query.patterns) == 6
        assert len(decompose_stars(query).stars) == 3
        _, (results, _) = _run_query(query, fed, endpoints)
        oracle = federated_oracle(query, endpoints)
        assert results.as_set() == oracle.as_set()
        assert len(results) == 3

        rng = random.Random(1009)
        compared = 0
        for _ in range(40):
            datasets = synthetic.random_federation(
                rng,
                rng.randint(2, 4),
                entities_per_dataset=rng.randint(3, 7),
                n_links=rng.randint(2, 8),
            )
            fed, endpoints = build_federation(datasets)
            q = synthetic.random_query(rng, datasets, max_stars=3, max_patterns=6)
            _, (results, _) = _run_query(q, fed, endpoints)
            oracle = federated_oracle(q, endpoints)
            if q.distinct:
                assert results.as_set() == oracle.as_set()
            else:
                assert results.as_counter() == oracle.as_counter()
            compared += 1
        assert compared == 40


def _count_remotes(node):
    if node is None:
        return []
    if isinstance(node, RemoteNode):
        return [node]
    if isinstance(node, UnionNode):
        return [r for c in node.children for r in _count_remotes(c)]
    return _count_remotes(node.left) + _count_remotes(node.right)


def test_criterion_10_decomposition_shape_and_transfer_monotonicity():
    with criterion(10, "endpoint grouping yields 2 remote subqueries; merging never raises NTT"):
        query, fed, endpoints = qf_setup()
        plan, (results, metrics) = _run_query(query, fed, endpoints)
        remotes = _count_remotes(plan.root)
        assert len(remotes) == 2
        by_endpoint = {
            r.subquery.endpoint: sorted(tp.label for tp in r.subquery.patterns) for r in remotes
        }
        assert by_endpoint == {"dbp": [1, 2, 5, 6], "lmdb": [3, 4]}

        unmerged_plan = decompose_result(
            plan_joins(
                decompose_stars(query),
                select_sources(decompose_stars(query), fed),
                fed,
                query.distinct,
            ),
            query,
            merge=False,
        )
        _, unmerged_metrics = execute(unmerged_plan, endpoints, timeout=60)
        assert metrics.ntt <= unmerged_metrics.ntt

        rng = random.Random(1010)
        fired = 0
        for _ in range(200):
            datasets = synthetic.random_federation(
                rng,
                rng.randint(2, 3),
                entities_per_dataset=6,
                n_links=7,
                max_mult=1,
                functional_links=True,
            )
            fed, endpoints = build_federation(datasets)
            q = synthetic.random_query(rng, datasets, max_stars=3, max_patterns=6)
            merged_plan, (_, merged_metrics) = _run_query(q, fed, endpoints, merge=True)
            unmerged_plan, (_, unmerged_metrics) = _run_query(q, fed, endpoints, merge=False)
            if merged_plan.empty or merged_plan.nsq >= unmerged_plan.nsq:
                continue
            fired += 1
            assert merged_metrics.ntt <= unmerged_metrics.ntt
        assert fired >= 10, f"merging fired only {fired} times"


def _occurrence_totals(stats: DatasetStatistics) -> dict[str, int]:
    totals: dict[str, int] = {}
    for row in stats.cs_stats:
        for q, n in row.occurrences.items():
            totals[q] = totals.get(q, 0) + n
    return totals


def _catch_all_family(rng: random.Random) -> DatasetStatistics:
    """Kept CSs over common predicates; removed CSs each carry a rare
    predicate no kept CS covers, forcing the catch-all path."""
    common = synthetic.predicate_pool(4)
    rows: dict[tuple[str, ...], CsStatistics] = {}
    for _ in range(rng.randint(2, 4)):
        props = tuple(sorted(rng.sample(common, rng.randint(1, 4))))
        count = rng.randint(20, 60)
        rows[props] = CsStatistics(
            CharacteristicSet(props), count, {q: rng.randint(count, 2 * count) for q in props}
        )
    n_kept = len(rows)
    for i in range(rng.randint(1, 4)):
        rare = f"{synthetic.VOCAB}rare{i}"
        base = rng.sample(common, rng.randint(0, 2))
        props = tuple(sorted(set(base) | {rare}))
        count = rng.randint(1, 5)
        rows[props] = CsStatistics(
            CharacteristicSet(props), count, {q: rng.randint(count, 2 * count) for q in props}
        )
    stats = DatasetStatistics("catchall", list(rows.values()))
    # one slot is reserved for the catch-all itself; a tighter budget would
    # demote a kept CS, whose split would intentionally double-count
    stats.cs_budget = n_kept + 1
    return stats


def test_criterion_11_merge_budget_conservation():
    with criterion(11, "budget merging preserves entity and occurrence totals within budget"):
        rng = random.Random(1011)
        for i in range(100):
            if i % 2 == 0:
                stats = synthetic.random_statistics(
                    rng, n_cs=rng.randint(2, 10), include_universal=True
                )
                budget = rng.randint(1, len(stats.cs_stats) - 1)
            else:
                stats = _catch_all_family(rng)
                budget = stats.cs_budget
            count_before = sum(r.count for r in stats.cs_stats)
            occ_before = _occurrence_totals(stats)
            merged = merge_to_budget(stats, budget)
            assert len(merged.cs_stats) <= budget
            assert merged.merged or merged is stats
            assert sum(r.count for r in merged.cs_stats) == count_before
            assert _occurrence_totals(merged) == occ_before


def test_criterion_12_cli_pipeline_deterministic(tmp_path):
    with criterion(12, "two CLI pipeline runs produce byte-identical output files"):
        outs = []
        for run in ("one", "two"):
            workdir = tmp_path / run
            workdir.mkdir()
            for name in ("dbp.nt", "lmdb.nt", "federation.json", "qf.rq"):
                shutil.copy(TOY_DIR / name, workdir / name)
            outs.append(run_pipeline(workdir))
        for name in (
            "dbp.stats.json",
            "lmdb.stats.json",
            "dbp.synopsis.json",
            "lmdb.synopsis.json",
            "federation.stats.json",
            "plan.json",
            "results.tsv",
        ):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
