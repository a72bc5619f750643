#!/usr/bin/env python3
"""Measure estimate accuracy on randomized datasets and federations.

Compares distinct and duplicate-aware star estimates against brute-force
evaluation, and link estimates against pair joins, printing per-mode error
summaries. Useful for eyeballing how estimate quality degrades with data
skew and CS merging.
"""

import argparse
import random
from fractions import Fraction

from odyssey import synthetic
from odyssey.cs_builder import build_statistics, merge_to_budget
from odyssey.estimator import (
    link_cardinality_distinct,
    star_cardinality_bag,
    star_cardinality_distinct,
)
from odyssey.fed_linker import summarize_dataset, compute_fcps_exact
from odyssey.rdf_model import scan_by_subject


def star_oracles(dataset):
    props_of = {}
    mults = {}
    for subject, triples in scan_by_subject(dataset):
        preds = {}
        for t in triples:
            preds[t.predicate.lexical] = preds.get(t.predicate.lexical, 0) + 1
        props_of[subject] = preds
        mults[subject] = preds
    return props_of


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--rounds", type=int, default=200)
    parser.add_argument("--max-mult", type=int, default=3)
    parser.add_argument("--merge-budget", type=int, default=0, help="0 keeps stats unmerged")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    distinct_errors = []
    bag_errors = []
    link_errors = []

    for _ in range(args.rounds):
        d = synthetic.random_dataset(
            rng, "bench", n_entities=rng.randint(5, 40), max_props=5, max_mult=args.max_mult
        )
        stats = build_statistics(d)
        if args.merge_budget:
            stats = merge_to_budget(stats, args.merge_budget)
        entities = star_oracles(d)
        pool = sorted({p for preds in entities.values() for p in preds})
        k = rng.randint(1, min(3, len(pool)))
        subset = rng.sample(pool, k)
        true_distinct = sum(1 for preds in entities.values() if set(subset) <= set(preds))
        true_bag = sum(
            _product(preds[p] for p in subset)
            for preds in entities.values()
            if set(subset) <= set(preds)
        )
        est_distinct = star_cardinality_distinct(subset, stats).value
        est_bag = star_cardinality_bag(subset, stats).value
        distinct_errors.append(_relative_error(est_distinct, true_distinct))
        bag_errors.append(_relative_error(est_bag, true_bag))

    rng2 = random.Random(args.seed + 1)
    for _ in range(args.rounds // 4):
        datasets = synthetic.random_federation(rng2, 2, 8, n_links=3, cross_only=True)
        sums = [summarize_dataset(x, with_descriptions=True) for x in datasets]
        fcps = compute_fcps_exact(
            sums[0].descriptions.local_objects,
            sums[1].descriptions.local_subjects,
            "ds0",
            "ds1",
        )
        if not fcps:
            continue
        f = rng2.choice(fcps)
        p_k = set(f.cp.source_cs.properties)
        p_l = set(f.cp.target_cs.properties)
        est = link_cardinality_distinct(p_k, p_l, f.cp.predicate, fcps).value
        true = _pair_join(datasets[0], datasets[1], p_k, p_l, f.cp.predicate)
        link_errors.append(_relative_error(est, true))

    for label, errors in (
        ("star distinct", distinct_errors),
        ("star bag", bag_errors),
        ("link distinct", link_errors),
    ):
        if not errors:
            continue
        errors.sort()
        mean = sum(errors) / len(errors)
        p90 = errors[int(0.9 * (len(errors) - 1))]
        print(
            f"{label:>14}: n={len(errors):4d} mean_rel_err={float(mean):7.4f} "
            f"p90={float(p90):7.4f} max={float(errors[-1]):7.4f}"
        )


def _product(values):
    out = 1
    for v in values:
        out *= v
    return out


def _relative_error(est: Fraction, true: int) -> Fraction:
    if true == 0:
        return Fraction(0) if est == 0 else Fraction(1)
    return abs(est - true) / Fraction(true)


def _pair_join(d_src, d_dst, p_k, p_l, pred) -> int:
    src_props = {}
    for subject, triples in scan_by_subject(d_src):
        src_props[subject] = {t.predicate.lexical for t in triples}
    dst_props = {}
    for subject, triples in scan_by_subject(d_dst):
        dst_props[subject] = {t.predicate.lexical for t in triples}
    pairs = 0
    for t in d_src.triples:
        if t.predicate.lexical != pred:
            continue
        if p_k <= src_props.get(t.subject, set()) and p_l <= dst_props.get(t.object, set()):
            pairs += 1
    return pairs


if __name__ == "__main__":
    main()
