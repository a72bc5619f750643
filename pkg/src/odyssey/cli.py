"""Command-line pipeline: stats, synopsis, link, optimize, execute, estimate.

Exit codes are fixed for scripting: 0 success, 2 usage or I/O failure,
3 statistics incompatibility, 4 query outside the optimizable fragment,
5 execution failure. All file outputs are canonical JSON (sorted keys) or
sorted TSV so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from . import cs_builder, decomposer, fed_executor, fed_linker, optimizer, query_model, synopsis
from .cs_builder import InvalidBudget, merge_to_budget, stats_from_dict, stats_to_dict
from .estimator import (
    link_cardinality_bag,
    link_cardinality_distinct,
    star_cardinality_bag,
    star_cardinality_distinct,
)
from .fed_linker import DatasetSummary, HashMismatch
from .query_model import FallbackRequired, QuerySyntaxError, UnsupportedFeature
from .rdf_model import NTriplesSyntaxError, parse_ntriples

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INCOMPATIBLE = 3
EXIT_FRAGMENT = 4
EXIT_EXECUTION = 5

DEFAULT_MAX_CS = 10000
DEFAULT_TIMEOUT = 1800.0

log = logging.getLogger("odyssey")


@dataclass
class DatasetConfig:
    dataset_id: str
    data_path: Path
    stats_path: Path
    synopsis_path: Path
    latency_ms: float = 0.0
    cost_weight: float = 1.0
    # paths as written in the config, for reproducible references in outputs
    raw_stats_path: str = ""
    raw_synopsis_path: str = ""


@dataclass
class FederationConfig:
    datasets: list[DatasetConfig]

    def weights(self) -> dict[str, Fraction]:
        return {d.dataset_id: Fraction(d.cost_weight).limit_denominator(10**6) for d in self.datasets}


def load_federation_config(path: Path) -> FederationConfig:
    text = path.read_text(encoding="utf-8")
    base = path.parent
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        raw_entries = doc["datasets"]
    else:
        raw_entries = _parse_kv_config(text)
    entries = []
    for raw in raw_entries:
        entries.append(
            DatasetConfig(
                dataset_id=raw["dataset_id"],
                data_path=base / raw["data_path"],
                stats_path=base / raw["stats_path"],
                synopsis_path=base / raw["synopsis_path"],
                latency_ms=float(raw.get("latency_ms", 0)),
                cost_weight=float(raw.get("cost_weight", 1)),
                raw_stats_path=str(raw["stats_path"]),
                raw_synopsis_path=str(raw["synopsis_path"]),
            )
        )
    ids = [e.dataset_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("dataset ids in the federation config must be unique")
    if not entries:
        raise ValueError("federation config lists no datasets")
    return FederationConfig(entries)


def _parse_kv_config(text: str) -> list[dict]:
    entries: list[dict] = []
    current: dict | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "[dataset]":
            current = {}
            entries.append(current)
            continue
        if "=" not in stripped or current is None:
            raise ValueError(f"config line {lineno}: expected '[dataset]' or 'key = value'")
        key, _, value = stripped.partition("=")
        current[key.strip()] = value.strip()
    return entries


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _load_dataset(cfg: DatasetConfig, lenient: bool = False):
    with open(cfg.data_path, "rb") as fh:
        return parse_ntriples(fh, dataset_id=cfg.dataset_id, lenient=lenient)


# --- subcommands -------------------------------------------------------------


def cmd_stats(args: argparse.Namespace) -> int:
    dataset_id = args.dataset_id or Path(args.input).stem
    with open(args.input, "rb") as fh:
        d = parse_ntriples(fh, dataset_id=dataset_id, lenient=args.lenient)
    for warning in d.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    stats = cs_builder.build_statistics(d)
    stats = merge_to_budget(stats, args.max_cs)
    _write_json(Path(args.out), stats_to_dict(stats))
    log.info("wrote %d characteristic sets for %s", len(stats.cs_stats), dataset_id)
    return EXIT_OK


def cmd_synopsis(args: argparse.Namespace) -> int:
    if args.leaf_capacity < 1:
        print("error: --leaf-capacity must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    dataset_id = args.dataset_id or Path(args.input).stem
    with open(args.input, "rb") as fh:
        d = parse_ntriples(fh, dataset_id=dataset_id, lenient=args.lenient)
    stats = cs_builder.build_statistics(d)
    stats = merge_to_budget(stats, args.max_cs)
    tree = synopsis.build_synopsis(d, stats, leaf_capacity=args.leaf_capacity)
    _write_json(Path(args.out), synopsis.tree_to_dict(tree, stats))
    return EXIT_OK


def _load_summaries(config: FederationConfig, exact: bool, max_cs: int) -> list[DatasetSummary]:
    summaries = []
    for cfg in config.datasets:
        if exact:
            d = _load_dataset(cfg)
            summaries.append(
                fed_linker.summarize_dataset(
                    d, max_cs=max_cs, with_descriptions=True, endpoint=cfg.dataset_id
                )
            )
        else:
            stats = stats_from_dict(_read_json(cfg.stats_path))
            tree = synopsis.tree_from_dict(_read_json(cfg.synopsis_path), stats)
            summaries.append(DatasetSummary(stats, tree, endpoint=cfg.dataset_id))
    return summaries


def cmd_link(args: argparse.Namespace) -> int:
    config = load_federation_config(Path(args.federation))
    summaries = _load_summaries(config, args.exact, args.max_cs)
    fed = fed_linker.link_federation(summaries)
    refs = {
        cfg.dataset_id: {
            "stats_path": cfg.raw_stats_path,
            "synopsis_path": cfg.raw_synopsis_path,
        }
        for cfg in config.datasets
    }
    _write_json(Path(args.out), fed_linker.federation_to_dict(fed, refs))
    return EXIT_OK


def _load_federation_statistics(
    config: FederationConfig, links_path: Path | None
) -> fed_linker.FederationStatistics:
    stats_by_id = {}
    trees = {}
    for cfg in config.datasets:
        stats = stats_from_dict(_read_json(cfg.stats_path))
        stats_by_id[cfg.dataset_id] = stats
        trees[cfg.dataset_id] = synopsis.tree_from_dict(_read_json(cfg.synopsis_path), stats)
    if links_path is not None:
        return fed_linker.federation_from_dict(_read_json(links_path), stats_by_id)
    summaries = [
        DatasetSummary(stats_by_id[cfg.dataset_id], trees[cfg.dataset_id], endpoint=cfg.dataset_id)
        for cfg in config.datasets
    ]
    return fed_linker.link_federation(summaries)


def cmd_optimize(args: argparse.Namespace) -> int:
    config = load_federation_config(Path(args.federation))
    fed = _load_federation_statistics(
        config, Path(args.links) if args.links else None
    )
    query = query_model.parse_query(Path(args.query).read_text(encoding="utf-8"))
    try:
        sg = query_model.decompose_stars(query)
    except FallbackRequired as exc:
        print(f"fallback required: {exc}", file=sys.stderr)
        return EXIT_FRAGMENT
    sel = optimizer.select_sources(sg, fed)
    result = optimizer.plan_joins(sg, sel, fed, query.distinct, weights=config.weights())
    if args.explain:
        print(optimizer.explain_dp_table(result))
    plan = decomposer.decompose_result(result, query)
    _write_json(Path(args.out), decomposer.plan_to_dict(plan))
    if plan.empty:
        log.info("query is provably empty; wrote an empty plan")
    return EXIT_OK


def cmd_execute(args: argparse.Namespace) -> int:
    config = load_federation_config(Path(args.federation))
    plan = decomposer.plan_from_dict(_read_json(Path(args.plan)))
    endpoints = {}
    for cfg in config.datasets:
        endpoints[cfg.dataset_id] = fed_executor.Endpoint(
            cfg.dataset_id, _load_dataset(cfg), latency_ms=cfg.latency_ms
        )
    results, metrics = fed_executor.execute(plan, endpoints, timeout=args.timeout)
    sys.stdout.write(results.to_tsv())
    if args.metrics:
        _write_json(Path(args.metrics), metrics.to_dict())
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    stats = stats_from_dict(_read_json(Path(args.stats)))
    props = [p for p in args.props.split(",") if p]
    if args.link_pred:
        target = [p for p in (args.target_props or "").split(",") if p]
        if args.mode == "distinct":
            est = link_cardinality_distinct(props, target, args.link_pred, stats.cp_stats)
        else:
            est = link_cardinality_bag(
                props, target, args.link_pred, stats.cp_stats, stats, stats
            )
    else:
        if args.mode == "distinct":
            est = star_cardinality_distinct(props, stats)
        else:
            est = star_cardinality_bag(props, stats)
    print(f"value: {est.rounded()}")
    print(f"value_exact_rational: {est.value}")
    print(f"exact: {str(est.exact).lower()}")
    print(f"basis: {est.basis}")
    print(f"contributing_entries: {est.contributors}")
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odyssey",
        description="Federated BGP query optimization over characteristic-set statistics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="build characteristic set/pair statistics from N-Triples")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--max-cs", type=int, default=DEFAULT_MAX_CS)
    p.add_argument("--dataset-id")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synopsis", help="build the entity synopsis tree from N-Triples")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--leaf-capacity", type=int, default=synopsis.DEFAULT_LEAF_CAPACITY)
    p.add_argument("--max-cs", type=int, default=DEFAULT_MAX_CS)
    p.add_argument("--dataset-id")
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_synopsis)

    p = sub.add_parser("link", help="compute cross-dataset link statistics for a federation")
    p.add_argument("--federation", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--max-cs", type=int, default=DEFAULT_MAX_CS)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("optimize", help="plan a query against a federation")
    p.add_argument("query")
    p.add_argument("--federation", required=True)
    p.add_argument("--links", help="federation statistics JSON written by 'link'")
    p.add_argument("--out", required=True)
    p.add_argument("--explain", action="store_true")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("execute", help="execute a plan over the simulated federation")
    p.add_argument("plan")
    p.add_argument("--federation", required=True)
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_execute)

    p = sub.add_parser("estimate", help="print a cardinality estimate from a statistics file")
    p.add_argument("--stats", required=True)
    p.add_argument("--props", required=True, help="comma-separated predicate IRIs")
    p.add_argument("--mode", choices=["distinct", "bag"], default="distinct")
    p.add_argument("--link-pred", help="estimate a link instead of a star")
    p.add_argument("--target-props", help="target star predicates for link estimates")
    p.set_defaults(func=cmd_estimate)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("ODYSSEY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NTriplesSyntaxError, QuerySyntaxError, InvalidBudget, ValueError) as exc:
        if isinstance(exc, HashMismatch):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INCOMPATIBLE
        if isinstance(exc, (UnsupportedFeature, FallbackRequired)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FRAGMENT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (fed_executor.UnknownEndpoint, fed_executor.ExecutionTimeout) as exc:
        print(f"error: execution failed: {exc!r}", file=sys.stderr)
        return EXIT_EXECUTION
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"error: malformed input: {exc!r}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
