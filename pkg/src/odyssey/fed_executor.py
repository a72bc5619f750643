"""Simulated federation execution with metrics.

Endpoints are in-process datasets answering BGP subqueries. The engine
evaluates an executable plan bottom-up with hash joins (building on the
smaller estimated side), counts every row returned by a remote request as a
transferred tuple, applies the final projection and DISTINCT, and enforces a
wall-clock timeout that discards partial results.
"""

from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .decomposer import ExecNode, ExecutablePlan, HashJoinNode, RemoteNode, UnionNode
from .query_model import Query
from .rdf_model import Dataset, Term, TriplePattern, Variable, _match_term, evaluate_bgp


class UnknownEndpoint(KeyError):
    pass


class ExecutionTimeout(RuntimeError):
    pass


@dataclass
class Endpoint:
    dataset_id: str
    dataset: Dataset
    latency_ms: float = 0.0

    def answer(self, patterns: Sequence[TriplePattern]) -> list[dict[Variable, Term]]:
        if self.latency_ms:
            time.sleep(self.latency_ms / 1000.0)
        return evaluate_bgp(self.dataset, patterns)


EndpointRegistry = Mapping[str, Endpoint]


@dataclass
class ExecutionMetrics:
    ntt: int = 0
    nsq: int = 0
    nss: int = 0
    elapsed_ms: float = 0.0
    result_count: int = 0
    timed_out: bool = False

    def to_dict(self) -> dict:
        return {
            "ntt": self.ntt,
            "nsq": self.nsq,
            "nss": self.nss,
            "elapsed_ms": self.elapsed_ms,
            "result_count": self.result_count,
            "timed_out": self.timed_out,
        }


@dataclass
class ResultSet:
    variables: list[Variable]
    rows: list[dict[Variable, Term]] = field(default_factory=list)
    distinct: bool = False

    def sorted_rows(self) -> list[tuple[str, ...]]:
        rendered = [
            tuple(row[v].n3() if v in row else "" for v in self.variables) for row in self.rows
        ]
        rendered.sort()
        return rendered

    def to_tsv(self) -> str:
        lines = ["\t".join(f"?{v.name}" for v in self.variables)]
        lines.extend("\t".join(cells) for cells in self.sorted_rows())
        return "\n".join(lines) + "\n"

    def as_counter(self) -> Counter:
        return Counter(self.sorted_rows())

    def as_set(self) -> set:
        return set(self.sorted_rows())

    def __len__(self) -> int:
        return len(self.rows)


class _Deadline:
    def __init__(self, timeout: float | None):
        self.expires = None if timeout is None else time.monotonic() + timeout

    def check(self) -> None:
        if self.expires is not None and time.monotonic() >= self.expires:
            raise ExecutionTimeout()


def _project(
    rows: list[dict[Variable, Term]], variables: list[Variable], distinct: bool
) -> list[dict[Variable, Term]]:
    projected = [{v: row[v] for v in variables if v in row} for row in rows]
    if not distinct:
        return projected
    seen = set()
    unique = []
    for row in projected:
        key = tuple(row.get(v) for v in variables)
        if key not in seen:
            seen.add(key)
            unique.append(row)
    return unique


def execute(
    plan: ExecutablePlan,
    endpoints: EndpointRegistry,
    timeout: float | None = None,
    raise_on_timeout: bool = False,
) -> tuple[ResultSet, ExecutionMetrics]:
    """Run the plan over the registered endpoints.

    Returns the (projected, optionally deduplicated) result set and the
    transfer metrics. A timeout empties the result set and flags the metrics
    instead of raising, unless ``raise_on_timeout`` is set.
    """
    metrics = ExecutionMetrics(nsq=plan.nsq, nss=plan.nss)
    deadline = _Deadline(timeout)
    start = time.monotonic()

    def evaluate(node: ExecNode) -> list[dict[Variable, Term]]:
        deadline.check()
        if isinstance(node, RemoteNode):
            endpoint = endpoints.get(node.subquery.endpoint)
            if endpoint is None:
                raise UnknownEndpoint(node.subquery.endpoint)
            rows = endpoint.answer(node.subquery.patterns)
            metrics.ntt += len(rows)
            return rows
        if isinstance(node, UnionNode):
            rows = []
            for child in node.children:
                rows.extend(evaluate(child))
            return rows
        left_rows = evaluate(node.left)
        right_rows = evaluate(node.right)
        deadline.check()
        return _hash_join(node, left_rows, right_rows, deadline)

    variables: list[Variable] = []
    rows: list[dict[Variable, Term]] = []
    try:
        if timeout is not None and timeout <= 0:
            raise ExecutionTimeout()
        if plan.root is not None:
            rows = evaluate(plan.root)
        variables = _output_variables(plan, rows)
        rows = _project(rows, variables, plan.distinct)
    except ExecutionTimeout:
        metrics.timed_out = True
        rows = []
        variables = _output_variables(plan, [])
        if raise_on_timeout:
            metrics.elapsed_ms = (time.monotonic() - start) * 1000.0
            raise
    metrics.elapsed_ms = (time.monotonic() - start) * 1000.0
    metrics.result_count = len(rows)
    return ResultSet(variables, rows, distinct=plan.distinct), metrics


def _output_variables(plan: ExecutablePlan, rows: list[dict[Variable, Term]]) -> list[Variable]:
    if plan.projection is not None:
        return list(plan.projection)
    seen: set[Variable] = set()
    if plan.root is not None:
        seen = _node_variables(plan.root)
    for row in rows:
        seen |= set(row)
    return sorted(seen, key=lambda v: v.name)


def _node_variables(node: ExecNode) -> set[Variable]:
    if isinstance(node, RemoteNode):
        out: set[Variable] = set()
        for p in node.subquery.patterns:
            out |= p.variables()
        return out
    if isinstance(node, UnionNode):
        out = set()
        for child in node.children:
            out |= _node_variables(child)
        return out
    return _node_variables(node.left) | _node_variables(node.right)


def _hash_join(
    node: HashJoinNode,
    left_rows: list[dict[Variable, Term]],
    right_rows: list[dict[Variable, Term]],
    deadline: _Deadline,
) -> list[dict[Variable, Term]]:
    # Build on the smaller estimated side; correctness does not depend on it.
    if node.right.est_card < node.left.est_card:
        build_rows, probe_rows = right_rows, left_rows
    else:
        build_rows, probe_rows = left_rows, right_rows
    keys = sorted(node.join_vars, key=lambda v: v.name)
    table: dict[tuple, list[dict[Variable, Term]]] = {}
    for row in build_rows:
        table.setdefault(tuple(row.get(v) for v in keys), []).append(row)
    out = []
    for i, row in enumerate(probe_rows):
        if i % 1024 == 0:
            deadline.check()
        for match in table.get(tuple(row.get(v) for v in keys), ()):
            merged = dict(match)
            merged.update(row)
            out.append(merged)
    return out


def federated_oracle(q: Query, endpoints: EndpointRegistry) -> ResultSet:
    """Ground-truth federated answer by per-pattern union and nested loops.

    Each pattern independently matches against every endpoint's dataset;
    solutions are built by extending bindings pattern by pattern. This path
    shares nothing with the planner or decomposer.
    """
    bindings: list[dict[Variable, Term]] = [{}]
    for pattern in q.patterns:
        extended: list[dict[Variable, Term]] = []
        for binding in bindings:
            for ds_id in sorted(endpoints):
                for t in endpoints[ds_id].dataset.triples:
                    attempt = dict(binding)
                    if (
                        _match_term(pattern.subject, t.subject, attempt)
                        and _match_term(pattern.predicate, t.predicate, attempt)
                        and _match_term(pattern.object, t.object, attempt)
                    ):
                        extended.append(attempt)
        bindings = extended
        if not bindings:
            break
    variables = q.projected()
    rows = _project(bindings, variables, q.distinct)
    return ResultSet(variables, rows, distinct=q.distinct)
