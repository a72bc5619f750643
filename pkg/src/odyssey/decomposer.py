"""Grouping plan fragments into per-endpoint remote subqueries.

A maximal connected plan subtree whose stars are all single-sourced at the
same endpoint collapses into one remote subquery, so the endpoint evaluates
the whole fragment and ships only its result. Multi-source stars become a
union of per-endpoint requests; remaining joins keep the optimizer's order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from .optimizer import PlanJoin, PlanLeaf, PlanNode, PlanResult, SourceSelection
from .query_model import Query
from .rdf_model import Term, TriplePattern, Variable
from .rdf_model import _LineParser  # term grammar shared with the N-Triples reader


@dataclass
class RemoteSubquery:
    endpoint: str
    patterns: list[TriplePattern]
    distinct: bool = False

    def sparql(self) -> str:
        lines = ["SELECT * WHERE {", f"  SERVICE <urn:endpoint:{self.endpoint}> {{"]
        lines.extend(f"    {p.n3()}" for p in self.patterns)
        lines.extend(["  }", "}"])
        return "\n".join(lines)


@dataclass
class RemoteNode:
    subquery: RemoteSubquery
    est_card: Fraction = Fraction(0)


@dataclass
class UnionNode:
    children: list["ExecNode"]
    est_card: Fraction = Fraction(0)


@dataclass
class HashJoinNode:
    left: "ExecNode"
    right: "ExecNode"
    join_vars: frozenset[Variable]
    est_card: Fraction = Fraction(0)


ExecNode = Union[RemoteNode, UnionNode, HashJoinNode]


@dataclass
class ExecutablePlan:
    root: ExecNode | None
    nss: int = 0
    nsq: int = 0
    projection: list[Variable] | None = None
    distinct: bool = False
    empty: bool = False


def _count_remotes(node: ExecNode | None) -> int:
    if node is None:
        return 0
    if isinstance(node, RemoteNode):
        return 1
    if isinstance(node, UnionNode):
        return sum(_count_remotes(c) for c in node.children)
    return _count_remotes(node.left) + _count_remotes(node.right)


def _plan_nss(node: PlanNode) -> int:
    if isinstance(node, PlanLeaf):
        return len(node.star.patterns) * len(node.sources)
    return _plan_nss(node.left) + _plan_nss(node.right)


def _mergeable(node: PlanNode) -> bool:
    if isinstance(node, PlanLeaf):
        return node.endpoint_assignment is not None
    return (
        node.endpoint_assignment is not None
        and not node.cartesian
        and _mergeable(node.left)
        and _mergeable(node.right)
    )


def _collect_patterns(node: PlanNode) -> list[TriplePattern]:
    if isinstance(node, PlanLeaf):
        return list(node.ordered_patterns)
    return _collect_patterns(node.left) + _collect_patterns(node.right)


def decompose(plan: PlanNode, sel: SourceSelection, merge: bool = True) -> ExecutablePlan:
    """Turn an annotated join tree into remote subqueries and hash joins.

    ``merge`` exists for accounting comparisons: with it off, every star is
    shipped as its own remote subquery even when co-located.
    """

    def walk(node: PlanNode) -> ExecNode:
        if merge and _mergeable(node):
            endpoint = node.endpoint_assignment
            assert endpoint is not None
            return RemoteNode(
                RemoteSubquery(endpoint, _collect_patterns(node)), est_card=node.est_card
            )
        if isinstance(node, PlanLeaf):
            remotes: list[ExecNode] = [
                RemoteNode(
                    RemoteSubquery(ds, list(node.ordered_patterns)), est_card=node.est_card
                )
                for ds in node.sources
            ]
            if len(remotes) == 1:
                return remotes[0]
            return UnionNode(remotes, est_card=node.est_card)
        return HashJoinNode(
            walk(node.left), walk(node.right), node.join_vars, est_card=node.est_card
        )

    root = walk(plan)
    return ExecutablePlan(root, nss=_plan_nss(plan), nsq=_count_remotes(root))


def decompose_result(
    result: PlanResult, query: Query, merge: bool = True
) -> ExecutablePlan:
    """Decompose an optimizer result, carrying the query's output shape."""
    if result.empty or result.root is None:
        return ExecutablePlan(
            None,
            nss=result.selection.nss(result.star_graph),
            nsq=0,
            projection=query.projected(),
            distinct=query.distinct,
            empty=True,
        )
    plan = decompose(result.root, result.selection, merge=merge)
    plan.projection = query.projected()
    plan.distinct = query.distinct
    return plan


# --- JSON plan file ---------------------------------------------------------


def _term_to_str(term) -> str:
    return str(term) if isinstance(term, Variable) else term.n3()


def _term_from_str(text: str):
    if text.startswith("?"):
        return Variable(text[1:])
    return _LineParser(text, 0, scope="").term()


def _pattern_to_dict(p: TriplePattern) -> dict:
    return {
        "s": _term_to_str(p.subject),
        "p": _term_to_str(p.predicate),
        "o": _term_to_str(p.object),
        "tp": p.label,
    }


def _pattern_from_dict(doc: dict) -> TriplePattern:
    return TriplePattern(
        _term_from_str(doc["s"]),
        _term_from_str(doc["p"]),
        _term_from_str(doc["o"]),
        label=doc["tp"],
    )


def _node_to_dict(node: ExecNode) -> dict:
    if isinstance(node, RemoteNode):
        return {
            "type": "remote",
            "endpoint": node.subquery.endpoint,
            "patterns": [_pattern_to_dict(p) for p in node.subquery.patterns],
            "sparql": node.subquery.sparql(),
            "est_card": str(node.est_card),
        }
    if isinstance(node, UnionNode):
        return {
            "type": "union",
            "children": [_node_to_dict(c) for c in node.children],
            "est_card": str(node.est_card),
        }
    return {
        "type": "hash_join",
        "vars": sorted(v.name for v in node.join_vars),
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
        "est_card": str(node.est_card),
    }


def _node_from_dict(doc: dict) -> ExecNode:
    est = Fraction(doc["est_card"])
    if doc["type"] == "remote":
        return RemoteNode(
            RemoteSubquery(doc["endpoint"], [_pattern_from_dict(p) for p in doc["patterns"]]),
            est_card=est,
        )
    if doc["type"] == "union":
        return UnionNode([_node_from_dict(c) for c in doc["children"]], est_card=est)
    return HashJoinNode(
        _node_from_dict(doc["left"]),
        _node_from_dict(doc["right"]),
        frozenset(Variable(v) for v in doc["vars"]),
        est_card=est,
    )


def plan_to_dict(plan: ExecutablePlan) -> dict:
    return {
        "root": None if plan.root is None else _node_to_dict(plan.root),
        "nss": plan.nss,
        "nsq": plan.nsq,
        "projection": None
        if plan.projection is None
        else [v.name for v in plan.projection],
        "distinct": plan.distinct,
        "empty": plan.empty,
    }


def plan_from_dict(doc: dict) -> ExecutablePlan:
    return ExecutablePlan(
        root=None if doc["root"] is None else _node_from_dict(doc["root"]),
        nss=doc["nss"],
        nsq=doc["nsq"],
        projection=None
        if doc["projection"] is None
        else [Variable(v) for v in doc["projection"]],
        distinct=doc["distinct"],
        empty=doc["empty"],
    )
