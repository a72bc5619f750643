"""Entity descriptions and their compressed three-level tree summary.

Full entity descriptions record, per characteristic set, which IRIs occur as
subjects (``local_subjects``) and which IRIs occur as objects of link triples
keyed by (predicate, subject CS) (``local_objects``). The synopsis tree
summarizes both maps: the top level factorizes shared IRI prefixes, the
middle level holds buckets over ranges of 64-bit suffix hashes, and leaves
keep only each hash's low 16 bits with a multiplicity per role. Lookups can
report false positives but never false negatives for inserted IRIs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

from .cs_builder import CharacteristicSet, DatasetStatistics
from .rdf_model import IRI, Dataset, scan_by_subject

HASH_FN_ID = "fnv1a-64"
LSB_MODULUS = 1 << 16
DEFAULT_LEAF_CAPACITY = 4096
BUCKET_FANOUT = 16

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class NotPresent(KeyError):
    pass


def suffix_hash(suffix: str) -> int:
    """FNV-1a over the UTF-8 bytes of an IRI suffix, 64-bit."""
    h = _FNV_OFFSET
    for b in suffix.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def lsb(value: int) -> int:
    return value % LSB_MODULUS


def split_iri(iri: str) -> tuple[str, str]:
    """Split at the last '/' or '#', keeping the separator on the prefix."""
    if not iri:
        raise ValueError("cannot split an empty IRI")
    cut = max(iri.rfind("/"), iri.rfind("#"))
    if cut < 0:
        return "", iri
    return iri[: cut + 1], iri[cut + 1 :]


# --- roles ----------------------------------------------------------------


@dataclass(frozen=True)
class SubjectRole:
    cs: CharacteristicSet


@dataclass(frozen=True)
class ObjectRole:
    predicate: str
    cs: CharacteristicSet


Role = Union[SubjectRole, ObjectRole]


# --- full descriptions ----------------------------------------------------


@dataclass
class EntityDescriptions:
    dataset_id: str
    local_subjects: dict[CharacteristicSet, set[str]] = field(default_factory=dict)
    local_objects: dict[tuple[str, CharacteristicSet], set[str]] = field(default_factory=dict)


def build_descriptions(d: Dataset, stats: DatasetStatistics) -> EntityDescriptions:
    """Collect subject and link-object IRIs per (possibly merged) CS.

    Blank nodes never appear: their labels are file-scoped and cannot match
    across datasets. Subjects whose CS was split by merging register under
    every kept part.
    """
    if stats.merged and stats.routing is None:
        raise ValueError("merged statistics without routing; rebuild them in-process")
    desc = EntityDescriptions(d.id)
    for subject, triples in scan_by_subject(d):
        props = tuple(sorted({t.predicate.lexical for t in triples}))
        subject_css = [stats.by_index(i).cs for i, _ in stats.route(props)]
        if subject.kind == IRI:
            for cs in subject_css:
                desc.local_subjects.setdefault(cs, set()).add(subject.lexical)
        for t in triples:
            if t.object.kind != IRI:
                continue
            for cs in subject_css:
                desc.local_objects.setdefault((t.predicate.lexical, cs), set()).add(
                    t.object.lexical
                )
    return desc


def descriptions_to_dict(desc: EntityDescriptions, stats: DatasetStatistics) -> dict:
    return {
        "dataset_id": desc.dataset_id,
        "local_subjects": {
            str(stats.cs_index(cs)): sorted(iris) for cs, iris in desc.local_subjects.items()
        },
        "local_objects": {
            f"{pred}|{stats.cs_index(cs)}": sorted(iris)
            for (pred, cs), iris in desc.local_objects.items()
        },
    }


# --- tree nodes -----------------------------------------------------------


@dataclass
class Leaf:
    mn: int
    mx: int
    num: int
    subj_lsb: dict[CharacteristicSet, dict[int, int]] = field(default_factory=dict)
    obj_lsb: dict[tuple[str, CharacteristicSet], dict[int, int]] = field(default_factory=dict)

    def role_map(self, role: Role) -> dict[int, int] | None:
        if isinstance(role, SubjectRole):
            return self.subj_lsb.get(role.cs)
        return self.obj_lsb.get((role.predicate, role.cs))


@dataclass
class BucketNode:
    mn: int
    mx: int
    num: int
    children: list[Union["BucketNode", Leaf]] = field(default_factory=list)


Node = Union[BucketNode, Leaf]


@dataclass
class SynopsisTree:
    dataset_id: str
    prefixes: dict[str, Node] = field(default_factory=dict)
    hash_fn_id: str = HASH_FN_ID
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY

    def leaves(self) -> Iterator[tuple[str, Leaf]]:
        for prefix in sorted(self.prefixes):
            yield from ((prefix, leaf) for leaf in _iter_leaves(self.prefixes[prefix]))


def _iter_leaves(node: Node) -> Iterator[Leaf]:
    if isinstance(node, Leaf):
        yield node
        return
    for child in node.children:
        yield from _iter_leaves(child)


def build_tree(desc: EntityDescriptions, leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> SynopsisTree:
    """Summarize descriptions into the prefix/bucket/leaf tree.

    Hashes under one prefix are sorted and packed into balanced leaves of at
    most ``leaf_capacity`` distinct hashes; leaves are grouped under buckets
    with fanout 16 until a single node remains per prefix.
    """
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be >= 1")
    # prefix -> hash -> list of roles carrying that hash
    grouped: dict[str, dict[int, list[Role]]] = {}

    def insert(iri: str, role: Role) -> None:
        prefix, suffix = split_iri(iri)
        grouped.setdefault(prefix, {}).setdefault(suffix_hash(suffix), []).append(role)

    for cs in sorted(desc.local_subjects, key=lambda c: c.properties):
        for iri in sorted(desc.local_subjects[cs]):
            insert(iri, SubjectRole(cs))
    for pred, cs in sorted(desc.local_objects, key=lambda k: (k[0], k[1].properties)):
        for iri in sorted(desc.local_objects[(pred, cs)]):
            insert(iri, ObjectRole(pred, cs))

    tree = SynopsisTree(desc.dataset_id, leaf_capacity=leaf_capacity)
    for prefix in sorted(grouped):
        by_hash = grouped[prefix]
        hashes = sorted(by_hash)
        n_leaves = -(-len(hashes) // leaf_capacity)
        leaves: list[Node] = []
        for i in range(n_leaves):
            chunk = hashes[i * len(hashes) // n_leaves : (i + 1) * len(hashes) // n_leaves]
            leaf = Leaf(mn=chunk[0], mx=chunk[-1], num=0)
            for h in chunk:
                low = lsb(h)
                for role in by_hash[h]:
                    target = leaf.role_map(role)
                    if target is None:
                        target = {}
                        if isinstance(role, SubjectRole):
                            leaf.subj_lsb[role.cs] = target
                        else:
                            leaf.obj_lsb[(role.predicate, role.cs)] = target
                    target[low] = target.get(low, 0) + 1
                    leaf.num += 1
            leaves.append(leaf)
        tree.prefixes[prefix] = _build_buckets(leaves)
    return tree


def _build_buckets(nodes: list[Node]) -> Node:
    while len(nodes) > 1:
        grouped = []
        for i in range(0, len(nodes), BUCKET_FANOUT):
            chunk = nodes[i : i + BUCKET_FANOUT]
            if len(chunk) == 1:
                grouped.append(chunk[0])
            else:
                grouped.append(
                    BucketNode(
                        mn=chunk[0].mn,
                        mx=chunk[-1].mx,
                        num=sum(c.num for c in chunk),
                        children=chunk,
                    )
                )
        nodes = grouped
    return nodes[0]


def _find_leaf(node: Node, h: int, path: list[Node]) -> Leaf | None:
    if not (node.mn <= h <= node.mx):
        return None
    path.append(node)
    if isinstance(node, Leaf):
        return node
    for child in node.children:
        found = _find_leaf(child, h, path)
        if found is not None:
            return found
    path.pop()
    return None


def membership_maybe(tree: SynopsisTree, iri: str, role: Role) -> bool:
    """False only when the IRI is certainly absent in that role."""
    prefix, suffix = split_iri(iri)
    root = tree.prefixes.get(prefix)
    if root is None:
        return False
    leaf = _find_leaf(root, suffix_hash(suffix), [])
    if leaf is None:
        return False
    role_map = leaf.role_map(role)
    return bool(role_map) and lsb(suffix_hash(suffix)) in role_map


def remove_entity(tree: SynopsisTree, iri: str, role: Role) -> SynopsisTree:
    """Decrement the lsb multiplicity recorded for an inserted IRI.

    Ranges are left as conservative supersets so lookups stay
    false-negative-free without a rebuild; ``num`` shrinks along the path.
    """
    prefix, suffix = split_iri(iri)
    root = tree.prefixes.get(prefix)
    h = suffix_hash(suffix)
    path: list[Node] = []
    leaf = _find_leaf(root, h, path) if root is not None else None
    role_map = leaf.role_map(role) if leaf is not None else None
    low = lsb(h)
    if role_map is None or low not in role_map:
        raise NotPresent(f"{iri!r} is not recorded in that role")
    role_map[low] -= 1
    if role_map[low] == 0:
        del role_map[low]
    for node in path:
        node.num -= 1
    return tree


# --- JSON synopsis file ---------------------------------------------------


def _node_to_dict(node: Node, stats: DatasetStatistics) -> dict:
    if isinstance(node, BucketNode):
        return {
            "mn": node.mn,
            "mx": node.mx,
            "num": node.num,
            "children": [_node_to_dict(c, stats) for c in node.children],
        }
    subj = {
        str(stats.cs_index(cs)): {str(v): m for v, m in sorted(counts.items())}
        for cs, counts in node.subj_lsb.items()
    }
    obj = {
        f"{pred}|{stats.cs_index(cs)}": {str(v): m for v, m in sorted(counts.items())}
        for (pred, cs), counts in node.obj_lsb.items()
    }
    return {"mn": node.mn, "mx": node.mx, "num": node.num, "subj": subj, "obj": obj}


def _node_from_dict(doc: dict, stats: DatasetStatistics) -> Node:
    if "children" in doc:
        return BucketNode(
            mn=doc["mn"],
            mx=doc["mx"],
            num=doc["num"],
            children=[_node_from_dict(c, stats) for c in doc["children"]],
        )
    leaf = Leaf(mn=doc["mn"], mx=doc["mx"], num=doc["num"])
    for cs_id, counts in doc["subj"].items():
        cs = stats.by_index(int(cs_id)).cs
        leaf.subj_lsb[cs] = {int(v): m for v, m in counts.items()}
    for key, counts in doc["obj"].items():
        pred, _, cs_id = key.rpartition("|")
        cs = stats.by_index(int(cs_id)).cs
        leaf.obj_lsb[(pred, cs)] = {int(v): m for v, m in counts.items()}
    return leaf


def tree_to_dict(tree: SynopsisTree, stats: DatasetStatistics) -> dict:
    return {
        "dataset_id": tree.dataset_id,
        "hash_fn_id": tree.hash_fn_id,
        "leaf_capacity": tree.leaf_capacity,
        "prefixes": {
            prefix: _node_to_dict(node, stats) for prefix, node in sorted(tree.prefixes.items())
        },
    }


def tree_from_dict(doc: dict, stats: DatasetStatistics) -> SynopsisTree:
    tree = SynopsisTree(
        doc["dataset_id"], hash_fn_id=doc["hash_fn_id"], leaf_capacity=doc["leaf_capacity"]
    )
    for prefix, node in doc["prefixes"].items():
        tree.prefixes[prefix] = _node_from_dict(node, stats)
    return tree


def build_synopsis(d: Dataset, stats: DatasetStatistics, leaf_capacity: int = DEFAULT_LEAF_CAPACITY) -> SynopsisTree:
    """Descriptions and tree in one step (the usual pipeline path)."""
    return build_tree(build_descriptions(d, stats), leaf_capacity)
