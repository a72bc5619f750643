"""Cross-dataset link statistics (federated characteristic pairs).

An FCP (C_i, C_j, p) with count n says: n distinct entities are objects of
p-triples under source CS C_i in one dataset while being subjects with CS C_j
in another. Counts are exact when computed from full entity descriptions and
conservative (never missing a real link, possibly overcounting) when computed
from synopsis trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .cs_builder import (
    CharacteristicPair,
    CharacteristicSet,
    DatasetStatistics,
    build_statistics,
    merge_to_budget,
)
from .rdf_model import Dataset
from .synopsis import (
    DEFAULT_LEAF_CAPACITY,
    BucketNode,
    EntityDescriptions,
    Leaf,
    Node,
    SynopsisTree,
    build_descriptions,
    build_tree,
)


class HashMismatch(ValueError):
    pass


@dataclass
class FcpStatistics:
    source_dataset: str
    target_dataset: str
    cp: CharacteristicPair
    count: int
    exact: bool


@dataclass
class DatasetSummary:
    """Everything the linker knows about one member of a federation."""

    stats: DatasetStatistics
    tree: SynopsisTree
    descriptions: EntityDescriptions | None = None
    endpoint: str = ""

    @property
    def dataset_id(self) -> str:
        return self.stats.dataset_id


@dataclass
class FederationStatistics:
    datasets: dict[str, DatasetStatistics] = field(default_factory=dict)
    fcps: dict[tuple[str, str], list[FcpStatistics]] = field(default_factory=dict)
    endpoints: dict[str, str] = field(default_factory=dict)

    def dataset_ids(self) -> list[str]:
        return sorted(self.datasets)

    def fcps_between(self, source: str, target: str) -> list[FcpStatistics]:
        return self.fcps.get((source, target), [])


def compute_fcps_exact(
    obj: dict[tuple[str, CharacteristicSet], set[str]],
    subj: dict[CharacteristicSet, set[str]],
    source_dataset: str = "",
    target_dataset: str = "",
) -> list[FcpStatistics]:
    """Exact FCPs from one dataset's link objects and another's subjects.

    For every (predicate, source CS) object set and every target CS subject
    set, a non-empty IRI intersection yields an FCP counting the distinct
    shared entities. Each target CS intersects a fresh copy of the object
    set, so earlier intersections never shrink later ones.
    """
    out: list[FcpStatistics] = []
    for pred, source_cs in sorted(obj, key=lambda k: (k[0], k[1].properties)):
        entities = obj[(pred, source_cs)]
        for target_cs in sorted(subj, key=lambda c: c.properties):
            common = entities & subj[target_cs]
            if common:
                cp = CharacteristicPair(source_cs, target_cs, pred)
                out.append(
                    FcpStatistics(source_dataset, target_dataset, cp, len(common), exact=True)
                )
    out.sort(key=_fcp_key)
    return out


def _fcp_key(f: FcpStatistics):
    return (f.cp.source_cs.properties, f.cp.target_cs.properties, f.cp.predicate)


def _overlapping_leaf_pairs(a: Node, b: Node, out: list[tuple[Leaf, Leaf]]) -> None:
    if a.mn > b.mx or b.mn > a.mx:
        return
    if isinstance(a, BucketNode):
        for child in a.children:
            _overlapping_leaf_pairs(child, b, out)
    elif isinstance(b, BucketNode):
        for child in b.children:
            _overlapping_leaf_pairs(a, child, out)
    else:
        out.append((a, b))


def compute_fcps_synopsis(t1: SynopsisTree, t2: SynopsisTree) -> list[FcpStatistics]:
    """Approximate FCPs from two synopsis trees.

    Only leaves under shared prefixes with overlapping hash ranges are
    compared; a leaf pair contributes the sum over shared low-16-bit values
    of the smaller multiplicity. The result is a superset of the exact FCP
    set: any truly shared IRI hashes identically on both sides and therefore
    always lands in a compared pair.
    """
    if t1.hash_fn_id != t2.hash_fn_id:
        raise HashMismatch(
            f"synopses use different hash functions: {t1.hash_fn_id!r} vs {t2.hash_fn_id!r}"
        )
    counts: dict[tuple[CharacteristicSet, CharacteristicSet, str], int] = {}
    for prefix in sorted(set(t1.prefixes) & set(t2.prefixes)):
        pairs: list[tuple[Leaf, Leaf]] = []
        _overlapping_leaf_pairs(t1.prefixes[prefix], t2.prefixes[prefix], pairs)
        for obj_leaf, subj_leaf in pairs:
            for (pred, source_cs), obj_counts in obj_leaf.obj_lsb.items():
                for target_cs, subj_counts in subj_leaf.subj_lsb.items():
                    shared = 0
                    for value, mult in obj_counts.items():
                        other = subj_counts.get(value)
                        if other:
                            shared += min(mult, other)
                    if shared:
                        key = (source_cs, target_cs, pred)
                        counts[key] = counts.get(key, 0) + shared
    out = [
        FcpStatistics(
            t1.dataset_id,
            t2.dataset_id,
            CharacteristicPair(source_cs, target_cs, pred),
            n,
            exact=False,
        )
        for (source_cs, target_cs, pred), n in counts.items()
    ]
    out.sort(key=_fcp_key)
    return out


def summarize_dataset(
    d: Dataset,
    max_cs: int | None = None,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    with_descriptions: bool = False,
    endpoint: str = "",
) -> DatasetSummary:
    """Statistics, descriptions, and synopsis tree for one dataset."""
    stats = build_statistics(d)
    if max_cs is not None:
        stats = merge_to_budget(stats, max_cs)
    desc = build_descriptions(d, stats)
    tree = build_tree(desc, leaf_capacity)
    return DatasetSummary(
        stats,
        tree,
        descriptions=desc if with_descriptions else None,
        endpoint=endpoint or d.id,
    )


def link_federation(members: Sequence[DatasetSummary]) -> FederationStatistics:
    """FCPs for every ordered dataset pair plus the per-dataset statistics.

    Pairs where both members carry full descriptions are linked exactly;
    otherwise the synopsis trees are compared.
    """
    if not members:
        raise ValueError("a federation needs at least one dataset")
    fed = FederationStatistics()
    for m in members:
        fed.datasets[m.dataset_id] = m.stats
        fed.endpoints[m.dataset_id] = m.endpoint or m.dataset_id
    for src in members:
        for dst in members:
            if src.dataset_id == dst.dataset_id:
                continue
            if src.descriptions is not None and dst.descriptions is not None:
                fcps = compute_fcps_exact(
                    src.descriptions.local_objects,
                    dst.descriptions.local_subjects,
                    source_dataset=src.dataset_id,
                    target_dataset=dst.dataset_id,
                )
            else:
                fcps = compute_fcps_synopsis(src.tree, dst.tree)
            fed.fcps[(src.dataset_id, dst.dataset_id)] = fcps
    return fed


# --- JSON federation statistics file ---------------------------------------


def federation_to_dict(fed: FederationStatistics, refs: dict[str, dict] | None = None) -> dict:
    refs = refs or {}
    datasets = []
    for ds_id in fed.dataset_ids():
        entry = {"dataset_id": ds_id}
        entry.update(refs.get(ds_id, {}))
        datasets.append(entry)
    fcps = []
    for (src_ds, dst_ds) in sorted(fed.fcps):
        src_stats = fed.datasets[src_ds]
        dst_stats = fed.datasets[dst_ds]
        for f in fed.fcps[(src_ds, dst_ds)]:
            fcps.append(
                {
                    "src_ds": src_ds,
                    "dst_ds": dst_ds,
                    "src_cs": src_stats.cs_index(f.cp.source_cs),
                    "dst_cs": dst_stats.cs_index(f.cp.target_cs),
                    "pred": f.cp.predicate,
                    "count": f.count,
                    "exact": f.exact,
                }
            )
    return {"datasets": datasets, "fcps": fcps}


def federation_from_dict(
    doc: dict, stats_by_id: dict[str, DatasetStatistics], endpoints: dict[str, str] | None = None
) -> FederationStatistics:
    fed = FederationStatistics()
    for entry in doc["datasets"]:
        ds_id = entry["dataset_id"]
        fed.datasets[ds_id] = stats_by_id[ds_id]
        fed.endpoints[ds_id] = (endpoints or {}).get(ds_id, ds_id)
        for other in doc["datasets"]:
            if other["dataset_id"] != ds_id:
                fed.fcps.setdefault((ds_id, other["dataset_id"]), [])
    for entry in doc["fcps"]:
        src_stats = stats_by_id[entry["src_ds"]]
        dst_stats = stats_by_id[entry["dst_ds"]]
        cp = CharacteristicPair(
            src_stats.by_index(entry["src_cs"]).cs,
            dst_stats.by_index(entry["dst_cs"]).cs,
            entry["pred"],
        )
        fed.fcps.setdefault((entry["src_ds"], entry["dst_ds"]), []).append(
            FcpStatistics(entry["src_ds"], entry["dst_ds"], cp, entry["count"], entry["exact"])
        )
    return fed
