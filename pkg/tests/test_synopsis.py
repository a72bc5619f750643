import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odyssey.cs_builder import CharacteristicSet, build_statistics
from odyssey.rdf_model import Dataset
from odyssey.synopsis import (
    LSB_MODULUS,
    BucketNode,
    Leaf,
    NotPresent,
    ObjectRole,
    SubjectRole,
    build_descriptions,
    build_tree,
    descriptions_to_dict,
    lsb,
    membership_maybe,
    remove_entity,
    split_iri,
    suffix_hash,
    tree_from_dict,
    tree_to_dict,
)
from odyssey.synopsis import EntityDescriptions
from odyssey import synthetic

from corpus import p, t2_dataset, toy_dataset


def cs(*names):
    return CharacteristicSet.of(p(n) for n in names)


def test_split_iri_path():
    assert split_iri("http://data.linkedmdb.org/resource/film/28350") == (
        "http://data.linkedmdb.org/resource/film/",
        "28350",
    )


def test_split_iri_fragment():
    assert split_iri("http://x/a#b") == ("http://x/a#", "b")


def test_split_iri_opaque():
    assert split_iri("opaque") == ("", "opaque")


def test_split_iri_fragment_after_slash():
    # '#' occurs later than the last '/', so it wins
    assert split_iri("http://x/a/b#frag") == ("http://x/a/b#", "frag")


@given(st.text(alphabet="abc/#xyz0189:.", min_size=1, max_size=20))
def test_split_iri_roundtrips(iri):
    prefix, suffix = split_iri(iri)
    assert prefix + suffix == iri
    if "/" in iri or "#" in iri:
        assert prefix
        assert prefix[-1] in "/#"


def test_lsb_range():
    for value in (0, 1, LSB_MODULUS - 1, LSB_MODULUS, 2**63, 2**64 - 1):
        assert 0 <= lsb(value) < LSB_MODULUS


def test_build_descriptions_t2():
    d = t2_dataset()
    stats = build_statistics(d)
    desc = build_descriptions(d, stats)
    assert desc.local_subjects[cs("p9")] == {"http://x/f1"}
    assert desc.local_objects[(p("p3"), cs("p1", "p2", "p3"))] == {"http://x/f1"}


def test_build_descriptions_empty():
    d = Dataset("e", [])
    desc = build_descriptions(d, build_statistics(d))
    assert desc.local_subjects == {}
    assert desc.local_objects == {}


def test_build_descriptions_exclude_blanks():
    d = toy_dataset("d", [("_:b", "p1", "v"), ("e1", "p2", "_:b")])
    desc = build_descriptions(d, build_statistics(d))
    assert desc.local_subjects.get(cs("p1")) is None
    assert desc.local_objects.get((p("p2"), cs("p2"))) is None
    # the IRI subject itself is still described
    assert desc.local_subjects[cs("p2")] == {"http://x/e1"}


def _singleton_descriptions(iris, key=None):
    desc = EntityDescriptions("d")
    desc.local_subjects[key or cs("p1")] = set(iris)
    return desc


def test_build_tree_singleton():
    iri = "http://x/e1"
    tree = build_tree(_singleton_descriptions([iri]), leaf_capacity=4)
    assert list(tree.prefixes) == ["http://x/"]
    node = tree.prefixes["http://x/"]
    assert isinstance(node, Leaf)
    h = suffix_hash("e1")
    assert node.mn == node.mx == h
    assert node.num == 1


def test_build_tree_capacity_one_splits_leaves():
    tree = build_tree(
        _singleton_descriptions(["http://x/e1", "http://x/e2"]), leaf_capacity=1
    )
    node = tree.prefixes["http://x/"]
    assert isinstance(node, BucketNode)
    assert node.num == 2
    leaves = node.children
    assert len(leaves) == 2
    assert all(isinstance(l, Leaf) for l in leaves)
    assert leaves[0].mx < leaves[1].mn


def test_entity_in_both_roles_shares_leaf():
    desc = EntityDescriptions("d")
    desc.local_subjects[cs("p1")] = {"http://x/e1"}
    desc.local_objects[(p("p2"), cs("p2"))] = {"http://x/e1"}
    tree = build_tree(desc, leaf_capacity=8)
    leaf = tree.prefixes["http://x/"]
    assert isinstance(leaf, Leaf)
    assert leaf.num == 2
    assert membership_maybe(tree, "http://x/e1", SubjectRole(cs("p1")))
    assert membership_maybe(tree, "http://x/e1", ObjectRole(p("p2"), cs("p2")))


def test_membership_no_false_negatives_randomized():
    rng = random.Random(13)
    for round_ in range(5):
        d = synthetic.random_dataset(
            rng, f"m{round_}", n_entities=rng.randint(1, 60), iri_object_rate=0.3
        )
        stats = build_statistics(d)
        desc = build_descriptions(d, stats)
        tree = build_tree(desc, leaf_capacity=rng.choice([1, 2, 8, 4096]))
        for c, iris in desc.local_subjects.items():
            for iri in iris:
                assert membership_maybe(tree, iri, SubjectRole(c))
        for (pred, c), iris in desc.local_objects.items():
            for iri in iris:
                assert membership_maybe(tree, iri, ObjectRole(pred, c))


def test_membership_prefix_prune():
    tree = build_tree(_singleton_descriptions(["http://x/e1"]), leaf_capacity=4)
    assert not membership_maybe(tree, "http://elsewhere/e1", SubjectRole(cs("p1")))


def test_membership_wrong_role_is_false():
    tree = build_tree(_singleton_descriptions(["http://x/e1"]), leaf_capacity=4)
    assert not membership_maybe(tree, "http://x/e1", SubjectRole(cs("p2")))
    assert not membership_maybe(tree, "http://x/e1", ObjectRole(p("p1"), cs("p1")))


def find_lsb_collision(prefix="s"):
    """Three suffixes a, b, fence with hash(a) != hash(b),
    lsb(a) == lsb(b), and the fence hash above both."""
    by_lsb: dict[int, str] = {}
    pair = None
    i = 0
    while pair is None:
        suffix = f"{prefix}{i}"
        low = lsb(suffix_hash(suffix))
        if low in by_lsb and suffix_hash(by_lsb[low]) != suffix_hash(suffix):
            pair = (by_lsb[low], suffix)
        else:
            by_lsb[low] = suffix
        i += 1
    a, b = sorted(pair, key=lambda s: suffix_hash(s))
    top = max(suffix_hash(a), suffix_hash(b))
    while True:
        suffix = f"{prefix}{i}"
        if suffix_hash(suffix) > top:
            return a, b, suffix
        i += 1


def test_membership_false_positive_on_lsb_collision():
    a, b, fence = find_lsb_collision()
    inserted = [f"http://x/{a}", f"http://x/{fence}"]
    tree = build_tree(_singleton_descriptions(inserted), leaf_capacity=16)
    absent = f"http://x/{b}"
    assert absent not in inserted
    assert membership_maybe(tree, absent, SubjectRole(cs("p1")))


def test_remove_single_insert():
    tree = build_tree(_singleton_descriptions(["http://x/e1"]), leaf_capacity=4)
    remove_entity(tree, "http://x/e1", SubjectRole(cs("p1")))
    assert not membership_maybe(tree, "http://x/e1", SubjectRole(cs("p1")))


def test_remove_keeps_colliding_sibling():
    a, b, _ = find_lsb_collision()
    tree = build_tree(
        _singleton_descriptions([f"http://x/{a}", f"http://x/{b}"]), leaf_capacity=16
    )
    remove_entity(tree, f"http://x/{a}", SubjectRole(cs("p1")))
    assert membership_maybe(tree, f"http://x/{b}", SubjectRole(cs("p1")))
    # the removed entity collides with the survivor, so lookups stay true
    assert membership_maybe(tree, f"http://x/{a}", SubjectRole(cs("p1")))


def test_remove_absent_raises():
    tree = build_tree(_singleton_descriptions(["http://x/e1"]), leaf_capacity=4)
    with pytest.raises(NotPresent):
        remove_entity(tree, "http://x/e9", SubjectRole(cs("p1")))
    with pytest.raises(NotPresent):
        remove_entity(tree, "http://x/e1", ObjectRole(p("p1"), cs("p1")))


def test_remove_decrements_num_on_path():
    iris = [f"http://x/e{i}" for i in range(40)]
    tree = build_tree(_singleton_descriptions(iris), leaf_capacity=2)
    root = tree.prefixes["http://x/"]
    before = root.num
    remove_entity(tree, iris[7], SubjectRole(cs("p1")))
    assert root.num == before - 1


def _audit(node) -> int:
    """Returns the node subtree's total multiplicity while checking ranges."""
    if isinstance(node, Leaf):
        total = 0
        for counts in list(node.subj_lsb.values()) + list(node.obj_lsb.values()):
            for value, mult in counts.items():
                assert 0 <= value < LSB_MODULUS
                assert mult >= 1
                total += mult
        assert total == node.num
        return total
    assert node.children
    total = 0
    previous = None
    for child in node.children:
        assert node.mn <= child.mn <= child.mx <= node.mx
        if previous is not None:
            assert previous.mx < child.mn
        previous = child
        total += _audit(child)
    assert total == node.num
    return total


def test_structural_audit_randomized():
    rng = random.Random(17)
    for round_ in range(8):
        d = synthetic.random_dataset(
            rng, f"a{round_}", n_entities=rng.randint(1, 80), iri_object_rate=0.4
        )
        stats = build_statistics(d)
        tree = build_tree(build_descriptions(d, stats), leaf_capacity=rng.choice([1, 3, 7]))
        for node in tree.prefixes.values():
            _audit(node)


def test_tree_smaller_than_descriptions():
    rng = random.Random(19)
    d = synthetic.random_dataset(rng, "big", n_entities=1200, iri_object_rate=0.3)
    stats = build_statistics(d)
    desc = build_descriptions(d, stats)
    tree = build_tree(desc)
    tree_size = len(json.dumps(tree_to_dict(tree, stats)))
    desc_size = len(json.dumps(descriptions_to_dict(desc, stats)))
    assert tree_size < desc_size


def test_tree_json_roundtrip_preserves_membership():
    d = t2_dataset()
    stats = build_statistics(d)
    desc = build_descriptions(d, stats)
    tree = build_tree(desc, leaf_capacity=2)
    doc = json.loads(json.dumps(tree_to_dict(tree, stats)))
    again = tree_from_dict(doc, stats)
    assert tree_to_dict(again, stats) == tree_to_dict(tree, stats)
    for c, iris in desc.local_subjects.items():
        for iri in iris:
            assert membership_maybe(again, iri, SubjectRole(c))


def test_build_tree_rejects_bad_capacity():
    with pytest.raises(ValueError):
        build_tree(EntityDescriptions("d"), leaf_capacity=0)
