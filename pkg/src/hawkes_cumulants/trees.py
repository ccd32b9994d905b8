"""Rooted trees with labeled leaves and internal out-degree at least two.

A tree is stored as a nested tuple: a leaf is its integer label, an internal
node is the tuple of its children.  In canonical form the children of every
node are ordered by the smallest leaf label of their subtree, so two trees
are topologically identical exactly when their canonical structures are
equal.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import comb
from typing import Iterator, Sequence

from .errors import MalformedTreeError, SizeError

DEFAULT_N_MAX = 8


def set_partitions(items: Sequence) -> Iterator[list[list]]:
    """All set partitions of ``items``, blocks ordered by first element."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _sorted_partitions(items: tuple) -> list[tuple[tuple, ...]]:
    out = []
    for part in set_partitions(items):
        blocks = sorted(tuple(sorted(b)) for b in part)
        out.append(tuple(blocks))
    return out


def _min_label(node) -> int:
    while isinstance(node, tuple):
        node = node[0]
    return node


@lru_cache(maxsize=None)
def _structures(labels: tuple) -> tuple:
    if len(labels) == 1:
        return (labels[0],)
    out = []
    for blocks in _sorted_partitions(labels):
        if len(blocks) < 2:
            continue
        out.extend(product(*(_structures(b) for b in blocks)))
    return tuple(out)


class LeafLabeledTree:
    """Immutable leaf-labeled rooted tree.

    ``structure`` is the canonical nested tuple.  ``nodes()`` gives the
    record view: node 0 is the root, ids follow a pre-order walk.
    """

    __slots__ = ("structure", "_n")

    def __init__(self, structure, _validated: bool = False):
        if not _validated:
            structure = _canonicalize(structure)
        self.structure = structure
        self._n = None

    @property
    def n_leaves(self) -> int:
        if self._n is None:
            self._n = sum(1 for _ in _iter_leaves(self.structure))
        return self._n

    def leaves(self) -> list[int]:
        return sorted(_iter_leaves(self.structure))

    def nodes(self) -> list[dict]:
        records: list[dict] = []

        def visit(node) -> int:
            nid = len(records)
            rec = {"id": nid, "children": [], "label": None}
            records.append(rec)
            if isinstance(node, tuple):
                rec["children"] = [visit(c) for c in node]
            else:
                rec["label"] = node
            return nid

        visit(self.structure)
        return records

    @classmethod
    def from_nodes(cls, records: Sequence[dict]) -> "LeafLabeledTree":
        """Build from ``{id, children, label}`` records; the root is the one node nobody points to."""
        by_id = {r["id"]: r for r in records}
        if len(by_id) != len(records):
            raise MalformedTreeError("duplicate node ids")
        child_ids = [c for r in records for c in r.get("children", [])]
        if len(set(child_ids)) != len(child_ids):
            raise MalformedTreeError("a node has more than one parent")
        roots = [i for i in by_id if i not in set(child_ids)]
        if len(roots) != 1:
            raise MalformedTreeError(f"expected exactly one root, found {len(roots)}")
        seen = set()

        def build(nid):
            if nid in seen:
                raise MalformedTreeError("cycle in node records")
            seen.add(nid)
            if nid not in by_id:
                raise MalformedTreeError(f"unknown child id {nid}")
            rec = by_id[nid]
            kids = rec.get("children", [])
            if kids:
                return tuple(build(c) for c in kids)
            if rec.get("label") is None:
                raise MalformedTreeError(f"leaf {nid} has no label")
            return int(rec["label"])

        structure = build(roots[0])
        if len(seen) != len(by_id):
            raise MalformedTreeError("disconnected node records")
        return cls(structure)

    def encode(self) -> str:
        return encode(self.structure)

    def relabel(self, mapping) -> "LeafLabeledTree":
        def sub(node):
            if isinstance(node, tuple):
                return tuple(sub(c) for c in node)
            return mapping[node]

        return LeafLabeledTree(sub(self.structure))

    def __eq__(self, other):
        return isinstance(other, LeafLabeledTree) and self.structure == other.structure

    def __hash__(self):
        return hash(self.structure)

    def __repr__(self):
        return f"LeafLabeledTree({self.encode()})"


def _iter_leaves(node):
    if isinstance(node, tuple):
        for c in node:
            yield from _iter_leaves(c)
    else:
        yield node


def _canonicalize(node):
    if isinstance(node, LeafLabeledTree):
        return node.structure
    labels = []

    def rec(x):
        if isinstance(x, (tuple, list)):
            if len(x) < 2:
                raise MalformedTreeError(f"internal node with out-degree {len(x)}")
            kids = [rec(c) for c in x]
            kids.sort(key=_min_label)
            return tuple(kids)
        if isinstance(x, bool) or not isinstance(x, int):
            raise MalformedTreeError(f"leaf label must be an integer, got {x!r}")
        labels.append(x)
        return x

    out = rec(node)
    if sorted(labels) != list(range(1, len(labels) + 1)):
        raise MalformedTreeError(f"leaf labels must be exactly 1..{len(labels)}, got {sorted(labels)}")
    return out


def canonical_form(tree) -> LeafLabeledTree:
    """Canonical version of a tree given as a LeafLabeledTree, nested sequence or node records."""
    if isinstance(tree, LeafLabeledTree):
        return LeafLabeledTree(tree.structure)
    if isinstance(tree, (list, tuple)) and tree and isinstance(tree[0], dict):
        return LeafLabeledTree.from_nodes(tree)
    return LeafLabeledTree(tree)


def encode(structure) -> str:
    """Nested-parenthesis encoding, e.g. ``(1,(2,3))``."""
    if isinstance(structure, tuple):
        return "(" + ",".join(encode(c) for c in structure) + ")"
    return str(structure)


def tree_structures(n: int, n_max: int = DEFAULT_N_MAX) -> tuple:
    """Canonical nested-tuple structures of all trees on leaves ``1..n``."""
    if n < 1:
        raise SizeError("need at least one leaf")
    if n > n_max:
        raise SizeError(f"enumeration limited to n <= {n_max} ({count_trees(n)} trees requested)")
    return _structures(tuple(range(1, n + 1)))


def enumerate_trees(n: int, n_max: int = DEFAULT_N_MAX) -> list[LeafLabeledTree]:
    """All topologically distinct trees on leaves ``1..n``.

    A tree on a leaf set is a single leaf, or a root whose children carry
    trees on the blocks of a partition of the set into two or more parts.
    Blocks are taken in order of their smallest label, which makes every
    generated structure canonical, so no deduplication pass is needed.
    """
    return [LeafLabeledTree(s, _validated=True) for s in tree_structures(n, n_max)]


@lru_cache(maxsize=None)
def _forests(n: int) -> int:
    # number of ways to split n labeled leaves into blocks, each carrying a tree
    if n == 0:
        return 1
    return sum(comb(n - 1, k - 1) * count_trees(k) * _forests(n - k) for k in range(1, n + 1))


@lru_cache(maxsize=None)
def count_trees(n: int) -> int:
    """Number of trees on ``n`` labeled leaves, without enumerating them."""
    if n < 1:
        raise SizeError("need at least one leaf")
    if n == 1:
        return 1
    # a root splits the leaves into >= 2 blocks; condition on the block holding leaf 1
    return sum(comb(n - 1, k - 1) * count_trees(k) * _forests(n - k) for k in range(1, n))
