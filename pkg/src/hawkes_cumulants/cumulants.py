"""Integrated cumulants as sums over leaf-labeled trees.

Each tree contributes one term.  Its root carries the stationary rate of the
root type, every leaf edge a resolvent factor ``R[leaf type, node type]`` and
every internal edge a factor ``Psi[child type, parent type]``; internal node
types are summed over.  Contraction runs bottom-up, so each subtree reduces
to a length-``d`` vector indexed by the type of its top node.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MalformedTreeError, SizeError
from .model import BranchingSummary
from .trees import DEFAULT_N_MAX, LeafLabeledTree, canonical_form, tree_structures


@dataclass(frozen=True)
class TreeTerm:
    """Factor assignment of one tree.

    ``leaf_edges`` holds ``(leaf label, node id)`` pairs (R-kind factors),
    ``internal_edges`` holds ``(child id, parent id)`` pairs (Psi-kind
    factors); the root contributes the stationary rate.
    """

    tree: LeafLabeledTree
    root: int
    internal_nodes: tuple
    leaf_edges: tuple
    internal_edges: tuple

    @property
    def factor_counts(self) -> dict:
        return {"lambda": 1, "R": len(self.leaf_edges), "Psi": len(self.internal_edges)}


def compile_tree_term(tree) -> TreeTerm:
    tree = canonical_form(tree)
    records = tree.nodes()
    if records[0]["label"] is not None:
        if len(records) != 1:
            raise MalformedTreeError("leaf root with extra nodes")
        return TreeTerm(tree, 0, (), (), ())
    internal = tuple(r["id"] for r in records if r["children"])
    leaf_edges, internal_edges = [], []
    for r in records:
        for c in r["children"]:
            child = records[c]
            if child["label"] is not None:
                leaf_edges.append((child["label"], r["id"]))
            else:
                internal_edges.append((c, r["id"]))
    return TreeTerm(tree, 0, internal, tuple(leaf_edges), tuple(internal_edges))


def _check_types(types: Sequence[int], d: int) -> tuple:
    types = tuple(int(t) for t in types)
    if not types:
        raise SizeError("need at least one type index")
    for t in types:
        if not 0 <= t < d:
            raise IndexError(f"type index {t} out of range for d={d}")
    return types


def _contract(structure, types, R, PsiT, cache):
    # vector over the type of this node; cache is keyed by subtree structure
    hit = cache.get(structure)
    if hit is not None:
        return hit
    vec = None
    for child in structure:
        if isinstance(child, tuple):
            f = PsiT @ _contract(child, types, R, PsiT, cache)
        else:
            f = R[types[child - 1]]
        vec = f if vec is None else vec * f
    cache[structure] = vec
    return vec


def tree_contributions(summary: BranchingSummary, types: Sequence[int], n_max: int = DEFAULT_N_MAX):
    """Per-tree integrated contributions, in enumeration order."""
    types = _check_types(types, summary.d)
    n = len(types)
    if n == 1:
        return [(LeafLabeledTree(1), float(summary.lam[types[0]]))]
    PsiT = np.ascontiguousarray(summary.Psi.T)
    cache: dict = {}
    out = []
    for s in tree_structures(n, n_max):
        out.append((LeafLabeledTree(s, _validated=True), float(summary.lam @ _contract(s, types, summary.R, PsiT, cache))))
    return out


def integrated_cumulant(summary: BranchingSummary, types: Sequence[int], n_max: int = DEFAULT_N_MAX) -> float:
    """Per-unit-time integrated joint cumulant for the 0-based type multi-index ``types``."""
    types = _check_types(types, summary.d)
    n = len(types)
    if n == 1:
        return float(summary.lam[types[0]])
    PsiT = np.ascontiguousarray(summary.Psi.T)
    cache: dict = {}
    total = np.zeros(summary.d)
    for s in tree_structures(n, n_max):
        total += _contract(s, types, summary.R, PsiT, cache)
    return float(summary.lam @ total)


def integrated_covariance(summary: BranchingSummary) -> np.ndarray:
    lam, R = summary.lam, summary.R
    return np.einsum("m,im,jm->ij", lam, R, R)


def integrated_third(summary: BranchingSummary) -> np.ndarray:
    lam, R, Psi = summary.lam, summary.R, summary.Psi
    star = np.einsum("m,im,jm,km->ijk", lam, R, R, R)
    # pair (a, b) joined below node m, which hangs off root n through Psi[m, n]
    pair = np.einsum("n,am,bm,mn,cn->abc", lam, R, R, Psi, R)
    return star + pair + pair.transpose(2, 0, 1) + pair.transpose(0, 2, 1)


def _poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    P = len(a)
    out = np.zeros_like(a)
    for q in range(P):
        out[q:] += a[q] * b[: P - q]
    return out


def _poly_edge(vec: np.ndarray, psi_T: np.ndarray) -> np.ndarray:
    P = len(vec)
    out = np.zeros_like(vec)
    for q in range(1, P):
        out[q:] += vec[: P - q] @ psi_T[q].T
    return out


def motif_series(summary: BranchingSummary, types: Sequence[int], max_total_power: int,
                 n_max: int = DEFAULT_N_MAX, coefficients: bool = False) -> np.ndarray:
    """Partial sums of the expansion of an integrated cumulant in powers of ``Gbar``.

    Every resolvent becomes ``sum_k Gbar^k`` and every ``Psi`` becomes
    ``sum_{k>=1} Gbar^k``; entry ``p`` of the result is the sum of all
    contributions of total power at most ``p``.  With ``coefficients=True``
    the per-power terms are returned instead of their running sums.
    """
    types = _check_types(types, summary.d)
    P = int(max_total_power) + 1
    if P < 1:
        raise ValueError("max_total_power must be >= 0")
    d = summary.d
    powers = np.empty((P, d, d))
    powers[0] = np.eye(d)
    for k in range(1, P):
        powers[k] = powers[k - 1] @ summary.Gbar
    psi_T = powers.copy()
    psi_T[0] = 0.0
    psi_T = psi_T.transpose(0, 2, 1)
    n = len(types)
    if n == 1:
        coef = np.zeros(P)
        coef[0] = summary.lam[types[0]]
    else:
        leaf = {t: powers[:, t, :] for t in set(types)}
        cache: dict = {}

        def contract(structure):
            hit = cache.get(structure)
            if hit is not None:
                return hit
            vec = None
            for child in structure:
                if isinstance(child, tuple):
                    f = _poly_edge(contract(child), psi_T)
                else:
                    f = leaf[types[child - 1]]
                vec = f if vec is None else _poly_mul(vec, f)
            cache[structure] = vec
            return vec

        total = np.zeros((P, d))
        for s in tree_structures(n, n_max):
            total += contract(s)
        coef = total @ summary.lam
    return coef if coefficients else np.cumsum(coef)
