"""Empirical cumulants from simulated event streams.

Three estimators are provided: joint cumulants of binned counts (integrated
cumulants per unit time), histograms of lagged pair rates minus the product
of rates (second-order densities), and histograms restricted to tuples of
events that share a cluster, which estimate cumulant densities directly
without any subtraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import LineageError, SizeError, WindowError
from .model import HawkesModel
from .simulate import EventStream
from .trees import set_partitions

MAX_JOINT_ORDER = 6
MIN_SAMPLES = 30


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    n_samples: int
    method: str

    def z(self, reference: float) -> float:
        if self.se == 0:
            return 0.0 if self.value == reference else math.inf
        return (self.value - reference) / self.se


@dataclass(frozen=True, eq=False)
class BinnedEstimate:
    """Per-bin estimates; ``value``/``se``/``n_samples`` share the bin grid shape."""

    edges: tuple
    value: np.ndarray
    se: np.ndarray
    n_samples: np.ndarray
    method: str

    def estimates(self) -> list[Estimate]:
        return [Estimate(float(v), float(s), int(n), self.method)
                for v, s, n in zip(self.value.ravel(), self.se.ravel(), self.n_samples.ravel())]


# --------------------------------------------------------------------------
# Set-partition cumulants
# --------------------------------------------------------------------------


def _masks(n: int) -> list[int]:
    return list(range(1, 1 << n))


def _partition_table(n: int):
    table = []
    for part in set_partitions(list(range(n))):
        masks = tuple(sum(1 << k for k in b) for b in part)
        r = len(part)
        table.append(((-1) ** (r - 1) * math.factorial(r - 1), masks))
    return table


def _cumulant_from_means(means: dict, n: int, table=None):
    table = table or _partition_table(n)
    total = 0.0
    for coef, masks in table:
        term = coef
        for m in masks:
            term = term * means[m]
        total = total + term
    return total


def subset_moments(samples) -> dict:
    """Mean of the product over every non-empty subset of the rows of ``samples``."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n = len(X)
    return {tuple(k for k in range(n) if m >> k & 1): float(np.prod(X[[k for k in range(n) if m >> k & 1]], axis=0).mean())
            for m in _masks(n)}


def cumulants_from_moments(moments: dict) -> dict:
    """Joint cumulant of every subset from the product moments of every subset."""
    out = {}
    for key in moments:
        idx = list(key)
        total = 0.0
        for part in set_partitions(idx):
            r = len(part)
            term = (-1) ** (r - 1) * math.factorial(r - 1)
            for b in part:
                term *= moments[tuple(sorted(b))]
            total += term
        out[key] = total
    return out


def moments_from_cumulants(cumulants: dict) -> dict:
    """Product moment of every subset as the sum over partitions of products of cumulants."""
    out = {}
    for key in cumulants:
        total = 0.0
        for part in set_partitions(list(key)):
            term = 1.0
            for b in part:
                term *= cumulants[tuple(sorted(b))]
            total += term
        out[key] = total
    return out


def joint_cumulant(samples, n_groups: int = 100) -> Estimate:
    """Joint cumulant of ``n`` aligned sequences by the set-partition formula.

    The standard error comes from a delete-one-group jackknife over
    ``n_groups`` contiguous groups of samples (leave-one-out when there are
    fewer samples than groups).
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n, N = X.shape
    if n > MAX_JOINT_ORDER:
        raise SizeError(f"joint cumulants limited to order {MAX_JOINT_ORDER}")
    if N < MIN_SAMPLES:
        raise WindowError(f"need at least {MIN_SAMPLES} samples, got {N}")
    table = _partition_table(n)
    prods = {}
    for m in _masks(n):
        rows = [k for k in range(n) if m >> k & 1]
        prods[m] = np.prod(X[rows], axis=0)
    value = _cumulant_from_means({m: p.mean() for m, p in prods.items()}, n, table)

    g = min(n_groups, N)
    bounds = np.linspace(0, N, g + 1).astype(int)
    sizes = np.diff(bounds)
    loo = {}
    for m, p in prods.items():
        group_sums = np.add.reduceat(p, bounds[:-1])
        loo[m] = (p.sum() - group_sums) / (N - sizes)
    theta = _cumulant_from_means(loo, n, table)
    se = math.sqrt((g - 1) / g * np.sum((theta - theta.mean()) ** 2))
    return Estimate(float(value), se, N, "jackknife")


# --------------------------------------------------------------------------
# Binned counts
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BinnedCounts:
    width: float
    counts: np.ndarray
    start: float

    @property
    def n_bins(self) -> int:
        return len(self.counts)


def bin_counts(stream: EventStream, width: float, margin: float = 0.0) -> BinnedCounts:
    if not width > 0:
        raise WindowError("bin width must be positive")
    start, stop = margin, stream.T_obs - margin
    n_bins = int(math.floor((stop - start) / width + 1e-9))
    if n_bins < 1:
        return BinnedCounts(width, np.zeros((0, stream.d), dtype=np.int64), start)
    idx = stream.window(start, start + n_bins * width)
    b = np.minimum(((stream.times[idx] - start) // width).astype(np.int64), n_bins - 1)
    counts = np.zeros((n_bins, stream.d), dtype=np.int64)
    np.add.at(counts, (b, stream.types[idx]), 1)
    return BinnedCounts(width, counts, start)


def correlation_time(model: HawkesModel) -> float:
    """Slowest kernel timescale, the unit for bin-width requirements."""
    return model.max_timescale()


def empirical_integrated_cumulant(stream: EventStream, types: Sequence[int], width: float, margin: float = 0.0,
                                  n_groups: int = 100, model: HawkesModel | None = None,
                                  min_width_factor: float = 20.0) -> Estimate:
    """Joint cumulant of per-bin counts divided by the bin width."""
    if model is not None and width < min_width_factor * correlation_time(model):
        raise WindowError(f"bin width {width} below {min_width_factor} x slowest kernel timescale")
    binned = bin_counts(stream, width, margin)
    if binned.n_bins < MIN_SAMPLES:
        raise WindowError(f"only {binned.n_bins} interior bins of width {width}; need {MIN_SAMPLES}")
    est = joint_cumulant(binned.counts[:, list(types)].T, n_groups=n_groups)
    return Estimate(est.value / width, est.se / width, est.n_samples, est.method)


def window_diagnostic(stream: EventStream, types: Sequence[int], widths: Sequence[float], **kw) -> list[tuple[float, Estimate]]:
    """Integrated-cumulant estimate as a function of bin width."""
    out = []
    for w in widths:
        try:
            out.append((float(w), empirical_integrated_cumulant(stream, types, w, **kw)))
        except WindowError:
            continue
    return out


# --------------------------------------------------------------------------
# Lag histograms
# --------------------------------------------------------------------------


def _interior(stream: EventStream, edges_list, margin):
    reach = max(float(np.max(np.abs(e))) for e in edges_list)
    margin = reach if margin is None else float(margin)
    if margin < reach:
        raise WindowError("margin must cover the largest lag")
    t_eff = stream.T_obs - 2.0 * margin
    if t_eff <= 0:
        raise WindowError("observation window shorter than twice the margin")
    return margin, t_eff


def _batch_index(times, start, t_eff, n_batches):
    return np.minimum(((times - start) / (t_eff / n_batches)).astype(np.int64), n_batches - 1)


def _batch_stats(per_batch: np.ndarray):
    n_b = len(per_batch)
    value = per_batch.mean(axis=0)
    se = per_batch.std(axis=0, ddof=1) / math.sqrt(n_b)
    return value, se


def _pair_counts(stream, i, j, edges, margin, t_eff, n_batches):
    edges = np.asarray(edges, dtype=float)
    a_idx = stream.window(margin, margin + t_eff)
    a_idx = a_idx[stream.types[a_idx] == i]
    ta = stream.times[a_idx]
    tb = stream.times[stream.types == j]
    pos = np.searchsorted(tb, ta[:, None] + edges[None, :], side="left")
    per_a = np.diff(pos, axis=1)
    if i == j:
        k0 = np.searchsorted(edges, 0.0, side="right") - 1
        if 0 <= k0 < len(edges) - 1:
            per_a[:, k0] -= 1
    batch = _batch_index(ta, margin, t_eff, n_batches)
    counts = np.zeros((n_batches, len(edges) - 1))
    np.add.at(counts, batch, per_a)
    n_a = np.bincount(batch, minlength=n_batches)
    return counts, n_a


def covariance_density_estimate(stream: EventStream, i: int, j: int, edges, margin: float | None = None,
                                n_batches: int = 50) -> BinnedEstimate:
    """Second-order density ``k^{ij}(t, t + tau)`` averaged over lag bins.

    Ordered pairs (type ``i`` first, type ``j`` second) per unit time and
    unit lag, minus the product of the empirical rates.  The first event is
    restricted to an interior window so every partner lies inside the
    observation horizon; the same event is never paired with itself.
    """
    edges = np.asarray(edges, dtype=float)
    margin, t_eff = _interior(stream, [edges], margin)
    counts, n_a = _pair_counts(stream, i, j, edges, margin, t_eff, n_batches)
    h = np.diff(edges)
    tb = t_eff / n_batches
    idx = stream.window(margin, margin + t_eff)
    lam_j = np.count_nonzero(stream.types[idx] == j) / t_eff
    per_batch = counts / (tb * h[None, :]) - (n_a / tb)[:, None] * lam_j
    value, se = _batch_stats(per_batch)
    return BinnedEstimate((edges,), value, se, counts.sum(axis=0).astype(np.int64), "batch-means")


def _cluster_groups(stream: EventStream):
    if not stream.has_lineage:
        raise LineageError("stream carries no lineage; use the cluster sampler")
    order = np.lexsort((stream.times, stream.cluster_ids))
    cid = stream.cluster_ids[order]
    starts = np.flatnonzero(np.r_[True, cid[1:] != cid[:-1]])
    sizes = np.diff(np.r_[starts, len(order)])
    return order, starts, sizes


def _same_cluster_counts(stream, types, edges_list, margin, t_eff, n_batches, chunk_elems=4_000_000):
    n = len(types)
    order, starts, sizes = _cluster_groups(stream)
    shape = tuple(len(e) - 1 for e in edges_list)
    counts = np.zeros((n_batches,) + shape)
    times, kinds = stream.times, stream.types
    for s in np.unique(sizes[sizes >= n]):
        st = starts[sizes == s]
        per_chunk = max(1, chunk_elems // int(s) ** n)
        for c0 in range(0, len(st), per_chunk):
            rows = order[st[c0:c0 + per_chunk, None] + np.arange(s)[None, :]]
            t = times[rows]
            k = kinds[rows]
            # axis 1 + r indexes the event playing leaf r
            grids_t = [t.reshape((-1,) + (1,) * r + (s,) + (1,) * (n - 1 - r)) for r in range(n)]
            grids_k = [k.reshape((-1,) + (1,) * r + (s,) + (1,) * (n - 1 - r)) for r in range(n)]
            ok = np.ones((len(t),) + (s,) * n, dtype=bool)
            for r in range(n):
                ok &= grids_k[r] == types[r]
            for r1, r2 in combinations(range(n), 2):
                eye = np.eye(s, dtype=bool).reshape((1,) + tuple(s if q in (r1, r2) else 1 for q in range(n)))
                ok &= ~eye
            ta = grids_t[0]
            ok &= (ta >= margin) & (ta < margin + t_eff)
            sel = np.nonzero(ok)
            if not len(sel[0]):
                continue
            t0 = t[sel[0], sel[1]]
            lags = [t[sel[0], sel[r + 1]] - t0 for r in range(1, n)]
            batch = _batch_index(t0, margin, t_eff, n_batches)
            hist_idx = []
            inside = np.ones(len(t0), dtype=bool)
            for lag, e in zip(lags, edges_list):
                b = np.searchsorted(e, lag, side="right") - 1
                inside &= (b >= 0) & (b < len(e) - 1)
                hist_idx.append(b)
            np.add.at(counts, (batch[inside],) + tuple(b[inside] for b in hist_idx), 1)
    return counts


def same_cluster_coincidence(stream: EventStream, types: Sequence[int], edges, margin: float | None = None,
                             n_batches: int = 50) -> BinnedEstimate:
    """Rate of event tuples from one cluster, per unit time and unit lag volume.

    For ``types=(i, j)`` pass one edge array for the lag of the second
    event; for ``types=(i, j, k)`` pass a pair of edge arrays for the lags of
    the second and third events relative to the first.  Tuples use distinct
    events; nothing is subtracted.
    """
    types = tuple(int(t) for t in types)
    n = len(types)
    if n not in (2, 3):
        raise SizeError("coincidence histograms support orders 2 and 3")
    edges_list = [np.asarray(edges, dtype=float)] if n == 2 else [np.asarray(e, dtype=float) for e in edges]
    if len(edges_list) != n - 1:
        raise ValueError("need one edge array per lag")
    margin, t_eff = _interior(stream, edges_list, margin)
    counts = _same_cluster_counts(stream, types, edges_list, margin, t_eff, n_batches)
    vol = np.ones(())
    for e in edges_list:
        vol = np.multiply.outer(vol, np.diff(e))
    tb = t_eff / n_batches
    value, se = _batch_stats(counts / (tb * vol[None]))
    return BinnedEstimate(tuple(edges_list), value, se, counts.sum(axis=0).astype(np.int64), "batch-means")


def different_cluster_rate(stream: EventStream, i: int, j: int, edges, margin: float | None = None,
                           n_batches: int = 50) -> tuple[BinnedEstimate, float]:
    """Pair rate for events from different clusters, and the product of empirical rates it should match."""
    edges = np.asarray(edges, dtype=float)
    margin, t_eff = _interior(stream, [edges], margin)
    full, _ = _pair_counts(stream, i, j, edges, margin, t_eff, n_batches)
    same = _same_cluster_counts(stream, (i, j), [edges], margin, t_eff, n_batches)
    tb = t_eff / n_batches
    per_batch = (full - same) / (tb * np.diff(edges)[None, :])
    value, se = _batch_stats(per_batch)
    idx = stream.window(margin, margin + t_eff)
    lam = np.bincount(stream.types[idx], minlength=stream.d) / t_eff
    return BinnedEstimate((edges,), value, se, (full - same).sum(axis=0).astype(np.int64), "batch-means"), float(lam[i] * lam[j])
