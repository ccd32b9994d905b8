"""Cumulant densities in the time domain.

The resolvent density ``R_t = I delta(t) + Phi(t)`` enters every tree term;
leaf edges use the full ``R_t`` and internal edges only ``Phi``.  Delta parts
are never sampled.  A delta on a leaf edge pins its node to the leaf time,
and two deltas meeting at one node describe the same event observed twice:
those contributions are reported separately as atoms, while the continuous
density collects every term with at most one delta per node.

Times are snapped to the renewal grid.  ``Phi`` jumps at zero lag, so inside
quadratures the zero-lag sample is taken at half weight (the average of the
two one-sided limits), which keeps composite trapezoid accuracy.

Two evaluation routes exist: :func:`cumulant_density` walks the trees for a
single time vector and works for any enabled order, while
:func:`covariance_density_grid` and :func:`third_density_grid` evaluate
orders two and three on whole lag grids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .errors import GridError, SizeError
from .model import BranchingSummary, HawkesModel, RenewalDensity, build_summary
from .trees import set_partitions, tree_structures


@dataclass(frozen=True)
class DensityValue:
    """Cumulant density at one time vector.

    ``atoms`` maps a coincidence pattern (a partition of leaf positions into
    groups of identical events) to the coefficient of the corresponding
    product of delta functions.
    """

    continuous: float
    atoms: dict = field(default_factory=dict)
    lags: tuple = ()


class DensityContext:
    """Precomputed pieces shared by density evaluations for one model."""

    def __init__(self, model: HawkesModel, renewal: RenewalDensity, summary: BranchingSummary | None = None):
        self.model = model
        self.renewal = renewal
        self.summary = summary or build_summary(model)
        self.dt = renewal.dt
        self.M = renewal.n_steps
        self.d = renewal.d
        F = np.array(renewal.values, dtype=float)
        F[0] *= 0.5
        F.setflags(write=False)
        self.F = F
        self.lam = self.summary.lam

    def lag_index(self, lags) -> np.ndarray:
        lags = np.asarray(lags, dtype=float)
        return np.rint(lags / self.dt).astype(np.int64)

    def lookup(self, idx, a=None, b=None) -> np.ndarray:
        """``F[idx]`` with zero outside ``[0, M]``; optional fixed type indices."""
        idx = np.asarray(idx)
        ok = (idx >= 0) & (idx <= self.M)
        safe = np.where(ok, idx, 0)
        if a is None:
            return np.where(ok[..., None, None], self.F[safe], 0.0)
        return np.where(ok, self.F[safe, a, b], 0.0)

    def corr(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``c(tau) = sum_x a(x) b(tau + x)`` for ``tau`` in ``[-M, M]`` (index ``tau + M``)."""
        return fftconvolve(b, a[::-1])


# --------------------------------------------------------------------------
# Point evaluation by tree walking
# --------------------------------------------------------------------------


class _TreeWalker:
    def __init__(self, ctx: DensityContext, types: tuple, offsets: np.ndarray):
        self.ctx = ctx
        self.types = types
        self.offsets = offsets
        self.L = ctx.M + int(offsets.max()) + 1
        self.leaf_cache: dict = {}
        self.node_cache: dict = {}
        self.F_rev = ctx.F[::-1]

    def leaf(self, label: int):
        hit = self.leaf_cache.get(label)
        if hit is not None:
            return hit
        ctx = self.ctx
        k = label - 1
        off = int(self.offsets[k])
        lag = off + ctx.M - np.arange(self.L)
        dense = ctx.lookup(lag)[:, self.types[k], :]
        atom = np.zeros((self.L, ctx.d))
        atom[off + ctx.M, self.types[k]] = 1.0
        self.leaf_cache[label] = (dense, atom)
        return dense, atom

    def edge(self, dense: np.ndarray, atom: np.ndarray) -> np.ndarray:
        ctx = self.ctx
        w = ctx.dt * dense + atom
        full = fftconvolve(w[:, :, None], self.F_rev, axes=0)
        return full[ctx.M: ctx.M + self.L].sum(axis=1)

    def node(self, structure):
        hit = self.node_cache.get(structure)
        if hit is not None:
            return hit
        factors = []
        for child in structure:
            if isinstance(child, tuple):
                factors.append((self.edge(*self.node(child)), None))
            else:
                factors.append(self.leaf(child))
        dense = np.ones((self.L, self.ctx.d))
        for f, _ in factors:
            dense = dense * f
        atom = np.zeros_like(dense)
        for k, (_, a) in enumerate(factors):
            if a is None:
                continue
            term = a
            for m, (f, _) in enumerate(factors):
                if m != k:
                    term = term * f
            atom = atom + term
        self.node_cache[structure] = (dense, atom)
        return dense, atom

    def total(self, structures) -> float:
        lam = self.ctx.lam
        out = 0.0
        for s in structures:
            dense, atom = self.node(s)
            out += float(lam @ (self.ctx.dt * dense.sum(axis=0) + atom.sum(axis=0)))
        return out


def _continuous(ctx: DensityContext, types: tuple, offsets: np.ndarray) -> float:
    n = len(types)
    if n == 1:
        return float(ctx.lam[types[0]])
    offsets = offsets - offsets.min()
    walker = _TreeWalker(ctx, types, offsets)
    return walker.total(tree_structures(n, n_max=max(n, 1)))


def _coincidence_atoms(ctx: DensityContext, types: tuple, offsets: np.ndarray) -> dict:
    n = len(types)
    atoms = {}
    for part in set_partitions(list(range(n))):
        if all(len(b) == 1 for b in part):
            continue
        if any(len({int(offsets[k]) for k in b}) > 1 or len({types[k] for k in b}) > 1 for b in part):
            continue
        merged_types = tuple(types[b[0]] for b in part)
        merged_offsets = np.array([offsets[b[0]] for b in part])
        key = tuple(tuple(b) for b in part)
        atoms[key] = _continuous(ctx, merged_types, merged_offsets)
    return atoms


def cumulant_density(model: HawkesModel, renewal: RenewalDensity, types: Sequence[int], times: Sequence[float],
                     summary: BranchingSummary | None = None, max_order: int = 3,
                     allow_order4: bool = False, ctx: DensityContext | None = None) -> DensityValue:
    """Cumulant density of order ``len(types)`` at event times ``times``.

    Returns the continuous density together with the delta-function
    coefficients that appear when some times coincide.  Only lags matter;
    times are snapped to the renewal grid.
    """
    types = tuple(int(t) for t in types)
    n = len(types)
    if n != len(times):
        raise ValueError("types and times must have equal length")
    limit = max(max_order, 4) if allow_order4 else max_order
    if n < 1 or n > limit:
        raise SizeError(f"density order {n} not enabled (limit {limit}; order 4 needs allow_order4=True)")
    ctx = ctx or DensityContext(model, renewal, summary)
    for t in types:
        if not 0 <= t < ctx.d:
            raise IndexError(f"type index {t} out of range")
    offsets = ctx.lag_index(np.asarray(times, dtype=float) - float(np.min(times)))
    if offsets.max() > ctx.M:
        raise GridError(f"time span {float(np.ptp(times))} exceeds renewal horizon {renewal.horizon}")
    value = _continuous(ctx, types, offsets)
    atoms = _coincidence_atoms(ctx, types, offsets) if n > 1 else {}
    return DensityValue(value, atoms, tuple(float(o * ctx.dt) for o in offsets))


# --------------------------------------------------------------------------
# Grid evaluation, orders two and three
# --------------------------------------------------------------------------


def _check_lags(ctx: DensityContext, idx: np.ndarray, limit: int):
    if idx.size and np.abs(idx).max() > limit:
        raise GridError("requested lags exceed the renewal horizon")


def covariance_density_grid(ctx: DensityContext, i: int, j: int, lags) -> np.ndarray:
    """Continuous part of ``k^{ij}(t, t + tau)`` for every ``tau`` in ``lags``."""
    tau = ctx.lag_index(lags)
    _check_lags(ctx, tau, ctx.M)
    lam, F, M = ctx.lam, ctx.F, ctx.M
    out = lam[j] * ctx.lookup(-tau, i, j) + lam[i] * ctx.lookup(tau, j, i)
    c = np.zeros(2 * M + 1)
    for m in range(ctx.d):
        if lam[m] == 0:
            continue
        c += lam[m] * ctx.corr(F[:, i, m], F[:, j, m])
    return out + ctx.dt * c[tau + M]


def _branch_profile(ctx: DensityContext, ia: int) -> np.ndarray:
    """``h[x, m]``: weight of a type-``m`` node at lag ``x`` from a lone leaf of type ``ia`` via one internal edge."""
    M, F, lam = ctx.M, ctx.F, ctx.lam
    h = np.zeros((2 * M + 1, ctx.d))
    for m in range(ctx.d):
        acc = np.zeros(2 * M + 1)
        for n in range(ctx.d):
            acc += lam[n] * ctx.corr(F[:, ia, n], F[:, m, n])
        h[:, m] = ctx.dt * acc
        h[M:, m] += lam[ia] * F[:, m, ia]
    return h


def _triple(ctx: DensityContext, f: np.ndarray, v: np.ndarray, g: np.ndarray, k: np.ndarray,
            P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    # dt * sum_v f(v) g(P - v) k(Q - v) over the outer product of P and Q
    M = ctx.M
    keep = f != 0
    f, v = f[keep], v[keep]
    if not len(v):
        return np.zeros((len(P), len(Q)))

    def toeplitz(col, X):
        lag = X[:, None] - v[None, :]
        ok = (lag >= 0) & (lag <= M)
        return np.where(ok, col[np.where(ok, lag, 0)], 0.0)

    # blocks keep the temporary Toeplitz slabs near 4e6 entries each
    block = max(1, 4_000_000 // len(v))
    out = np.empty((len(P), len(Q)))
    Km_full = toeplitz(k, Q) if len(Q) <= block else None
    for p0 in range(0, len(P), block):
        Gm = toeplitz(g, P[p0:p0 + block]) * f[None, :]
        if Km_full is not None:
            out[p0:p0 + block] = Gm @ Km_full.T
            continue
        for q0 in range(0, len(Q), block):
            out[p0:p0 + block, q0:q0 + block] = Gm @ toeplitz(k, Q[q0:q0 + block]).T
    return ctx.dt * out


def third_density_grid(ctx: DensityContext, types: Sequence[int], lags2, lags3) -> np.ndarray:
    """Continuous part of ``k^{ijk}(0, p, q)`` on the outer product of ``lags2`` and ``lags3``."""
    types = tuple(int(t) for t in types)
    p = ctx.lag_index(lags2)
    q = ctx.lag_index(lags3)
    _check_lags(ctx, np.concatenate([p, q]), ctx.M)
    pp, qq = np.meshgrid(p, q, indexing="ij")
    tmesh = (np.zeros_like(pp), pp, qq)
    lam, M, d = ctx.lam, ctx.M, ctx.d
    lk = ctx.lookup
    out = np.zeros(pp.shape)

    def accumulate(f_of_m, b, c, P, Q):
        Pu, Pinv = np.unique(P, return_inverse=True)
        Qu, Qinv = np.unique(Q, return_inverse=True)
        D = np.zeros((len(Pu), len(Qu)))
        for m in range(d):
            f, v = f_of_m(m)
            D += _triple(ctx, f, v, ctx.F[:, types[b], m], ctx.F[:, types[c], m], Pu, Qu)
        return D[Pinv.reshape(P.shape), Qinv.reshape(Q.shape)]

    # star: every leaf hangs off the root; coordinates relative to leaf 0
    v_star = np.arange(-M, 1)
    out += accumulate(lambda m: (lam[m] * ctx.F[::-1, types[0], m], v_star), 1, 2, pp, qq)
    i, j, k = types
    out += lam[i] * lk(pp, j, i) * lk(qq, k, i)
    out += lam[j] * lk(-pp, i, j) * lk(qq - pp, k, j)
    out += lam[k] * lk(-qq, i, k) * lk(pp - qq, j, k)

    # caterpillars: lone leaf a at the root, pair (b, c) below an internal node
    v_cat = np.arange(-M, M + 1)
    for a, b, c in ((0, 1, 2), (1, 0, 2), (2, 0, 1)):
        h = _branch_profile(ctx, types[a])
        P = tmesh[b] - tmesh[a]
        Q = tmesh[c] - tmesh[a]
        out += accumulate(lambda m: (h[:, m], v_cat), b, c, P, Q)

        def h_at(x, m):
            ok = np.abs(x) <= M
            return np.where(ok, h[np.where(ok, x + M, 0), m], 0.0)

        out += h_at(P, types[b]) * lk(Q - P, types[c], types[b])
        out += h_at(Q, types[c]) * lk(P - Q, types[b], types[c])
    return out


# --------------------------------------------------------------------------
# Bin averages and lag integrals
# --------------------------------------------------------------------------


def _edge_index(ctx: DensityContext, edges) -> np.ndarray:
    edges = np.asarray(edges, dtype=float)
    idx = ctx.lag_index(edges)
    if np.any(np.abs(idx * ctx.dt - edges) > 1e-6 * ctx.dt):
        raise GridError("bin edges must be multiples of the renewal grid step")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    return idx


def _trapezoid_bin_weights(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # rows: bins; columns: grid nodes idx[0]..idx[-1]; rows sum to 1
    nodes = np.arange(idx[0], idx[-1] + 1)
    W = np.zeros((len(idx) - 1, len(nodes)))
    for b in range(len(idx) - 1):
        lo, hi = idx[b] - idx[0], idx[b + 1] - idx[0]
        W[b, lo:hi + 1] = 1.0
        W[b, lo] = W[b, hi] = 0.5
        W[b] /= hi - lo
    return W, nodes


def covariance_bin_average(ctx: DensityContext, i: int, j: int, edges) -> np.ndarray:
    """Average continuous second-order density over each lag bin."""
    idx = _edge_index(ctx, edges)
    W, nodes = _trapezoid_bin_weights(idx)
    return W @ covariance_density_grid(ctx, i, j, nodes * ctx.dt)


def third_bin_average(ctx: DensityContext, types: Sequence[int], edges2, edges3) -> np.ndarray:
    """Average continuous third-order density over each rectangular lag bin."""
    W2, n2 = _trapezoid_bin_weights(_edge_index(ctx, edges2))
    W3, n3 = _trapezoid_bin_weights(_edge_index(ctx, edges3))
    grid = third_density_grid(ctx, types, n2 * ctx.dt, n3 * ctx.dt)
    return W2 @ grid @ W3.T


def integrate_density(ctx: DensityContext, types: Sequence[int]) -> float:
    """Lag integral of the continuous density plus all coincidence atoms.

    For orders two and three; should reproduce the integrated cumulant up to
    quadrature and truncation error.
    """
    types = tuple(int(t) for t in types)
    n = len(types)
    M, dt = ctx.M, ctx.dt
    lags = np.arange(-M, M + 1) * dt
    if n == 1:
        return float(ctx.lam[types[0]])
    if n == 2:
        i, j = types
        cont = covariance_density_grid(ctx, i, j, lags).sum() * dt
        return float(cont + (ctx.lam[i] if i == j else 0.0))
    if n == 3:
        cont = third_density_grid(ctx, types, lags, lags).sum() * dt * dt
        lines = 0.0
        for a, b, c in ((0, 1, 2), (0, 2, 1), (1, 2, 0)):
            if types[a] == types[b]:
                lines += covariance_density_grid(ctx, types[a], types[c], lags).sum() * dt
        point = ctx.lam[types[0]] if len(set(types)) == 1 else 0.0
        return float(cont + lines + point)
    raise SizeError("lag integration implemented for orders up to three")
