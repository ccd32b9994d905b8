"""Exact simulation of Hawkes processes.

:func:`simulate_clusters` builds the process from Poisson immigrants, each
spawning an independent branching cascade, and records the lineage of every
event.  :func:`simulate_thinning` samples the same law from the conditional
rate by rejection and serves as an independent cross-check; it carries no
lineage.

Random streams are derived from a single master seed with counter-based
Philox generators keyed by ``(purpose, index)``, so blocks of clusters can
be simulated in any order or in parallel with identical results.
"""
from __future__ import annotations

import csv
import json
import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundError, ConfigError, ExplosionGuard
from .model import BranchingSummary, ExponentialKernel, GridKernel, HawkesModel, ZeroKernel, build_summary

NO_LINEAGE = -2
DEFAULT_EVENT_CAP = 10**6
DEFAULT_BLOCK_SIZE = 2048

_IMMIGRANTS, _CLUSTERS, _THINNING = 0, 1, 2


def random_stream(seed: int, purpose: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(ss))


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("HAWKES_THREADS")
    n = requested if requested is not None else 1
    if cap:
        try:
            n = min(n, int(cap)) if requested is not None else int(cap)
        except ValueError:
            pass
    return max(1, n)


@dataclass(frozen=True)
class Event:
    time: float
    type: int
    cluster_id: int
    parent_index: int | None
    generation: int


@dataclass(eq=False)
class EventStream:
    """Time-ordered events with optional lineage.

    Stored column-wise.  ``parents`` holds row indices into this stream,
    ``-1`` for immigrants; streams without lineage use ``-2`` in the
    ``cluster_ids``, ``parents`` and ``generations`` columns.
    """

    times: np.ndarray
    types: np.ndarray
    cluster_ids: np.ndarray
    parents: np.ndarray
    generations: np.ndarray
    d: int
    T_obs: float
    burn_in: float
    seed: int | None = None
    model_hash: str = ""
    has_lineage: bool = True

    def __len__(self) -> int:
        return len(self.times)

    def events(self) -> list[Event]:
        out = []
        for k in range(len(self)):
            p = int(self.parents[k])
            out.append(Event(float(self.times[k]), int(self.types[k]), int(self.cluster_ids[k]),
                             p if p >= 0 else None, int(self.generations[k])))
        return out

    def window(self, start: float, stop: float) -> np.ndarray:
        lo, hi = np.searchsorted(self.times, [start, stop], side="left")
        return np.arange(lo, hi)

    def counts(self, start: float = 0.0, stop: float | None = None) -> np.ndarray:
        stop = self.T_obs if stop is None else stop
        idx = self.window(start, stop)
        return np.bincount(self.types[idx], minlength=self.d)

    def metadata(self) -> dict:
        return {"d": self.d, "T_obs": self.T_obs, "burn_in": self.burn_in, "seed": self.seed,
                "model_hash": self.model_hash, "has_lineage": self.has_lineage}

    def to_csv(self, path) -> None:
        """Write ``time,type,cluster_id,parent_row,generation`` rows (types 1-based) plus a metadata sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "type", "cluster_id", "parent_row", "generation"])
            for t, k, c, p, g in zip(self.times.tolist(), self.types.tolist(), self.cluster_ids.tolist(),
                                     self.parents.tolist(), self.generations.tolist()):
                w.writerow([repr(t), k + 1, c, p, g])
        Path(str(path) + ".meta.json").write_text(json.dumps(self.metadata(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def from_csv(cls, path, d: int | None = None, T_obs: float | None = None) -> "EventStream":
        path = Path(path)
        meta_path = Path(str(path) + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read events from {path}: {exc}") from exc
        if data.size == 0:
            data = np.zeros((0, 5))
        types = data[:, 1].astype(np.int64) - 1
        d = d or meta.get("d") or (int(types.max()) + 1 if len(types) else 1)
        T = T_obs if T_obs is not None else meta.get("T_obs")
        if T is None:
            raise ConfigError("observation horizon unknown: no metadata sidecar and no T_obs given")
        parents = data[:, 3].astype(np.int64)
        has_lineage = meta.get("has_lineage", bool(len(parents) == 0 or parents.min() >= -1))
        return cls(data[:, 0].copy(), types, data[:, 2].astype(np.int64), parents, data[:, 4].astype(np.int64),
                   int(d), float(T), float(meta.get("burn_in", 0.0)), meta.get("seed"), meta.get("model_hash", ""),
                   bool(has_lineage))


def default_burn_in(model: HawkesModel, summary: BranchingSummary | None = None) -> float:
    summary = summary or build_summary(model)
    return 20.0 * model.max_timescale() / (1.0 - summary.rho)


def _resolve_burn_in(model, summary, burn_in) -> float:
    if burn_in is None or burn_in == "auto":
        return default_burn_in(model, summary)
    b = float(burn_in)
    if b < 0:
        raise ConfigError("burn-in must be non-negative")
    return b


# --------------------------------------------------------------------------
# Cluster construction
# --------------------------------------------------------------------------


def _simulate_block(model: HawkesModel, Gbar: np.ndarray, imm_t, imm_k, first_cluster: int, T_obs: float,
                    rng: np.random.Generator, cap: int):
    d = model.d
    n0 = len(imm_t)
    cols_t, cols_k, cols_c, cols_p, cols_g = [imm_t], [imm_k], [np.arange(n0)], [np.full(n0, -1)], [np.zeros(n0, np.int64)]
    sizes = np.ones(n0, dtype=np.int64)
    cur_t, cur_k, cur_c, cur_id = imm_t, imm_k, np.arange(n0), np.arange(n0)
    next_id = n0
    gen = 0
    while len(cur_t):
        gen += 1
        nt, nk, nc, npar = [], [], [], []
        for j in range(d):
            sel = cur_k == j
            if not sel.any():
                continue
            tj, cj, pj = cur_t[sel], cur_c[sel], cur_id[sel]
            for i in range(d):
                if Gbar[i, j] <= 0:
                    continue
                counts = rng.poisson(Gbar[i, j], size=len(tj))
                total = int(counts.sum())
                if total == 0:
                    continue
                ct = np.repeat(tj, counts) + model.kernels[i][j].sample_delays(rng, total)
                keep = ct <= T_obs
                nt.append(ct[keep])
                nk.append(np.full(int(keep.sum()), i, dtype=np.int64))
                nc.append(np.repeat(cj, counts)[keep])
                npar.append(np.repeat(pj, counts)[keep])
        if not nt:
            break
        cur_t = np.concatenate(nt)
        cur_k = np.concatenate(nk)
        cur_c = np.concatenate(nc)
        parents = np.concatenate(npar)
        cur_id = np.arange(next_id, next_id + len(cur_t))
        next_id += len(cur_t)
        sizes += np.bincount(cur_c, minlength=n0)
        if len(sizes) and sizes.max() > cap:
            bad = int(np.argmax(sizes)) + first_cluster
            raise ExplosionGuard(f"cluster {bad} exceeded {cap} events; spectral radius too close to 1?")
        cols_t.append(cur_t)
        cols_k.append(cur_k)
        cols_c.append(cur_c)
        cols_p.append(parents)
        cols_g.append(np.full(len(cur_t), gen, dtype=np.int64))
    return (np.concatenate(cols_t), np.concatenate(cols_k), np.concatenate(cols_c) + first_cluster,
            np.concatenate(cols_p), np.concatenate(cols_g))


def simulate_clusters(model: HawkesModel, T_obs: float, burn_in="auto", seed: int = 0,
                      max_cluster_events: int = DEFAULT_EVENT_CAP, block_size: int = DEFAULT_BLOCK_SIZE,
                      workers: int | None = None) -> EventStream:
    """Sample the process on ``[-burn_in, T_obs]`` through its cluster representation.

    Immigrants of each type arrive as homogeneous Poisson processes; every
    event of type ``j`` at time ``y`` has ``Poisson(Gbar[i, j])`` children of
    type ``i`` at ``y`` plus i.i.d. delays drawn from the normalised kernel.
    Children after ``T_obs`` are dropped together with their descendants.
    Cluster ids follow immigrant time order.
    """
    if not T_obs > 0:
        raise ConfigError("T_obs must be positive")
    summary = build_summary(model)
    B = _resolve_burn_in(model, summary, burn_in)
    d = model.d
    rng = random_stream(seed, _IMMIGRANTS, 0)
    ts, ks = [], []
    for k in range(d):
        n = rng.poisson(model.mu[k] * (T_obs + B))
        ts.append(rng.uniform(-B, T_obs, n))
        ks.append(np.full(n, k, dtype=np.int64))
    imm_t = np.concatenate(ts)
    imm_k = np.concatenate(ks)
    order = np.lexsort((imm_k, imm_t))
    imm_t, imm_k = imm_t[order], imm_k[order]

    starts = list(range(0, len(imm_t), block_size))
    Gbar = summary.Gbar

    def run(b: int):
        start = starts[b]
        stop = min(start + block_size, len(imm_t))
        return _simulate_block(model, Gbar, imm_t[start:stop], imm_k[start:stop], start, T_obs,
                               random_stream(seed, _CLUSTERS, b), max_cluster_events)

    n_workers = worker_count(workers)
    if n_workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            blocks = list(pool.map(run, range(len(starts))))
    else:
        blocks = [run(b) for b in range(len(starts))]

    offset = 0
    parts = []
    for t, k, c, p, g in blocks:
        parts.append((t, k, c, np.where(p >= 0, p + offset, -1), g))
        offset += len(t)
    if parts:
        t, k, c, p, g = (np.concatenate(col) for col in zip(*parts))
    else:
        t = np.zeros(0)
        k = c = p = g = np.zeros(0, dtype=np.int64)
    rank = np.arange(len(t))
    perm = np.lexsort((rank, c, k, t))
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(len(perm))
    p = p[perm]
    p = np.where(p >= 0, inverse[np.where(p >= 0, p, 0)], -1)
    return EventStream(t[perm], k[perm], c[perm], p, g[perm], d, float(T_obs), B, seed, model.fingerprint(), True)


# --------------------------------------------------------------------------
# Thinning
# --------------------------------------------------------------------------


def simulate_thinning(model: HawkesModel, T_obs: float, seed: int = 0, burn_in="auto") -> EventStream:
    """Ogata-style rejection sampling from the conditional rate.

    Exponential contributions decay between events, so their current value
    bounds them; tabulated kernels are bounded by their maximum for as long
    as an event stays within their support.
    """
    if not T_obs > 0:
        raise ConfigError("T_obs must be positive")
    summary = build_summary(model)
    B = _resolve_burn_in(model, summary, burn_in)
    d = model.d
    alpha_beta = np.zeros((d, d))
    beta = np.ones((d, d))
    grid_max = np.zeros((d, d))
    grids: list[tuple[int, int, GridKernel]] = []
    for i, row in enumerate(model.kernels):
        for j, k in enumerate(row):
            if isinstance(k, ExponentialKernel):
                alpha_beta[i, j] = k.alpha * k.beta
                beta[i, j] = k.beta
            elif isinstance(k, GridKernel):
                if not math.isfinite(k.max_value()):
                    raise BoundError("grid kernel has no finite maximum")
                grid_max[i, j] = k.max_value()
                grids.append((i, j, k))
            elif not isinstance(k, ZeroKernel):
                raise BoundError(f"no intensity bound for kernel {k!r}")
    support = max((k.support for _, _, k in grids), default=0.0)
    has_exp = bool(alpha_beta.any())
    mu = np.asarray(model.mu, dtype=float)
    mu_total = float(mu.sum())

    rng = random_stream(seed, _THINNING, 0)
    S = np.zeros((d, d))
    recent: deque = deque()
    out_t: list[float] = []
    out_k: list[int] = []
    t = -B
    chunk = 4096
    exps = rng.standard_exponential(chunk)
    unis = rng.random(chunk)
    pos = 0
    while True:
        if pos == chunk:
            exps = rng.standard_exponential(chunk)
            unis = rng.random(chunk)
            pos = 0
        e, u = exps[pos], unis[pos]
        pos += 1
        bound = mu_total + (S.sum() if has_exp else 0.0)
        if grids:
            while recent and t - recent[0][0] > support:
                recent.popleft()
            for _, j in recent:
                bound += grid_max[:, j].sum()
        t_new = t + e / bound
        if t_new > T_obs:
            break
        if has_exp:
            S *= np.exp(-beta * (t_new - t))
        t = t_new
        rate = mu + S.sum(axis=1) if has_exp else mu.copy()
        if grids:
            for tk, j in recent:
                for i, jj, k in grids:
                    if jj == j:
                        rate[i] += float(k(t - tk))
        x = u * bound
        cum = np.cumsum(rate)
        if x >= cum[-1]:
            continue
        i = int(np.searchsorted(cum, x, side="right"))
        out_t.append(t)
        out_k.append(i)
        if has_exp:
            S[:, i] += alpha_beta[:, i]
        if grids:
            recent.append((t, i))
    n = len(out_t)
    lin = np.full(n, NO_LINEAGE, dtype=np.int64)
    return EventStream(np.array(out_t), np.array(out_k, dtype=np.int64), lin.copy(), lin.copy(), lin.copy(),
                       d, float(T_obs), B, seed, model.fingerprint(), False)
