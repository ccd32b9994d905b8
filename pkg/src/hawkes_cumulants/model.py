"""Hawkes model definition and derived branching quantities.

A model is a base-rate vector ``mu`` and a ``d x d`` matrix of excitation
kernels, where entry ``(i, j)`` is the influence of type-``j`` events on the
type-``i`` rate.  Type indices are 0-based throughout the Python API; the
JSON model file uses 1-based indices.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, ConvergenceError, DegenerateError, StabilityError

DEFAULT_STABILITY_MARGIN = 1e-6
DEFAULT_RENEWAL_TOL = 1e-8


# --------------------------------------------------------------------------
# Kernels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroKernel:
    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def integral(self) -> float:
        return 0.0

    def max_value(self) -> float:
        return 0.0

    @property
    def timescale(self) -> float:
        return 0.0

    @property
    def resolution(self) -> float:
        return math.inf

    @property
    def support(self) -> float:
        return 0.0

    def sample_delays(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.empty(0)

    def to_dict(self) -> dict:
        return {"type": "zero"}


@dataclass(frozen=True)
class ExponentialKernel:
    """``g(t) = alpha * beta * exp(-beta t)`` for ``t >= 0``.

    ``alpha`` is the expected number of offspring, ``beta`` the decay rate.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise DegenerateError(f"exponential kernel needs beta > 0, got {self.beta}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise DegenerateError(f"exponential kernel needs alpha >= 0, got {self.alpha}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.alpha * self.beta * np.exp(-self.beta * np.where(t >= 0, t, 0.0))
        return np.where(t >= 0, out, 0.0)

    def integral(self) -> float:
        return float(self.alpha)

    def max_value(self) -> float:
        return self.alpha * self.beta

    @property
    def timescale(self) -> float:
        return 1.0 / self.beta

    @property
    def resolution(self) -> float:
        return 1.0 / self.beta

    @property
    def support(self) -> float:
        return math.inf

    def sample_delays(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.exponential(1.0 / self.beta, size)

    def to_dict(self) -> dict:
        return {"type": "exp", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class GridKernel:
    """Tabulated kernel, linearly interpolated between samples.

    ``values[k]`` is the density at ``k * dt``; the kernel vanishes beyond
    the last sample, so its integral is the trapezoid sum of ``values``.
    """

    dt: float
    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DegenerateError(f"grid kernel needs dt > 0, got {self.dt}")
        if vals.ndim != 1 or len(vals) < 2:
            raise ConfigError("grid kernel needs at least two samples")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise DegenerateError("grid kernel values must be finite and non-negative")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))
        object.__setattr__(self, "_array", vals)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * self.dt * (vals[1:] + vals[:-1]))])
        object.__setattr__(self, "_cumulative", cum)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        nodes = np.arange(len(self._array)) * self.dt
        out = np.interp(t, nodes, self._array, left=0.0, right=0.0)
        return np.where(t >= 0, out, 0.0)

    def integral(self) -> float:
        return float(self._cumulative[-1])

    def max_value(self) -> float:
        return float(self._array.max())

    @property
    def timescale(self) -> float:
        return self.support

    @property
    def resolution(self) -> float:
        return self.dt

    @property
    def support(self) -> float:
        return self.dt * (len(self._array) - 1)

    def sample_delays(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # exact inversion of the piecewise-linear density
        cum = self._cumulative
        vals = self._array
        r = rng.uniform(0.0, cum[-1], size)
        k = np.clip(np.searchsorted(cum, r, side="right") - 1, 0, len(vals) - 2)
        r = r - cum[k]
        v0 = vals[k]
        slope = (vals[k + 1] - v0) / self.dt
        disc = np.sqrt(np.maximum(v0 * v0 + 2.0 * slope * r, 0.0))
        denom = v0 + disc
        x = np.divide(2.0 * r, denom, out=np.zeros_like(r), where=denom > 0)
        return (k + np.clip(x / self.dt, 0.0, 1.0)) * self.dt

    def to_dict(self) -> dict:
        return {"type": "grid", "dt": self.dt, "values": list(self.values)}


Kernel = Union[ZeroKernel, ExponentialKernel, GridKernel]


def kernel_from_dict(spec: dict) -> Kernel:
    kind = spec.get("type", "exp")
    if kind == "exp":
        return ExponentialKernel(float(spec["alpha"]), float(spec["beta"]))
    if kind == "grid":
        return GridKernel(float(spec["dt"]), tuple(spec["values"]))
    if kind == "zero":
        return ZeroKernel()
    raise ConfigError(f"unknown kernel type {kind!r}")


# --------------------------------------------------------------------------
# Spectral radius
# --------------------------------------------------------------------------


def _perron_root(block: np.ndarray, tol: float, max_iter: int) -> float:
    # Shifting by I makes an irreducible block primitive, so the Collatz-Wielandt
    # bounds on A = block + I bracket rho(A) and converge under power iteration.
    a = block + np.eye(len(block))
    x = np.ones(len(block))
    lo, hi = 0.0, math.inf
    for _ in range(max_iter):
        y = a @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= tol * max(1.0, hi):
            break
        x = y / y.max()
    return max(0.5 * (lo + hi) - 1.0, 0.0)


def spectral_radius(M, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Spectral radius of a non-negative square matrix.

    The matrix is split into strongly connected components; the radius is
    the largest Perron root over the irreducible diagonal blocks, each found
    by power iteration from the all-ones vector.  Nilpotent structure (no
    cycles) gives exactly zero.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("spectral_radius expects a square matrix")
    if np.any(M < 0):
        raise ValueError("spectral_radius expects a non-negative matrix")
    n_comp, labels = connected_components(M > 0, directed=True, connection="strong")
    rho = 0.0
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        block = M[np.ix_(idx, idx)]
        if len(idx) == 1 and block[0, 0] == 0.0:
            continue
        rho = max(rho, _perron_root(block, tol, max_iter))
    return rho


# --------------------------------------------------------------------------
# Model
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HawkesModel:
    mu: np.ndarray
    kernels: tuple
    stability_margin: float = DEFAULT_STABILITY_MARGIN

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        d = len(mu)
        if d == 0:
            raise ConfigError("model needs at least one event type")
        if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise DegenerateError(f"base rates must be strictly positive, got {mu}")
        kernels = tuple(tuple(row) for row in self.kernels)
        if len(kernels) != d or any(len(row) != d for row in kernels):
            raise ConfigError(f"kernel matrix must be {d}x{d}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kernels", kernels)
        rho = spectral_radius(self.branching_matrix())
        if rho >= 1.0 - self.stability_margin:
            raise StabilityError(f"spectral radius {rho:.6g} is not below 1 - {self.stability_margin:g}")

    @property
    def d(self) -> int:
        return len(self.mu)

    def branching_matrix(self) -> np.ndarray:
        return np.array([[k.integral() for k in row] for row in self.kernels])

    def kernel_values(self, t) -> np.ndarray:
        """Kernel matrix evaluated at times ``t``; shape ``t.shape + (d, d)``."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.d, self.d))
        for i, row in enumerate(self.kernels):
            for j, k in enumerate(row):
                out[..., i, j] = k(t)
        return out

    def active_kernels(self):
        return [k for row in self.kernels for k in row if not isinstance(k, ZeroKernel) and k.integral() > 0]

    def max_timescale(self) -> float:
        return max((k.timescale for k in self.active_kernels()), default=0.0)

    def min_resolution(self) -> float:
        return min((k.resolution for k in self.active_kernels()), default=math.inf)

    @classmethod
    def exponential(cls, mu, alpha, beta, **kw) -> "HawkesModel":
        """Model with exponential kernels from ``alpha``/``beta`` matrices.

        Entries with ``alpha == 0`` become zero kernels.
        """
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        d = len(mu)
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (d, d))
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (d, d))
        kernels = tuple(
            tuple(
                ExponentialKernel(float(alpha[i, j]), float(beta[i, j])) if alpha[i, j] > 0 else ZeroKernel()
                for j in range(d)
            )
            for i in range(d)
        )
        return cls(mu, kernels, **kw)

    @classmethod
    def poisson(cls, mu) -> "HawkesModel":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        d = len(mu)
        return cls(mu, tuple(tuple(ZeroKernel() for _ in range(d)) for _ in range(d)))

    def to_dict(self) -> dict:
        entries = []
        for i, row in enumerate(self.kernels):
            for j, k in enumerate(row):
                if isinstance(k, ZeroKernel):
                    continue
                entries.append({"i": i + 1, "j": j + 1, **k.to_dict()})
        return {"d": self.d, "mu": [float(m) for m in self.mu], "kernels": entries}

    @classmethod
    def from_dict(cls, spec: dict, **kw) -> "HawkesModel":
        try:
            d = int(spec["d"])
            mu = [float(m) for m in spec["mu"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model: {exc}") from exc
        if len(mu) != d:
            raise ConfigError(f"mu has length {len(mu)}, expected d={d}")
        grid = [[ZeroKernel() for _ in range(d)] for _ in range(d)]
        for entry in spec.get("kernels", []):
            try:
                i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"kernel entry needs 1-based i and j: {entry}") from exc
            if not (0 <= i < d and 0 <= j < d):
                raise ConfigError(f"kernel index ({i + 1}, {j + 1}) out of range for d={d}")
            try:
                grid[i][j] = kernel_from_dict(entry)
            except KeyError as exc:
                raise ConfigError(f"kernel entry missing field {exc}") from exc
        return cls(np.array(mu), tuple(tuple(r) for r in grid), **kw)

    def fingerprint(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_model(path, **kw) -> HawkesModel:
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model file {path}: {exc}") from exc
    return HawkesModel.from_dict(spec, **kw)


# --------------------------------------------------------------------------
# Branching summary
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BranchingSummary:
    Gbar: np.ndarray
    rho: float
    lam: np.ndarray
    R: np.ndarray
    Psi: np.ndarray
    mu: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return len(self.lam)


def build_summary(model: HawkesModel, tol: float = 1e-12, margin: float = DEFAULT_STABILITY_MARGIN) -> BranchingSummary:
    """Integrated kernel, spectral radius, stationary rates and resolvent."""
    mu = np.asarray(model.mu, dtype=float)
    if np.any(mu <= 0):
        raise DegenerateError("base rates must be strictly positive")
    G = model.branching_matrix()
    rho = spectral_radius(G, tol=tol)
    if rho >= 1.0 - margin:
        raise StabilityError(f"spectral radius {rho:.6g} is not below 1 - {margin:g}")
    d = len(mu)
    R = np.linalg.solve(np.eye(d) - G, np.eye(d))
    lam = R @ mu
    for arr in (G, R, lam, mu):
        arr.setflags(write=False)
    Psi = R - np.eye(d)
    Psi.setflags(write=False)
    return BranchingSummary(Gbar=G, rho=rho, lam=lam, R=R, Psi=Psi, mu=mu.copy())


# --------------------------------------------------------------------------
# Renewal density
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RenewalDensity:
    """Continuous part of ``R_t = I delta(t) + Phi(t)`` sampled on ``[0, horizon]``.

    ``values[k]`` is ``Phi(k * dt)`` (right limit at ``k = 0``).  The identity
    atom at zero lag is implicit and never sampled.
    """

    dt: float
    horizon: float
    values: np.ndarray
    iterations: int
    has_atom: bool = True

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def lags(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.dt

    def integral(self) -> np.ndarray:
        """Trapezoid integral of the continuous part plus the identity atom."""
        v = self.values
        cont = self.dt * (v.sum(axis=0) - 0.5 * (v[0] + v[-1]))
        return cont + np.eye(self.d)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.d, self.d))
        lags = self.lags
        for i in range(self.d):
            for j in range(self.d):
                out[..., i, j] = np.interp(t, lags, self.values[:, i, j], left=0.0, right=0.0)
        return np.where((t >= 0)[..., None, None], out, 0.0)


def default_grid(model: HawkesModel, summary: BranchingSummary | None = None, tail: float = 1e-6,
                 points_per_timescale: int = 50) -> tuple[float, float]:
    """Grid step and horizon for the renewal density.

    The step resolves the fastest kernel; the horizon makes the neglected
    tail mass of ``Phi`` smaller than ``tail`` using the decay bound
    ``exp(-(1 - rho) t / tau_max)``.
    """
    summary = summary or build_summary(model)
    res = model.min_resolution()
    if not math.isfinite(res):
        return 0.1, 1.0
    dt = res / points_per_timescale
    for k in model.active_kernels():
        if isinstance(k, GridKernel):
            dt = min(dt, k.dt)
    scale = float(np.abs(summary.Psi).sum(axis=0).max())
    horizon = model.max_timescale() / (1.0 - summary.rho) * (math.log(1.0 / tail) + math.log1p(scale))
    n = int(math.ceil(horizon / dt))
    return dt, n * dt


def _trapezoid_conv_operator(G: np.ndarray, nfft: int):
    Gf = rfft(G, n=nfft, axis=0)

    def apply(phi: np.ndarray, dt: float) -> np.ndarray:
        n = len(phi)
        full = irfft(np.einsum("fil,flj->fij", Gf, rfft(phi, n=nfft, axis=0)), n=nfft, axis=0)[:n]
        full -= 0.5 * np.einsum("il,nlj->nij", G[0], phi)
        full -= 0.5 * np.einsum("nil,lj->nij", G, phi[0])
        return dt * full

    return apply


def renewal_density(model: HawkesModel, dt: float | None = None, horizon: float | None = None,
                    tol: float = DEFAULT_RENEWAL_TOL, safety: float = 3.0) -> RenewalDensity:
    """Solve ``Phi = G + G * Phi`` on a uniform grid by Neumann iteration.

    Each sweep adds one more generation of the convolution series; the
    convolution uses trapezoid weights and is evaluated with FFTs.
    """
    summary = build_summary(model)
    if dt is None or horizon is None:
        ddt, dh = default_grid(model, summary)
        dt = ddt if dt is None else dt
        horizon = dh if horizon is None else horizon
    if not (dt > 0):
        raise DegenerateError(f"grid step must be positive, got {dt}")
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigError(f"horizon {horizon} is not a positive multiple of dt {dt}")
    lags = np.arange(n + 1) * dt
    G = model.kernel_values(lags)
    d = model.d

    rho = summary.rho
    if rho > 0:
        n_star = math.ceil(math.log(tol * (1.0 - rho)) / math.log(rho))
    else:
        n_star = d
    bound = int(safety * max(n_star, 1)) + d + 10

    if not np.any(G):
        return RenewalDensity(dt, n * dt, np.zeros((n + 1, d, d)), 0)

    apply = _trapezoid_conv_operator(G, next_fast_len(2 * (n + 1)))
    phi = G.copy()
    for it in range(1, bound + 1):
        new = G + apply(phi, dt)
        inc = np.abs(new - phi).max()
        phi = new
        if inc <= tol * max(1.0, np.abs(phi).max()):
            break
    else:
        raise ConvergenceError(f"renewal iteration did not converge in {bound} sweeps")
    np.maximum(phi, 0.0, out=phi)
    phi.setflags(write=False)
    return RenewalDensity(dt, n * dt, phi, it)
