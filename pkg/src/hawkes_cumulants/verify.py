"""Simulate, estimate and compare against the analytic cumulants.

``run_verify`` draws one lineage-tracked stream and checks per-type rates,
integrated second and third cumulants, and same-cluster coincidence
histograms against their analytic values.  A check passes when the
analytic value lies within ``z_max`` standard errors of the estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .cumulants import integrated_cumulant
from .density import DensityContext, covariance_bin_average, third_bin_average
from .errors import ConfigError
from .estimate import empirical_integrated_cumulant, same_cluster_coincidence
from .model import HawkesModel, build_summary, default_grid, renewal_density
from .simulate import simulate_clusters


@dataclass
class VerifyConfig:
    model: HawkesModel
    seed: int
    T_obs: float = 1e5
    burn_in: object = "auto"
    bin_width: float | None = None
    lag_step: float | None = None
    n_lag_bins: int = 4
    n_batches: int = 50
    z_max: float = 3.0
    third_order: bool = True
    coincidence: bool = True


@dataclass
class Check:
    name: str
    analytic: float
    empirical: float
    se: float
    z_max: float = 3.0
    passed: bool = field(init=False)

    def __post_init__(self):
        slack = 1e-9 * max(1.0, abs(self.analytic))
        self.passed = bool(abs(self.empirical - self.analytic) <= self.z_max * self.se + slack)

    def to_dict(self) -> dict:
        return {"name": self.name, "analytic": self.analytic, "empirical": self.empirical,
                "se": self.se, "pass": self.passed}


@dataclass
class VerificationReport:
    model_hash: str
    seed: int
    T_obs: float
    n_events: int
    checks: list

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"model_hash": self.model_hash, "seed": self.seed, "T_obs": self.T_obs,
                "n_events": self.n_events, "all_pass": self.all_pass,
                "checks": [c.to_dict() for c in self.checks]}


def correlation_horizon(model: HawkesModel, tail: float = 1e-3) -> float:
    """Lag beyond which the progeny density carries less than ``tail`` of its mass."""
    _, horizon = default_grid(model, tail=tail)
    return horizon if model.active_kernels() else 0.0


def aligned_grid(model: HawkesModel, step: float, horizon: float | None = None) -> tuple[float, float]:
    """Renewal grid whose step divides ``step`` and is no coarser than the default."""
    dt, h = default_grid(model)
    k = max(1, math.ceil(step / dt - 1e-9))
    dt = step / k
    h = horizon if horizon is not None else h
    return dt, math.ceil(h / dt - 1e-9) * dt


def centred_edges(step: float, n_each_side: int) -> np.ndarray:
    """Bin edges at half-integer multiples of ``step``, so one bin straddles lag zero."""
    return (np.arange(-n_each_side - 1, n_each_side + 1) + 0.5) * step


def _default_width(model: HawkesModel, rho: float) -> float:
    tau = model.max_timescale()
    return 50.0 * tau / (1.0 - rho) if tau > 0 else 1.0


def run_verify(config: VerifyConfig) -> VerificationReport:
    model = config.model
    summary = build_summary(model)
    d = model.d

    def check(name, analytic, est_value, est_se):
        return Check(name, float(analytic), float(est_value), float(est_se), config.z_max)

    stream = simulate_clusters(model, config.T_obs, burn_in=config.burn_in, seed=config.seed)
    width = config.bin_width or _default_width(model, summary.rho)
    if width <= 0:
        raise ConfigError("bin width must be positive")
    checks = []
    for i in range(d):
        e = empirical_integrated_cumulant(stream, (i,), width)
        checks.append(check(f"rate[{i + 1}]", summary.lam[i], e.value, e.se))
    for i, j in combinations_with_replacement(range(d), 2):
        e = empirical_integrated_cumulant(stream, (i, j), width)
        checks.append(check(f"k[{i + 1},{j + 1}]", integrated_cumulant(summary, (i, j)), e.value, e.se))
    if config.third_order:
        for i in range(d):
            e = empirical_integrated_cumulant(stream, (i, i, i), width)
            checks.append(check(f"k[{i + 1},{i + 1},{i + 1}]", integrated_cumulant(summary, (i, i, i)), e.value, e.se))

    if config.coincidence:
        tau = model.max_timescale() or 1.0
        step = config.lag_step or tau / 2.0
        K = config.n_lag_bins
        edges = centred_edges(step, K)
        reach = float(np.abs(edges).max())
        dt, horizon = aligned_grid(model, step / 2.0, horizon=max(default_grid(model)[1], 2 * reach))
        ctx = DensityContext(model, renewal_density(model, dt, horizon), summary)
        for i, j in combinations_with_replacement(range(d), 2):
            est = same_cluster_coincidence(stream, (i, j), edges, n_batches=config.n_batches)
            ref = covariance_bin_average(ctx, i, j, edges)
            for b in range(len(ref)):
                name = f"k[{i + 1},{j + 1}](lag in [{edges[b]:.4g},{edges[b + 1]:.4g}))"
                checks.append(check(name, ref[b], est.value[b], est.se[b]))
        if config.third_order:
            coarse = centred_edges(2 * step, max(1, K // 2))
            for i in range(d):
                est = same_cluster_coincidence(stream, (i, i, i), (coarse, coarse), n_batches=config.n_batches)
                ref = third_bin_average(ctx, (i, i, i), coarse, coarse)
                for a in range(ref.shape[0]):
                    for b in range(ref.shape[1]):
                        name = (f"k[{i + 1},{i + 1},{i + 1}](lags in [{coarse[a]:.4g},{coarse[a + 1]:.4g})"
                                f"x[{coarse[b]:.4g},{coarse[b + 1]:.4g}))")
                        checks.append(check(name, ref[a, b], est.value[a, b], est.se[a, b]))
    return VerificationReport(model.fingerprint(), config.seed, float(config.T_obs), len(stream), checks)
