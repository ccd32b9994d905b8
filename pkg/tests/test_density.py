import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkes_cumulants.cumulants import integrated_cumulant
from hawkes_cumulants.density import (DensityContext, covariance_bin_average, covariance_density_grid,
                                      cumulant_density, integrate_density, third_bin_average, third_density_grid)
from hawkes_cumulants.errors import GridError, SizeError
from hawkes_cumulants.model import HawkesModel, build_summary, renewal_density


@pytest.fixture(scope="module")
def scalar_ctx():
    model = HawkesModel.exponential([1.0], [[0.5]], [[1.0]])
    return DensityContext(model, renewal_density(model, 0.01, 40.0))


@pytest.fixture(scope="module")
def d2_ctx():
    model = HawkesModel.exponential([0.5, 0.8], [[0.3, 0.2], [0.4, 0.1]], [[1.0, 2.0], [0.7, 1.5]])
    return DensityContext(model, renewal_density(model, 0.025, 40.0))


def test_scalar_covariance_closed_form(scalar_ctx):
    # lam * (Phi(tau) + int Phi(u) Phi(u + tau) du) with Phi(t) = 0.5 exp(-t / 2)
    lags = np.arange(1, 600) * 0.01
    got = covariance_density_grid(scalar_ctx, 0, 0, lags)
    np.testing.assert_allclose(got, 1.5 * np.exp(-lags / 2), rtol=2e-3)
    np.testing.assert_allclose(covariance_density_grid(scalar_ctx, 0, 0, -lags), got, rtol=1e-12)


def test_scalar_bin_average_closed_form(scalar_ctx):
    edges = np.array([0.5, 1.0, 2.0, 4.0])
    exact = [3.0 * (np.exp(-a / 2) - np.exp(-b / 2)) / (b - a) for a, b in zip(edges[:-1], edges[1:])]
    np.testing.assert_allclose(covariance_bin_average(scalar_ctx, 0, 0, edges), exact, rtol=1e-3)


def test_point_and_grid_routes_agree(d2_ctx):
    ctx = d2_ctx
    for types in [(0, 1), (1, 0), (1, 1)]:
        for lag in (-1.3, 0.4, 2.0):
            point = cumulant_density(ctx.model, ctx.renewal, types, (0.0, lag), ctx=ctx).continuous
            grid = covariance_density_grid(ctx, types[0], types[1], [lag])[0]
            assert point == pytest.approx(grid, rel=1e-10)
    lags2, lags3 = np.array([-0.6, 0.3, 1.2]), np.array([-1.0, 0.5])
    for types in [(0, 0, 1), (1, 0, 1)]:
        grid = third_density_grid(ctx, types, lags2, lags3)
        for a, b in itertools.product(range(3), range(2)):
            point = cumulant_density(ctx.model, ctx.renewal, types, (0.0, lags2[a], lags3[b]), ctx=ctx).continuous
            assert point == pytest.approx(grid[a, b], rel=1e-10)


def test_poisson_densities():
    model = HawkesModel.poisson([0.7, 1.3])
    r = renewal_density(model)
    v = cumulant_density(model, r, (1, 1), (2.0, 2.0))
    assert v.continuous == 0.0
    assert v.atoms == {((0, 1),): 1.3}
    assert cumulant_density(model, r, (0, 1), (0.0, 0.0)).atoms == {}
    assert cumulant_density(model, r, (0, 0), (0.0, 0.5)).continuous == 0.0
    assert cumulant_density(model, r, (0,), (3.0,)).continuous == 0.7


def test_integral_consistency():
    # full-plane third-order integrals cost O(M^3); use a coarse grid
    scalar = HawkesModel.exponential([1.0], [[0.5]], [[1.0]])
    ctx = DensityContext(scalar, renewal_density(scalar, 0.05, 30.0))
    assert integrate_density(ctx, (0, 0)) == pytest.approx(8.0, rel=1e-2)
    assert integrate_density(ctx, (0, 0, 0)) == pytest.approx(64.0, rel=1e-2)
    d2 = HawkesModel.exponential([0.5, 0.8], [[0.3, 0.2], [0.4, 0.1]], [[1.0, 2.0], [0.7, 1.5]])
    ctx = DensityContext(d2, renewal_density(d2, 0.05, 30.0))
    for types in [(0, 1), (1, 1), (0, 0, 1), (0, 1, 1), (1, 1, 1)]:
        assert integrate_density(ctx, types) == pytest.approx(integrated_cumulant(ctx.summary, types), rel=1e-2)


def test_integral_improves_under_refinement():
    model = HawkesModel.exponential([1.0], [[0.5]], [[1.0]])
    errs = []
    for dt in (0.1, 0.05):
        ctx = DensityContext(model, renewal_density(model, dt, 30.0))
        errs.append(abs(integrate_density(ctx, (0, 0, 0)) - 64.0))
    assert errs[1] < errs[0]


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([(0, 0, 1), (0, 1, 1), (1, 0, 0), (0, 1, 0)]),
       st.floats(-3, 3), st.floats(-3, 3), st.floats(-5, 5), st.permutations(range(3)))
def test_exchangeability_and_shift(types, t2, t3, shift, perm):
    model = HawkesModel.exponential([0.5, 0.8], [[0.3, 0.2], [0.4, 0.1]], [[1.0, 2.0], [0.7, 1.5]])
    r = renewal_density(model, 0.05, 30.0)
    ctx = DensityContext(model, r)
    times = (0.0, round(t2 / 0.05) * 0.05, round(t3 / 0.05) * 0.05)
    base = cumulant_density(model, r, types, times, ctx=ctx)
    shifted = cumulant_density(model, r, types, tuple(t + round(shift / 0.05) * 0.05 for t in times), ctx=ctx)
    assert shifted.continuous == pytest.approx(base.continuous, rel=1e-10, abs=1e-14)
    pt = tuple(types[k] for k in perm)
    ptimes = tuple(times[k] for k in perm)
    permuted = cumulant_density(model, r, pt, ptimes, ctx=ctx)
    assert permuted.continuous == pytest.approx(base.continuous, rel=1e-10, abs=1e-14)
    assert sorted(permuted.atoms.values()) == pytest.approx(sorted(base.atoms.values()), rel=1e-10)


def test_third_order_coincidence_atoms(scalar_ctx):
    v = cumulant_density(scalar_ctx.model, scalar_ctx.renewal, (0, 0, 0), (0.0, 0.7, 0.7))
    # two events coincide: coefficient is the second-order density at the remaining lag
    k2 = covariance_density_grid(scalar_ctx, 0, 0, [0.7])[0]
    assert v.atoms == {((0,), (1, 2)): pytest.approx(k2, rel=1e-12)}
    full = cumulant_density(scalar_ctx.model, scalar_ctx.renewal, (0, 0, 0), (1.0, 1.0, 1.0))
    assert full.atoms[((0, 1, 2),)] == 2.0


def test_bin_average_symmetry(d2_ctx):
    edges = np.arange(-8, 9) * 0.25
    a = covariance_bin_average(d2_ctx, 0, 1, edges)
    b = covariance_bin_average(d2_ctx, 1, 0, -edges[::-1])
    np.testing.assert_allclose(a, b[::-1], rtol=1e-12)
    e = np.array([-1.0, 0.0, 1.0])
    t = third_bin_average(d2_ctx, (0, 0, 0), e, e)
    np.testing.assert_allclose(t, t.T, rtol=1e-10)


def test_errors(scalar_ctx):
    model, r = scalar_ctx.model, scalar_ctx.renewal
    with pytest.raises(GridError):
        cumulant_density(model, r, (0, 0), (0.0, 100.0))
    with pytest.raises(SizeError):
        cumulant_density(model, r, (0,) * 4, (0.0, 0.1, 0.2, 0.3))
    with pytest.raises(GridError):
        covariance_bin_average(scalar_ctx, 0, 0, [0.0, 0.123])
    small = renewal_density(model, 0.1, 10.0)
    v = cumulant_density(model, small, (0,) * 4, (0.0, 0.3, 0.5, 1.0), allow_order4=True)
    assert v.continuous > 0
