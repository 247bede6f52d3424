import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madesdr.expfam import Family
from madesdr.locallik import (
    LocalDesign,
    fit_batch,
    local_designs,
    local_jacobian,
    local_loglik,
    local_score,
    newton_fit,
)


def random_design(family, n=25, d=2, seed=0, offset=False):
    rng = np.random.default_rng(seed)
    diffs = rng.normal(size=(n, d))
    w = rng.dirichlet(np.ones(n))
    theta = 0.3 + diffs @ rng.normal(scale=0.4, size=d)
    if family.name in ("gamma", "exponential", "invgaussian", "geometric", "negbin"):
        theta = -np.exp(0.2 * theta) * 0.8
    y = family.scale_response(family.sample(theta, rng))
    a = family.dispersion_scale(None, np.ones(n))
    off = rng.normal(scale=0.1, size=n) if offset else 0.0
    return LocalDesign.from_reduced(family, diffs, w, y, a, off)


def wls(design):
    Z, w = design.Z, design.w
    return np.linalg.solve(Z.T @ (w[:, None] * Z), Z.T @ (w * (design.y - design.offset)))


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h * (1 + abs(x[k]))
        g[k] = (f(x + e) - f(x - e)) / (2 * e[k])
    return g


class TestScore:
    def test_saturated_gaussian(self):
        diffs = np.linspace(-1, 1, 7)[:, None]
        xi = np.array([0.5, 2.0])
        y = xi[0] + xi[1] * diffs[:, 0]
        des = LocalDesign.from_reduced(Family("gaussian", 1.0), diffs, np.full(7, 1 / 7), y)
        np.testing.assert_allclose(local_score(des, xi), 0.0, atol=1e-14)

    def test_single_poisson_observation(self):
        des = LocalDesign(Family("poisson"), np.array([[1.0, 0.0]]), np.array([1.0]),
                          np.array([1.0]), np.array([1.0]))
        np.testing.assert_array_equal(local_score(des, np.zeros(2)), [0.0, 0.0])

    @pytest.mark.parametrize("name", ["gaussian", "poisson", "binomial", "gamma", "negbin"])
    def test_matches_finite_differences(self, name):
        fam = Family(name, 2.0 if name in ("gamma", "negbin") else None)
        des = random_design(fam, seed=1, offset=True)
        xi = wls(des) * 0.1 if name in ("gaussian", "poisson", "binomial") else np.array([-1.0, 0.05, -0.05])
        fd = fd_gradient(lambda x: local_loglik(des, x), xi)
        np.testing.assert_allclose(local_score(des, xi), fd, rtol=1e-6, atol=1e-9)


class TestJacobian:
    def test_gaussian_constant(self):
        des = random_design(Family("gaussian", 1.0), seed=2)
        Z, w = des.Z, des.w
        for xi in (np.zeros(3), np.ones(3)):
            np.testing.assert_allclose(local_jacobian(des, xi), -Z.T @ (w[:, None] * Z),
                                       rtol=1e-13)

    @pytest.mark.parametrize("name", ["poisson", "binomial", "gamma"])
    def test_matches_finite_differences(self, name):
        fam = Family(name)
        des = random_design(fam, seed=3)
        xi = np.array([-0.8, 0.1, -0.2])
        J = local_jacobian(des, xi)
        fd = np.column_stack([
            fd_gradient(lambda x, r=r: local_score(des, x)[r], xi) for r in range(3)]).T
        np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-9)
        np.testing.assert_allclose(J, J.T, rtol=1e-14)
        assert np.all(np.linalg.eigvalsh(J) <= 1e-14)

    def test_intercept_only_poisson(self):
        rng = np.random.default_rng(4)
        w = rng.dirichlet(np.ones(6))
        a = rng.uniform(0.5, 2, 6)
        des = LocalDesign(Family("poisson"), np.ones((6, 1)), w, rng.poisson(2, 6).astype(float), a)
        alpha = 0.4
        assert local_jacobian(des, [alpha])[0, 0] == pytest.approx(-np.sum(w * math.exp(alpha) / a))


class TestNewton:
    def test_gaussian_one_step_is_wls(self):
        des = random_design(Family("gaussian", 1.0), seed=5)
        fit = newton_fit(des, xi0=np.array([10.0, -4.0, 3.0]))
        np.testing.assert_allclose(fit.xi, wls(des), rtol=1e-10, atol=1e-12)
        assert fit.converged and fit.iterations == 1

    def test_intercept_only_poisson(self):
        des = LocalDesign(Family("poisson"), np.ones((3, 1)), np.full(3, 1 / 3),
                          np.array([1.0, 2.0, 3.0]), np.ones(3))
        fit = newton_fit(des)
        assert fit.converged
        assert fit.xi[0] == pytest.approx(math.log(2), abs=1e-12)

    def test_start_at_optimum(self):
        des = random_design(Family("poisson"), seed=6)
        opt = newton_fit(des, tol=1e-12)
        again = newton_fit(des, xi0=opt.xi)
        assert again.converged and again.iterations == 0
        np.testing.assert_array_equal(again.xi, opt.xi)

    @pytest.mark.parametrize("name", ["poisson", "binomial", "gamma", "invgaussian", "geometric"])
    def test_converged_score_small(self, name):
        fam = Family(name)
        des = random_design(fam, seed=7)
        fit = newton_fit(des, tol=1e-8)
        assert fit.converged
        s = local_score(des, fit.xi)
        assert np.max(np.abs(s)) < 10 * 1e-8 * (1 + np.linalg.norm(fit.xi))

    def test_monotone_from_bad_start(self):
        des = random_design(Family("poisson"), seed=8)
        xi0 = np.array([3.0, 2.0, -2.0])
        fit = newton_fit(des, xi0=xi0)
        assert local_loglik(des, fit.xi) >= local_loglik(des, xi0)
        assert fit.converged

    def test_separation_does_not_blow_up(self):
        diffs = np.linspace(-1, 1, 10)[:, None]
        y = (diffs[:, 0] > 0).astype(float)
        des = LocalDesign.from_reduced(Family("binomial"), diffs, np.full(10, 0.1), y)
        fit = newton_fit(des, max_iter=50)
        assert np.all(np.isfinite(fit.xi))
        lo, hi = Family("binomial").theta_bounds
        theta = des.Z @ fit.xi
        assert np.all((theta >= lo) & (theta <= hi))

    def test_singular_design_ridged(self):
        # every point has the same reduced coordinate: slope not identified
        Z = np.column_stack([np.ones(5), np.zeros(5)])
        des = LocalDesign(Family("poisson"), Z, np.full(5, 0.2), np.arange(5.0), np.ones(5))
        fit = newton_fit(des)
        assert fit.ridged
        assert fit.xi[0] == pytest.approx(math.log(2.0), abs=1e-7)


class TestBatch:
    def test_batch_equals_sequential(self):
        rng = np.random.default_rng(9)
        P = rng.normal(size=(30, 1))
        y = rng.poisson(np.exp(0.5 * P[:, 0])).astype(float)
        Z = local_designs(P, P)
        W = rng.dirichlet(np.ones(30), size=30)
        fam = Family("poisson")
        batch = fit_batch(fam, Z, W, y, np.ones(30))
        for j in (0, 7, 29):
            single = fit_batch(fam, Z[j:j + 1], W[j:j + 1], y, np.ones(30))
            np.testing.assert_array_equal(single.xi[0], batch.xi[j])

    def test_local_designs_layout(self):
        P = np.array([[0.0], [1.0], [3.0]])
        Z = local_designs(P, P[1:2])
        np.testing.assert_array_equal(Z[0], [[1, -1], [1, 0], [1, 2]])


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(4, 30), d=st.integers(0, 3))
    def test_gaussian_wls(self, seed, n, d):
        des = random_design(Family("gaussian", 1.0), n=n, d=d, seed=seed, offset=True)
        ZtWZ = des.Z.T @ (des.w[:, None] * des.Z)
        if np.linalg.cond(ZtWZ) > 1e8:
            return
        fit = newton_fit(des)
        ref = wls(des)
        np.testing.assert_allclose(fit.xi, ref, rtol=1e-10, atol=1e-10 * (1 + np.abs(ref).max()))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.0, 3.0))
    def test_ascent(self, seed, scale):
        des = random_design(Family("binomial"), n=15, d=1, seed=seed)
        xi0 = np.random.default_rng(seed).normal(scale=scale, size=2)
        fit = newton_fit(des, xi0=xi0)
        assert local_loglik(des, fit.xi) >= local_loglik(des, xi0) - 1e-12
