import math

import numpy as np
import pytest
from scipy.stats import norm

from core.errors import DimensionMismatch, UnsupportedDivergence
from core.measures import canonicalize, dirac, make_measure
from core.mixtures import (
    LikelihoodFamily,
    MixtureDensity,
    component_divergence,
    density,
    integrate_line,
    mixture_divergence,
)
from tests.conftest import random_measure

DIVERGENCES = ('total_variation', 'hellinger_sq', 'kl')


class TestLikelihoodFamily:
    def test_smoothness_metadata(self, gaussian, laplace):
        assert gaussian.smoothness == 'supersmooth'
        assert laplace.smoothness == 'ordinary'
        assert gaussian.beta == laplace.beta == 2.0
        assert gaussian.conjugate and not laplace.conjugate

    def test_laplace_is_one_dimensional(self):
        with pytest.raises(DimensionMismatch):
            LikelihoodFamily('laplace_location', 2)

    def test_from_name(self):
        assert LikelihoodFamily.from_name('normal', 2) == LikelihoodFamily.gaussian(2)
        with pytest.raises(ValueError):
            LikelihoodFamily.from_name('gamma')

    @pytest.mark.parametrize('name', ['gaussian', 'laplace'])
    def test_holder_constants(self, name):
        family = LikelihoodFamily.from_name(name)
        delta = np.linspace(0.0, 6.0, 200)
        alpha, c1 = family.holder
        assert np.all(np.sqrt(family.divergence_from_distance('hellinger_sq', delta))
                      <= c1 * delta ** alpha + 1e-15)
        m1, c_kl = family.kl_holder
        assert np.all(family.divergence_from_distance('kl', delta) <= c_kl * delta ** m1 + 1e-15)

    @pytest.mark.parametrize('name', ['gaussian', 'laplace'])
    def test_density_integrates_to_one(self, name, wide_interval, rng):
        p = MixtureDensity(random_measure(wide_interval, rng), LikelihoodFamily.from_name(name))
        lower, upper = p.window()
        total, _ = integrate_line(lambda x: float(p.pdf(np.array([x]))[0]),
                                  list(p.mixing.atoms[:, 0]), lower, upper)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestDensity:
    def test_standard_normal(self, sym_interval, gaussian):
        assert density(MixtureDensity(dirac(0.0, sym_interval), gaussian), 0.0) == pytest.approx(0.3989423, abs=1e-7)

    def test_symmetric_mixture(self, sym_interval, gaussian):
        G = make_measure([-1.0, 1.0], [0.5, 0.5], sym_interval)
        assert density(MixtureDensity(G, gaussian), 0.0) == pytest.approx(0.2419707, abs=1e-7)

    def test_laplace_at_mode(self, sym_interval, laplace):
        assert density(MixtureDensity(dirac(0.0, sym_interval), laplace), 0.0) == pytest.approx(0.5)

    def test_invariant_under_canonicalize(self, sym_interval, gaussian):
        G = make_measure([0.2, 0.2, -0.5], [0.3, 0.3, 0.4], sym_interval)
        merged = canonicalize(G)
        for x in (-2.0, 0.0, 0.7, 3.0):
            assert density(MixtureDensity(G, gaussian), x) == pytest.approx(
                density(MixtureDensity(merged, gaussian), x), abs=1e-12)


class TestComponentDivergence:
    @pytest.mark.parametrize('divergence', DIVERGENCES)
    @pytest.mark.parametrize('name', ['gaussian', 'laplace'])
    def test_zero_on_identical(self, name, divergence):
        family = LikelihoodFamily.from_name(name)
        assert component_divergence(family, divergence, [0.4], [0.4]) == 0.0

    def test_gaussian_kl(self, gaussian):
        assert component_divergence(gaussian, 'kl', [0.0], [1.0]) == pytest.approx(0.5)

    def test_gaussian_tv(self, gaussian):
        expected = 2.0 * norm.cdf(1.0) - 1.0
        assert expected == pytest.approx(0.6826895, abs=1e-7)
        assert component_divergence(gaussian, 'tv', [0.0], [2.0]) == pytest.approx(expected)

    def test_multivariate_gaussian_uses_norm(self):
        family = LikelihoodFamily.gaussian(2)
        assert component_divergence(family, 'kl', [0.0, 0.0], [3.0, 4.0]) == pytest.approx(12.5)

    def test_unknown_divergence(self, gaussian):
        with pytest.raises(UnsupportedDivergence):
            component_divergence(gaussian, 'chi2', [0.0], [1.0])

    @pytest.mark.parametrize('divergence', DIVERGENCES)
    @pytest.mark.parametrize('name', ['gaussian', 'laplace'])
    def test_closed_form_matches_quadrature(self, name, divergence, wide_interval, rng):
        family = LikelihoodFamily.from_name(name)
        for _ in range(10):
            a, b = rng.uniform(-3.0, 3.0, size=2)
            closed = component_divergence(family, divergence, [a], [b])
            numeric = mixture_divergence(MixtureDensity(dirac(a, wide_interval), family),
                                         MixtureDensity(dirac(b, wide_interval), family),
                                         divergence).value
            assert numeric == pytest.approx(closed, abs=1e-6)


class TestMixtureDivergence:
    @pytest.mark.parametrize('divergence', DIVERGENCES)
    def test_identical(self, divergence, wide_interval, gaussian, rng):
        p = MixtureDensity(random_measure(wide_interval, rng), gaussian)
        assert mixture_divergence(p, p, divergence).value == pytest.approx(0.0, abs=1e-8)

    def test_gaussian_tv(self, wide_interval, gaussian):
        estimate = mixture_divergence(MixtureDensity(dirac(0.0, wide_interval), gaussian),
                                      MixtureDensity(dirac(2.0, wide_interval), gaussian), 'tv')
        assert estimate.value == pytest.approx(0.6826895, abs=1e-6)
        assert estimate.half_width >= 1e-8

    def test_gaussian_hellinger(self, wide_interval, gaussian):
        value, _ = mixture_divergence(MixtureDensity(dirac(0.0, wide_interval), gaussian),
                                      MixtureDensity(dirac(1.0, wide_interval), gaussian),
                                      'hellinger_sq')
        assert value == pytest.approx(1.0 - math.exp(-1.0 / 8.0), abs=1e-8)

    @pytest.mark.parametrize('divergence', DIVERGENCES)
    def test_monte_carlo_agrees(self, divergence, wide_interval, gaussian):
        p = MixtureDensity(make_measure([-1.0, 1.0], [0.3, 0.7], wide_interval), gaussian)
        q = MixtureDensity(dirac(0.5, wide_interval), gaussian)
        exact = mixture_divergence(p, q, divergence).value
        estimate = mixture_divergence(p, q, divergence, method='monte_carlo', n=40000, seed=7)
        assert abs(estimate.value - exact) <= 2.0 * estimate.half_width

    def test_quadrature_requires_one_dimension(self):
        family = LikelihoodFamily.gaussian(2)
        from core.measures import ParamSpace
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        p = MixtureDensity(dirac([0.5, 0.5], space), family)
        with pytest.raises(DimensionMismatch):
            mixture_divergence(p, p, 'tv')

    def test_monte_carlo_in_two_dimensions(self):
        from core.measures import ParamSpace
        family = LikelihoodFamily.gaussian(2)
        space = ParamSpace([0.0, 0.0], [3.0, 4.0])
        p = MixtureDensity(dirac([0.0, 0.0], space), family)
        q = MixtureDensity(dirac([3.0, 4.0], space), family)
        estimate = mixture_divergence(p, q, 'kl', method='monte_carlo', n=20000, seed=3)
        assert abs(estimate.value - 12.5) <= 2.0 * estimate.half_width
