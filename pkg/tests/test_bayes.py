import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import truncnorm

from core.bayes import (
    ClusterMarginal,
    DPPrior,
    FiniteMixturePrior,
    centered_packing,
    dp_small_ball_check,
    gibbs_dp,
    gibbs_finite,
    sample_prior,
    simulate_data,
    small_ball_bound,
    stick_breaking,
)
from core.errors import DimensionMismatch, PackingDegenerate, RejectionExhausted
from core.measures import ParamSpace, dirac, make_measure
from core.transport import wasserstein_1d_oracle


def _measure_moments(measures, power):
    """Σ_j w_j θ_j^power por medida."""
    return np.array([float(np.sum(G.weights * G.atoms[:, 0] ** power)) for G in measures])


@pytest.fixture
def box():
    return ParamSpace.interval(-4.0, 4.0)


@pytest.fixture
def two_point_g0(box):
    return make_measure([-2.0, 2.0], [0.5, 0.5], box)


class TestPriors:
    def test_default_truncation(self, box):
        prior = DPPrior(box, 1.0)
        assert prior.truncation == 20
        assert prior.tail_mass_bound() < 1e-6

    def test_long_truncation(self, box):
        assert DPPrior(box, 1.0, truncation=200).tail_mass_bound() < 1e-6

    def test_short_truncation_rejected(self, box):
        with pytest.raises(ValueError):
            DPPrior(box, 1.0, truncation=5)

    def test_stick_breaking_sums_to_one(self, rng):
        weights = stick_breaking(2.0, 30, 500, rng)
        assert weights.shape == (500, 30)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(weights >= 0)

    def test_dp_draw(self, box):
        G = sample_prior(DPPrior(box, 0.5), seed=4)
        assert abs(G.weights.sum() - 1.0) <= 1e-12
        assert np.all(box.contains(G.atoms))

    def test_finite_floors(self, box):
        prior = FiniteMixturePrior(box, 3)
        assert prior.separation_floor == pytest.approx(0.8)
        rng = np.random.default_rng(0)
        for _ in range(50):
            G = sample_prior(prior, rng)
            assert G.k == 3
            assert G.weights.min() >= 0.05
            gaps = np.abs(G.atoms[:, None, 0] - G.atoms[None, :, 0])[np.triu_indices(3, 1)]
            assert gaps.min() >= 0.8

    def test_impossible_weight_floor(self, box):
        with pytest.raises(RejectionExhausted):
            FiniteMixturePrior(box, 4, weight_floor=0.3)


class TestSimulateData:
    def test_empty(self, two_point_g0, gaussian):
        assert simulate_data(two_point_g0, gaussian, 0, seed=1).shape == (0, 1)

    def test_mean_and_spread(self, two_point_g0, gaussian):
        x = simulate_data(two_point_g0, gaussian, 20000, seed=2)
        assert x.shape == (20000, 1)
        assert float(x.mean()) == pytest.approx(0.0, abs=0.1)
        assert float(x.var()) == pytest.approx(5.0, rel=0.05)

    def test_deterministic(self, two_point_g0, laplace):
        np.testing.assert_array_equal(simulate_data(two_point_g0, laplace, 50, seed=3),
                                      simulate_data(two_point_g0, laplace, 50, seed=3))

    def test_dimension_mismatch(self, gaussian):
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        with pytest.raises(DimensionMismatch):
            simulate_data(dirac([0.5, 0.5], space), gaussian, 10)


class TestGibbsFinite:
    def test_chain_length(self, box, gaussian):
        chain = gibbs_finite(np.empty((0, 1)), FiniteMixturePrior(box, 2), gaussian,
                             iterations=10, burn_in=2, thin=3, seed=0)
        assert len(chain) == math.ceil((10 - 2) / 3)
        assert chain.n == 0

    def test_deterministic(self, box, two_point_g0, gaussian):
        data = simulate_data(two_point_g0, gaussian, 100, seed=5)
        prior = FiniteMixturePrior(box, 2)
        first = gibbs_finite(data, prior, gaussian, 40, 10, 2, seed=11)
        second = gibbs_finite(data, prior, gaussian, 40, 10, 2, seed=11)
        for a, b in zip(first.draws, second.draws):
            np.testing.assert_array_equal(a.atoms, b.atoms)
            np.testing.assert_array_equal(a.weights, b.weights)

    def test_single_component_matches_truncated_normal(self, gaussian):
        space = ParamSpace.interval(0.0, 1.2)
        data = simulate_data(dirac(1.0, space), gaussian, 20, seed=6)
        chain = gibbs_finite(data, FiniteMixturePrior(space, 1), gaussian, 4000, 0, 1, seed=7)
        atoms = np.array([G.atoms[0, 0] for G in chain.draws])

        n, center = data.shape[0], float(data.mean())
        scale = 1.0 / math.sqrt(n)
        exact = truncnorm((0.0 - center) / scale, (1.2 - center) / scale, loc=center, scale=scale)
        size = atoms.size
        assert abs(atoms.mean() - exact.mean()) <= 3.0 * math.sqrt(exact.var() / size)
        assert abs(atoms.var(ddof=1) - exact.var()) <= 3.0 * exact.var() * math.sqrt(2.0 / (size - 1))

    def test_concentrates_near_truth(self, box, two_point_g0, gaussian):
        data = simulate_data(two_point_g0, gaussian, 400, seed=8)
        chain = gibbs_finite(data, FiniteMixturePrior(box, 2), gaussian, 200, 50, 5, seed=9)
        atoms = np.array([np.sort(G.atoms[:, 0]) for G in chain.draws])
        weights = np.array([G.weights[np.argsort(G.atoms[:, 0])] for G in chain.draws])
        np.testing.assert_allclose(atoms.mean(axis=0), [-2.0, 2.0], atol=0.3)
        np.testing.assert_allclose(weights.mean(axis=0), [0.5, 0.5], atol=0.1)
        # W₂ ≈ 4·sqrt(|Δw|) domina con átomos a distancia 4
        distances = [wasserstein_1d_oracle(two_point_g0, G, 2) for G in chain.draws]
        assert float(np.median(distances)) < 1.0
        for G in chain.draws:
            assert G.weights.min() >= 0.05

    def test_no_data_reproduces_prior_moments(self, box, gaussian):
        prior = FiniteMixturePrior(box, 2)
        chain = gibbs_finite(np.empty((0, 1)), prior, gaussian, 2000, 0, 1, seed=21)
        rng = np.random.default_rng(22)
        reference = [sample_prior(prior, rng) for _ in range(20000)]
        for power in (1, 2):
            chain_values = _measure_moments(chain.draws, power)
            prior_values = _measure_moments(reference, power)
            se = math.sqrt(chain_values.var(ddof=1) / chain_values.size
                           + prior_values.var(ddof=1) / prior_values.size)
            assert abs(chain_values.mean() - prior_values.mean()) <= 3.0 * se

    @pytest.mark.parametrize('k', [1, 2, 3])
    def test_single_observation(self, gaussian, k):
        space = ParamSpace.interval(-1.0, 1.0)
        prior = FiniteMixturePrior(space, k, separation_floor=0.1)
        chain = gibbs_finite(np.array([[0.3]]), prior, gaussian, 6, 0, 1, seed=3)
        for G in chain.draws:
            assert G.atoms.shape == (k, 1)
            assert np.all(space.contains(G.atoms))

    @pytest.mark.slow
    def test_posterior_tightens_with_n(self, box, two_point_g0, gaussian):
        medians = {}
        for n in (200, 2000):
            values = []
            for replicate in range(6):
                data = simulate_data(two_point_g0, gaussian, n, seed=100 + replicate)
                chain = gibbs_finite(data, FiniteMixturePrior(box, 2), gaussian, 150, 50, 5,
                                     seed=200 + replicate)
                values.append(np.median([wasserstein_1d_oracle(two_point_g0, G, 2)
                                         for G in chain.draws]))
            medians[n] = float(np.mean(values))
        assert medians[2000] < medians[200]

    def test_rejects_laplace(self, box, laplace):
        with pytest.raises(ValueError):
            gibbs_finite(np.zeros((3, 1)), FiniteMixturePrior(box, 2), laplace, 10, 2, 1, seed=0)

    def test_rejects_bad_schedule(self, box, gaussian):
        with pytest.raises(ValueError):
            gibbs_finite(np.zeros((3, 1)), FiniteMixturePrior(box, 2), gaussian, 10, 10, 1, seed=0)


class TestClusterMarginal:
    def test_new_cluster_matches_numeric_integral(self):
        space = ParamSpace.interval(-1.0, 2.0)
        marginal = ClusterMarginal(space)
        x = np.array([0.3])
        grid = np.linspace(-1.0, 2.0, 20001)
        density = np.exp(-0.5 * (x[0] - grid) ** 2) / math.sqrt(2 * math.pi) / 3.0
        expected = math.log(trapezoid(density, grid))
        assert marginal.log_new(x) == pytest.approx(expected, abs=1e-6)

    def test_predictive_is_normalized(self):
        space = ParamSpace.interval(-3.0, 3.0)
        marginal = ClusterMarginal(space)
        counts = np.array([4.0])
        sums = np.array([[2.0]])
        log_mass = marginal.log_mass(counts, sums)
        grid = np.linspace(-12.0, 12.0, 4001)
        values = np.array([np.exp(marginal.log_predictive(np.array([x]), counts, sums, log_mass)[0])
                           for x in grid])
        assert float(trapezoid(values, grid)) == pytest.approx(1.0, abs=1e-4)


class TestGibbsDP:
    def test_no_data_returns_prior_draws(self, box, gaussian):
        chain = gibbs_dp(np.empty((0, 1)), DPPrior(box, 1.0), gaussian, 10, 2, 3, seed=0)
        assert len(chain) == 3
        assert all(G.k == 20 for G in chain.draws)

    def test_no_data_reproduces_prior_moments(self, box, gaussian):
        chain = gibbs_dp(np.empty((0, 1)), DPPrior(box, 1.0), gaussian, 4000, 0, 1, seed=31)
        # P₀ uniforme en [−4, 4]: E[Σ w θ] = 0, E[Σ w θ²] = 64/12
        for power, expected in ((1, 0.0), (2, 64.0 / 12.0)):
            values = _measure_moments(chain.draws, power)
            se = math.sqrt(values.var(ddof=1) / values.size)
            assert abs(values.mean() - expected) <= 3.0 * se

    def test_no_data_stick_count(self, box, gaussian):
        prior = DPPrior(box, 1.0)
        chain = gibbs_dp(np.empty((0, 1)), prior, gaussian, 4000, 0, 1, seed=32)
        counts = np.array([np.sum(G.weights > 0.01) for G in chain.draws], dtype=float)
        weights = stick_breaking(1.0, prior.truncation, 20000, np.random.default_rng(33))
        reference = np.sum(weights > 0.01, axis=1).astype(float)
        se = math.sqrt(counts.var(ddof=1) / counts.size + reference.var(ddof=1) / reference.size)
        assert abs(counts.mean() - reference.mean()) <= 3.0 * se

    def test_single_observation(self, gaussian):
        space = ParamSpace.interval(-1.0, 1.0)
        chain = gibbs_dp(np.array([[0.3]]), DPPrior(space, 1.0), gaussian, 8, 0, 2, seed=4)
        assert len(chain) == 4
        for G in chain.draws:
            assert G.atoms.ndim == 2 and G.atoms.shape[1] == 1
            assert abs(G.weights.sum() - 1.0) <= 1e-12

    def test_posterior_draws(self, box, two_point_g0, gaussian):
        data = simulate_data(two_point_g0, gaussian, 60, seed=12)
        chain = gibbs_dp(data, DPPrior(box, 1.0), gaussian, 150, 50, 5, seed=13)
        assert len(chain) == 20
        assert chain.diagnostics['mean_clusters'] >= 1.0
        for G in chain.draws:
            assert abs(G.weights.sum() - 1.0) <= 1e-12
            assert np.all(box.contains(G.atoms))
        distances = [wasserstein_1d_oracle(two_point_g0, G, 2) for G in chain.draws]
        assert float(np.median(distances)) < 1.0

    def test_deterministic(self, box, two_point_g0, gaussian):
        data = simulate_data(two_point_g0, gaussian, 30, seed=14)
        first = gibbs_dp(data, DPPrior(box, 1.0), gaussian, 20, 5, 5, seed=15)
        second = gibbs_dp(data, DPPrior(box, 1.0), gaussian, 20, 5, 5, seed=15)
        for a, b in zip(first.draws, second.draws):
            np.testing.assert_array_equal(a.atoms, b.atoms)

    @pytest.mark.slow
    def test_posterior_tightens_with_n(self, box, two_point_g0, gaussian):
        medians = {}
        for n in (200, 2000):
            values = []
            for replicate in range(10):
                data = simulate_data(two_point_g0, gaussian, n, seed=300 + replicate)
                chain = gibbs_dp(data, DPPrior(box, 1.0), gaussian, 60, 20, 4, seed=400 + replicate)
                values.append(np.median([wasserstein_1d_oracle(two_point_g0, G, 2)
                                         for G in chain.draws]))
            medians[n] = float(np.mean(values))
        assert medians[2000] < medians[200]


class TestSmallBall:
    def test_bound_on_unit_interval(self, unit_interval):
        bound = small_ball_bound(DPPrior(unit_interval, 1.0), 0.2, 1.0)
        assert bound['D'] == 6
        expected = (-5 * math.log(12.0) + 5 * math.log(0.2)
                    + 2 * math.log(0.1) + 4 * math.log(0.2))
        assert bound['log_bound'] == pytest.approx(expected, rel=1e-9)
        assert bound['threshold'] == pytest.approx(0.6)
        assert 0.0 < bound['bound'] <= 1.0
        assert bound['regime_ok']

    def test_packing_count_at_exact_multiple(self):
        space = ParamSpace.interval(0.0, 0.6)
        bound = small_ball_bound(DPPrior(space, 1.0), 0.2, 1.0)
        assert bound['D'] == 4
        np.testing.assert_allclose(centered_packing(space, 0.2), [0.0, 0.2, 0.4, 0.6], atol=1e-12)

    def test_centered_packing(self, unit_interval):
        centers = centered_packing(unit_interval, 0.3)
        assert centers.size == 4
        np.testing.assert_allclose(centers, [0.05, 0.35, 0.65, 0.95])

    def test_degenerate_packing(self, unit_interval):
        with pytest.raises(PackingDegenerate):
            small_ball_bound(DPPrior(unit_interval, 1.0), 1.5, 1.0)

    def test_requires_one_dimension(self):
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        with pytest.raises(DimensionMismatch):
            small_ball_bound(DPPrior(space, 1.0), 0.2, 1.0)

    @pytest.mark.parametrize('nu', [0.5, 1.0, 2.0])
    def test_monte_carlo_check_passes(self, unit_interval, nu):
        result = dp_small_ball_check(DPPrior(unit_interval, nu), dirac(0.5, unit_interval),
                                     eps=0.3, r=1.0, mc_draws=2000, seed=1)
        assert result['valido']
        assert 0.0 <= result['estimate'] <= 1.0
        assert result['draws'] == 2000

    def test_two_atom_center(self, unit_interval):
        G0 = make_measure([0.2, 0.8], [0.5, 0.5], unit_interval)
        result = dp_small_ball_check(DPPrior(unit_interval, 1.0), G0, eps=0.3, r=2.0,
                                     mc_draws=500, seed=2)
        assert result['valido']
        assert result['std_error'] >= 0.0
