import math

import numpy as np
import ot
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from core.errors import DimensionMismatch
from core.measures import ParamSpace, dirac, make_measure
from core.mixtures import LikelihoodFamily
from core.transport import (
    GroundCost,
    composite_distance,
    solve_transport,
    transport,
    wasserstein,
    wasserstein_1d_oracle,
)
from tests.conftest import random_measure


def linprog_value(p, q, cost):
    k, kp = cost.shape
    A_eq = np.zeros((k + kp, k * kp))
    for i in range(k):
        A_eq[i, i * kp:(i + 1) * kp] = 1.0
    for j in range(kp):
        A_eq[k + j, j::kp] = 1.0
    result = linprog(cost.ravel(), A_eq=A_eq, b_eq=np.concatenate([p, q]),
                     bounds=(0, None), method='highs')
    return result.fun


def measures_1d(draw_seed, max_atoms):
    rng = np.random.default_rng(draw_seed)
    space = ParamSpace.interval(-2.0, 2.0)
    return random_measure(space, rng, max_atoms), random_measure(space, rng, max_atoms)


class TestTransport:
    def test_identity(self, rng, unit_interval):
        G = random_measure(unit_interval, rng)
        result = transport(G, G, GroundCost.euclidean(2))
        assert result.value == pytest.approx(0.0, abs=1e-12)
        assert result.coupling.marginal_error() <= 1e-10

    def test_diracs(self, unit_interval):
        result = transport(dirac(0.0, unit_interval), dirac(1.0, unit_interval), GroundCost.euclidean(2))
        assert result.value == pytest.approx(1.0)

    def test_two_point_example(self, two_point_pair):
        G, Gp = two_point_pair
        result = transport(G, Gp, GroundCost.euclidean(2))
        assert result.value == pytest.approx(0.3, abs=1e-12)
        np.testing.assert_allclose(result.coupling.matrix, [[0.3, 0.0], [0.3, 0.4]], atol=1e-12)

    def test_value_matches_coupling(self, rng):
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        for _ in range(20):
            G, Gp = random_measure(space, rng, 6), random_measure(space, rng, 6)
            cost = GroundCost.euclidean(2)
            result = transport(G, Gp, cost)
            recomputed = float(np.sum(result.coupling.matrix * cost.pairwise(G.atoms, Gp.atoms)))
            assert result.value == pytest.approx(recomputed, rel=1e-9, abs=1e-15)

    def test_vertex_coupling(self, rng):
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        for _ in range(20):
            G, Gp = random_measure(space, rng, 8), random_measure(space, rng, 8)
            result = transport(G, Gp, GroundCost.euclidean(1))
            assert result.coupling.marginal_error() <= 1e-10
            assert np.all(result.coupling.matrix >= 0)
            assert len(result.coupling.support()) <= G.k + Gp.k - 1

    def test_deterministic(self, rng, unit_interval):
        G, Gp = random_measure(unit_interval, rng, 10), random_measure(unit_interval, rng, 10)
        first = transport(G, Gp, GroundCost.euclidean(1))
        second = transport(G, Gp, GroundCost.euclidean(1))
        np.testing.assert_array_equal(first.coupling.matrix, second.coupling.matrix)

    def test_brute_force_two_by_two(self, rng):
        # q₀₀ es la única coordenada libre del politopo 2×2
        for _ in range(5):
            p = rng.dirichlet(np.ones(2))
            q = rng.dirichlet(np.ones(2))
            cost = rng.uniform(0.0, 1.0, size=(2, 2))
            low, high = max(0.0, p[0] - q[1]), min(p[0], q[0])
            grid = np.append(np.arange(low, high, 1e-4), high)
            values = (grid * cost[0, 0] + (p[0] - grid) * cost[0, 1]
                      + (q[0] - grid) * cost[1, 0] + (p[1] - q[0] + grid) * cost[1, 1])
            assert solve_transport(p, q, cost).value == pytest.approx(values.min(), abs=2e-4)

    def test_matches_linear_program(self, rng):
        for _ in range(50):
            k, kp = rng.integers(1, 4, size=2)
            p = rng.dirichlet(np.ones(k))
            q = rng.dirichlet(np.ones(kp))
            cost = rng.uniform(0.0, 1.0, size=(k, kp))
            assert solve_transport(p, q, cost).value == pytest.approx(linprog_value(p, q, cost), abs=1e-9)

    def test_degenerate_marginals(self):
        # Sumas parciales coincidentes fuerzan pivotes degenerados
        p = np.array([0.25, 0.25, 0.25, 0.25])
        q = np.array([0.5, 0.25, 0.25])
        cost = np.array([[3.0, 1.0, 2.0], [1.0, 3.0, 2.0], [2.0, 2.0, 1.0], [1.0, 2.0, 3.0]])
        result = solve_transport(p, q, cost)
        assert result.value == pytest.approx(linprog_value(p, q, cost), abs=1e-12)
        assert result.coupling.marginal_error() <= 1e-10

    def test_permutation_invariance(self, rng, unit_interval):
        G, Gp = random_measure(unit_interval, rng, 6), random_measure(unit_interval, rng, 6)
        order = rng.permutation(G.k)
        shuffled = make_measure(G.atoms[order], G.weights[order], unit_interval)
        assert wasserstein(G, Gp, 2) == pytest.approx(wasserstein(shuffled, Gp, 2), abs=1e-12)


class TestWasserstein:
    def test_dirac_distance(self, unit_interval):
        for r in (1, 2, 3):
            assert wasserstein(dirac(0.0, unit_interval), dirac(1.0, unit_interval), r) == pytest.approx(1.0)

    def test_w1_example(self, two_point_pair):
        G, Gp = two_point_pair
        assert wasserstein(G, Gp, 1) == pytest.approx(0.3, abs=1e-12)

    def test_w2_unique_coupling(self, unit_interval):
        G = make_measure([0.0, 1.0], [0.5, 0.5], unit_interval)
        assert wasserstein(G, dirac(0.5, unit_interval), 2) == pytest.approx(0.5)

    def test_rejects_r_below_one(self, unit_interval):
        with pytest.raises(ValueError):
            wasserstein(dirac(0.0, unit_interval), dirac(1.0, unit_interval), 0.5)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=150, deadline=None)
    def test_metric_axioms(self, seed):
        rng = np.random.default_rng(seed)
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        A, B, C = (random_measure(space, rng, 5) for _ in range(3))
        for r in (1, 2):
            ab, ba = wasserstein(A, B, r), wasserstein(B, A, r)
            assert abs(ab - ba) <= 1e-12
            assert wasserstein(A, C, r) <= ab + wasserstein(B, C, r) + 1e-9
        assert wasserstein(A, B, 1) <= wasserstein(A, B, 2) + 1e-12


class TestOracle:
    def test_example(self, two_point_pair):
        G, Gp = two_point_pair
        assert wasserstein_1d_oracle(G, Gp, 1) == pytest.approx(0.3, abs=1e-12)
        assert wasserstein_1d_oracle(G, G, 2) == 0.0

    def test_requires_one_dimension(self):
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        G = dirac([0.5, 0.5], space)
        with pytest.raises(DimensionMismatch):
            wasserstein_1d_oracle(G, G, 1)

    @pytest.mark.parametrize('r', [1, 2])
    def test_matches_solver(self, r):
        for seed in range(200):
            G, Gp = measures_1d(seed, 16)
            expected = wasserstein_1d_oracle(G, Gp, r)
            assert abs(wasserstein(G, Gp, r) - expected) <= 1e-9 * (1 + expected)

    @pytest.mark.slow
    @pytest.mark.parametrize('r', [1, 2])
    def test_matches_solver_large(self, r):
        for seed in range(1000):
            G, Gp = measures_1d(10_000 + seed, 64)
            expected = wasserstein_1d_oracle(G, Gp, r)
            assert abs(wasserstein(G, Gp, r) - expected) <= 1e-9 * (1 + expected)


class TestCompositeDistance:
    def test_identity(self, rng, wide_interval, gaussian):
        G = random_measure(wide_interval, rng)
        assert composite_distance(G, G, 'hellinger_sq', gaussian) == pytest.approx(0.0, abs=1e-15)

    def test_gaussian_kl_is_half_w2_squared(self, two_point_pair, gaussian):
        G, Gp = two_point_pair
        assert composite_distance(G, Gp, 'kl', gaussian) == pytest.approx(0.15, abs=1e-12)

    def test_gaussian_hellinger_closed_form(self, wide_interval, gaussian):
        shift = math.sqrt(8.0 * math.log(2.0))
        value = composite_distance(dirac(0.0, wide_interval), dirac(shift, wide_interval),
                                   'hellinger_sq', gaussian)
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_laplace_tv(self, wide_interval):
        laplace = LikelihoodFamily.laplace()
        value = composite_distance(dirac(0.0, wide_interval), dirac(1.0, wide_interval),
                                   'total_variation', laplace)
        assert value == pytest.approx(1.0 - math.exp(-0.5))


class TestExternalSolver:
    """Contraste con el simplex de red de POT (ot.emd2) y su cuantil 1D."""

    def test_emd_matches_random_problems(self, rng):
        for _ in range(100):
            k, kp = rng.integers(1, 9, size=2)
            p = rng.dirichlet(np.ones(k))
            q = rng.dirichlet(np.ones(kp))
            cost = rng.uniform(0.0, 1.0, size=(k, kp))
            expected = ot.emd2(p, q / q.sum() * p.sum(), cost)
            assert solve_transport(p, q, cost).value == pytest.approx(expected, abs=1e-9)

    def test_emd_in_two_dimensions(self, rng):
        space = ParamSpace([0.0, 0.0], [1.0, 1.0])
        for _ in range(30):
            G, Gp = random_measure(space, rng, 6), random_measure(space, rng, 6)
            cost = cdist(G.atoms, Gp.atoms) ** 2
            expected = ot.emd2(G.weights, Gp.weights / Gp.weights.sum() * G.weights.sum(), cost)
            assert wasserstein(G, Gp, 2) ** 2 == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize('r', [1, 2, 3])
    def test_quantile_loss(self, r):
        for seed in range(100):
            G, Gp = measures_1d(20_000 + seed, 12)
            expected = ot.wasserstein_1d(G.atoms[:, 0], Gp.atoms[:, 0], G.weights, Gp.weights, p=r)
            assert wasserstein(G, Gp, r) ** r == pytest.approx(float(expected), abs=1e-9)
