import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmr.core import DimensionMismatchError, GaussianMixture
from gmr.descent import DescentConfig
from gmr.dissim import ise, nise
from gmr.greedy import MergeMethod, williams_reduce
from gmr.merge import kld_barycenter
from gmr.params import MixtureCoords
from gmr.refine import ObjectiveFn, refine, run_descent

from conftest import random_mixture

# regression baseline for refining the ISE-consistent Williams output of the test mixture
REFINED_ISE = 0.0034194396127466


@pytest.fixture(scope="module")
def williams_ise_output():
    from gmr.repro import test_mixture as make

    gm = make()
    out, trace = williams_reduce(gm, 2, MergeMethod.bsga("ise"))
    return gm, out, trace


class TestCoords:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
    def test_round_trip(self, seed, n, d):
        gm = random_mixture(np.random.default_rng(seed), n, d)
        c = MixtureCoords(n, d)
        theta = c.pack(gm)
        assert theta.size == c.size == (n - 1) + n * d + n * d * (d + 1) // 2
        back = c.unpack(theta)
        np.testing.assert_allclose(back.weights, gm.weights, rtol=1e-12)
        np.testing.assert_allclose(back.means, gm.means, rtol=0, atol=0)
        np.testing.assert_allclose(back.covs, gm.covs, rtol=1e-12, atol=1e-14)

    def test_any_vector_is_valid(self, rng):
        c = MixtureCoords(3, 2)
        gm = c.unpack(rng.normal(scale=3.0, size=c.size))
        assert abs(gm.weights.sum() - 1) < 1e-15
        np.linalg.cholesky(gm.covs)

    @pytest.mark.parametrize("measure", ["ise", "nise"])
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_pullback_matches_finite_differences(self, measure, d):
        r = np.random.default_rng(d)
        f, g = random_mixture(r, 4, d), random_mixture(r, 3, d)
        c = MixtureCoords(g.n, d)
        obj = ObjectiveFn(f, c, measure)
        theta = c.pack(g)
        _, grad = obj.value_and_grad(theta)
        h = 1e-6
        fd = np.array([(obj(theta + h * e) - obj(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
        assert np.max(np.abs(grad - fd)) / np.max(np.abs(fd)) < 1e-6

    def test_kld_objective_rejected(self, test_gm):
        with pytest.raises(ValueError):
            ObjectiveFn(test_gm, MixtureCoords(2, 1), "kld")


class TestRefine:
    def test_start_at_original(self, test_gm):
        res = refine(test_gm, test_gm)
        assert res.final_cost == pytest.approx(0.0, abs=1e-12)
        assert res.iterations <= 1

    def test_local_trap_on_case_study(self, case4):
        start = GaussianMixture.single(kld_barycenter(case4)[0])
        res = refine(case4, start, "ise")
        assert res.converged
        assert res.mixture.means[0, 0] == pytest.approx(2.041867, abs=1e-5)
        assert res.mixture.covs[0, 0, 0] == pytest.approx(11.14786, abs=1e-4)

    def test_regression_on_test_mixture(self, williams_ise_output):
        gm, out, trace = williams_ise_output
        res = refine(gm, out, "ise")
        assert res.initial_cost == pytest.approx(trace.final_cost, rel=1e-12)
        assert res.final_cost <= res.initial_cost
        assert res.final_cost == pytest.approx(REFINED_ISE, rel=1e-8)
        assert res.converged and res.grad_norm < DescentConfig().grad_tol
        assert res.final_cost == pytest.approx(ise(gm, res.mixture), rel=1e-14)

    def test_permutation_equivalence(self, williams_ise_output):
        gm, out, _ = williams_ise_output
        a = refine(gm, out, "ise")
        b = refine(gm, out.permuted([1, 0]), "ise")
        assert abs(a.final_cost - b.final_cost) < 1e-10

    def test_nise(self, williams_ise_output):
        gm, out, _ = williams_ise_output
        res = refine(gm, out, "nise")
        assert res.final_cost < res.initial_cost
        assert res.final_cost == pytest.approx(nise(gm, res.mixture), rel=1e-14)

    def test_monotone_history(self, williams_ise_output):
        gm, out, _ = williams_ise_output
        _, _, res = run_descent(gm, out, "ise", DescentConfig(max_iters=100))
        assert np.all(np.diff(res.history) <= 0.0)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 2))
    def test_output_is_valid_and_not_worse(self, seed, n, d):
        r = np.random.default_rng(seed)
        f = random_mixture(r, n, d)
        start = random_mixture(r, n - 1, d)
        res = refine(f, start, "ise", DescentConfig(max_iters=200))
        assert 0.0 <= res.final_cost <= res.initial_cost
        assert abs(res.mixture.weights.sum() - 1.0) <= 1e-12
        np.linalg.cholesky(res.mixture.covs)
        if res.converged:
            assert res.grad_norm < DescentConfig().grad_tol

    def test_dimension_mismatch(self, test_gm):
        with pytest.raises(DimensionMismatchError):
            refine(test_gm, GaussianMixture([1.0], [[0.0, 0.0]], [np.eye(2)]))
