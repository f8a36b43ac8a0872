"""Deterministic tensor kernels: matmul, row reductions, covariance,
power-iteration components, Newton-Schulz inverse square root, finite
differences, stable softplus/sigmoid, and the seeded RNG tree."""

import math

import numpy as np
import pytest

from ffbench import tensor
from ffbench.errors import (
    ConvergenceError,
    EmptyMatrixError,
    NonFiniteError,
    NotSymmetricError,
    ShapeMismatchError,
)
from ffbench.tensor import (
    Rng,
    batch_covariance,
    component_eigenvalues,
    finite_difference_gradient,
    inverse_sqrt_spd,
    matmul,
    row_reduce,
    sigmoid,
    softplus,
    top_k_components,
)

from oracles import covariance_oracle, jacobi_eigh, matmul_oracle, sigmoid_scalar, softplus_scalar


class TestMatmul:
    def test_matches_triple_loop_oracle_bitwise(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            a = rng.standard_normal((7, 11))
            b = rng.standard_normal((11, 4))
            assert np.array_equal(matmul(a, b), matmul_oracle(a, b))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_non_finite_input_rejected(self):
        bad = np.array([[1.0, np.nan]])
        with pytest.raises(NonFiniteError):
            matmul(bad, np.zeros((2, 2)))

    def test_overflow_product_rejected(self):
        big = np.full((2, 2), 1e308)
        with pytest.raises(NonFiniteError, match="non-finite"):
            matmul(big, big)

    def test_flop_hook_reports_2mkn(self):
        seen = []
        previous = tensor.set_flop_hook(lambda kind, count: seen.append((kind, count)))
        try:
            matmul(np.ones((3, 5)), np.ones((5, 7)))
        finally:
            tensor.set_flop_hook(previous)
        assert seen == [("matmul", 2 * 3 * 5 * 7)]

    def test_one_d_input_rejected(self):
        with pytest.raises(ShapeMismatchError):
            matmul(np.ones(3), np.ones((3, 2)))


class TestRowReduce:
    def test_kinds_match_scalar_loops(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((6, 9))
        for kind, fn in [
            ("sum", lambda r: sum(r)),
            ("mean", lambda r: sum(r) / len(r)),
            ("l2norm", lambda r: math.sqrt(sum(v * v for v in r))),
            ("max", max),
            ("min", min),
        ]:
            got = row_reduce(m, kind)
            assert got.shape == (6, 1)
            for i in range(6):
                assert got[i, 0] == pytest.approx(fn(list(m[i])), rel=1e-12)

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrixError):
            row_reduce(np.zeros((0, 3)), "sum")

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown kind"):
            row_reduce(np.ones((2, 2)), "median")


class TestBatchCovariance:
    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(5)
        m = rng.standard_normal((8, 5))
        got = batch_covariance(m)
        np.testing.assert_allclose(got, covariance_oracle(m), rtol=1e-12, atol=1e-14)

    def test_two_row_closed_form(self):
        # cov of two rows x, y is outer(d, d)/2 with d = (x - y)/... the
        # centered rows are +-(x-y)/2, so cov = outer(x-y, x-y)/2
        x = np.array([1.0, 4.0, -2.0])
        y = np.array([3.0, 0.0, 5.0])
        d = x - y
        want = np.outer(d, d) / 2.0
        np.testing.assert_allclose(batch_covariance(np.stack([x, y])), want, rtol=1e-15)

    def test_bitwise_symmetric(self):
        rng = np.random.default_rng(6)
        c = batch_covariance(rng.standard_normal((12, 7)))
        assert np.array_equal(c, c.T)

    def test_single_row_rejected(self):
        with pytest.raises(ShapeMismatchError):
            batch_covariance(np.ones((1, 4)))


def random_spd(rng, n, scale=1.0):
    g = rng.standard_normal((n + 3, n)) * scale
    return batch_covariance(g)


class TestTopKComponents:
    def test_matches_jacobi_eigensolver(self):
        rng = np.random.default_rng(7)
        cov = random_spd(rng, 6)
        comps = top_k_components(cov, 3)
        want_vals, want_vecs = jacobi_eigh(cov)
        got_vals = np.asarray(component_eigenvalues(cov, comps)).reshape(-1)
        np.testing.assert_allclose(got_vals, want_vals[:3], rtol=1e-6)
        for i in range(3):
            # eigenvectors match up to sign
            dot = abs(float(np.dot(comps[i], want_vecs[i])))
            assert dot == pytest.approx(1.0, abs=1e-6)

    def test_rows_unit_norm(self):
        rng = np.random.default_rng(8)
        comps = top_k_components(random_spd(rng, 5), 5)
        norms = np.sqrt((comps**2).sum(axis=1))
        np.testing.assert_allclose(norms, 1.0, atol=1e-8)

    def test_asymmetric_rejected(self):
        bad = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(NotSymmetricError):
            top_k_components(bad, 1)

    def test_k_out_of_range(self):
        with pytest.raises(ShapeMismatchError):
            top_k_components(np.eye(3), 4)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        cov = random_spd(rng, 8)
        assert np.array_equal(top_k_components(cov, 4), top_k_components(cov, 4))


class TestInverseSqrtSpd:
    def test_diagonal_closed_form(self):
        # (diag(4,1) + 0.01 I)^(-1/2) = diag(1/sqrt(4.01), 1/sqrt(1.01))
        z = inverse_sqrt_spd(np.diag([4.0, 1.0]), 0.01)
        want = np.diag([1.0 / math.sqrt(4.01), 1.0 / math.sqrt(1.01)])
        np.testing.assert_allclose(z, want, atol=1e-6)
        assert z[0, 0] == pytest.approx(0.4994, abs=5e-5)
        assert z[1, 1] == pytest.approx(0.9950, abs=5e-5)

    def test_residual_small_on_random_spd(self):
        rng = np.random.default_rng(10)
        for n in (3, 6, 10):
            cov = random_spd(rng, n)
            z = inverse_sqrt_spd(cov, 1e-4)
            a = cov + 1e-4 * np.eye(n)
            residual = z @ a @ z - np.eye(n)
            assert float(np.abs(residual).max()) < 1e-3

    def test_result_symmetric(self):
        rng = np.random.default_rng(11)
        z = inverse_sqrt_spd(random_spd(rng, 5), 1e-3)
        assert np.array_equal(z, z.T)

    def test_divergence_reports_conditioning(self):
        # indefinite input breaks the iteration's convergence condition
        bad = np.diag([1.0, -5.0])
        with pytest.raises(ConvergenceError, match="condition estimate"):
            inverse_sqrt_spd(bad, 1e-6)

    def test_bad_shrinkage(self):
        with pytest.raises(ValueError, match="shrinkage"):
            inverse_sqrt_spd(np.eye(2), 0.0)


class TestFiniteDifference:
    def test_quadratic_gradient(self):
        a = np.array([[2.0, -1.0], [3.0, 0.5]])

        def f(x):
            return float((a * x * x).sum())

        at = np.array([[0.3, -0.7], [1.2, 0.4]])
        got = finite_difference_gradient(f, at, 1e-6)
        np.testing.assert_allclose(got, 2 * a * at, rtol=1e-6, atol=1e-8)

    def test_eps_validation(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda x: 0.0, np.ones((1, 1)), 0.0)


class TestStableScalars:
    def test_softplus_matches_scalar_oracle(self):
        for x in np.linspace(-30, 30, 121):
            assert softplus(np.array([[x]]))[0, 0] == pytest.approx(
                softplus_scalar(x), rel=1e-14
            )

    def test_softplus_extremes_finite(self):
        out = softplus(np.array([[-1e6, 0.0, 1e6]]))
        assert np.isfinite(out).all()
        assert out[0, 0] == 0.0
        assert out[0, 1] == pytest.approx(math.log(2.0), rel=1e-15)
        assert out[0, 2] == pytest.approx(1e6)

    def test_sigmoid_matches_scalar_oracle(self):
        for x in np.linspace(-40, 40, 161):
            assert sigmoid(np.array([[x]]))[0, 0] == pytest.approx(
                sigmoid_scalar(x), rel=1e-14
            )

    def test_sigmoid_symmetry(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(-50, 50, size=(4, 100))
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)


class TestRng:
    def test_same_seed_same_stream(self):
        assert np.array_equal(Rng(7).standard_normal((4, 4)),
                              Rng(7).standard_normal((4, 4)))

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(7).standard_normal((4, 4)),
                                  Rng(8).standard_normal((4, 4)))

    def test_children_independent_of_sibling_consumption(self):
        r1 = Rng(3)
        a_then = r1.child("a").standard_normal(8)
        r2 = Rng(3)
        r2.child("b").standard_normal(100)  # consuming a sibling stream
        a_after = r2.child("a").standard_normal(8)
        assert np.array_equal(a_then, a_after)

    def test_child_names_distinct(self):
        r = Rng(3)
        assert not np.array_equal(r.child("x").standard_normal(8),
                                  r.child("y").standard_normal(8))

    def test_state_roundtrip_mid_stream(self):
        r = Rng(9)
        r.standard_normal(13)  # advance into the buffer
        saved = r.get_state()
        want = r.standard_normal(7)
        fresh = Rng(0)
        fresh.set_state(saved)
        assert np.array_equal(fresh.standard_normal(7), want)

    def test_integers_bounds(self):
        draws = Rng(4).integers(2, 9, size=1000)
        assert draws.min() >= 2 and draws.max() <= 8

    def test_permutation_is_permutation(self):
        p = Rng(5).permutation(50)
        assert sorted(p.tolist()) == list(range(50))
