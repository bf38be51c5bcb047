import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from kdematrix import (
    ConvergenceError,
    EvalCounter,
    Kernel,
    KernelSpec,
    PointSet,
    exact_mvm,
    exact_row_sums,
    exact_sum,
    exact_top_eig,
    kernel_eval,
)
from kdematrix.kernels import as_points, power_until_converged

from conftest import ALL_SPECS, brute_matrix, kernel_value


class TestKernelSpec:
    def test_defaults(self):
        spec = KernelSpec()
        assert (spec.family, spec.bandwidth, spec.beta) == ("gaussian", 1.0, 1.0)

    @pytest.mark.parametrize("kwargs", [
        {"family": "cosine"},
        {"bandwidth": 0.0},
        {"bandwidth": -1.0},
        {"bandwidth": float("inf")},
        {"beta": 0.0},
        {"family": "rational_quadratic", "beta": float("nan")},
    ])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            KernelSpec(**kwargs)


class TestKernelValues:
    # frozen reference values computed by hand from the closed forms
    @pytest.mark.parametrize("spec, x, y, expected", [
        (KernelSpec("gaussian"), [0.0], [1.0], math.exp(-1.0)),
        (KernelSpec("gaussian", 2.0), [0.0, 0.0], [1.0, 1.0], math.exp(-0.5)),
        (KernelSpec("exponential"), [0.0, 0.0], [3.0, 4.0], math.exp(-5.0)),
        (KernelSpec("laplacian", 0.5), [0.0, 0.0], [3.0, -4.0], math.exp(-14.0)),
        (KernelSpec("rational_quadratic", 1.0, 2.0), [0.0], [1.0], 0.25),
    ])
    def test_closed_forms(self, spec, x, y, expected):
        assert Kernel(spec)(x, y) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family)
    def test_pairwise_matches_scalar_reference(self, spec, rng):
        X = rng.normal(size=(7, 3))
        Y = rng.normal(size=(5, 3))
        got = Kernel(spec).pairwise(X, Y)
        want = np.array([[kernel_value(spec, x, y) for y in Y] for x in X])
        assert_allclose(got, want, rtol=1e-12)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family)
    def test_nice_kernel(self, spec, rng):
        X = rng.normal(size=(30, 2))
        K = brute_matrix(spec, X)
        assert_allclose(np.diag(K), 1.0)
        assert K.min() >= 0 and K.max() <= 1
        assert np.linalg.eigvalsh(K).min() > -1e-10

    def test_paired_supports_leading_dims(self, rng):
        k = Kernel(KernelSpec("laplacian"))
        A, B = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 4))
        vals = k.paired(A, B)
        assert vals.shape == (2, 3)
        assert_allclose(vals[1, 2], kernel_value(k.spec, A[1, 2], B[1, 2]))
        assert k.evals == 6

    def test_dimension_mismatch(self):
        k = Kernel()
        with pytest.raises(ValueError):
            k([0.0, 1.0], [0.0])
        with pytest.raises(ValueError):
            k.pairwise(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            k.paired(np.zeros((2, 2)), np.zeros((3, 2)))

    def test_non_finite_input(self):
        with pytest.raises(ValueError):
            Kernel()([np.nan], [0.0])

    def test_kernel_eval_charges_given_counter(self):
        c = EvalCounter()
        assert kernel_eval(KernelSpec(), [1.0], [1.0], c) == 1.0
        assert c.count == 1


class TestCounting:
    def test_pairwise_and_batched_charges(self, rng):
        k = Kernel()
        k.pairwise(rng.normal(size=(4, 2)), rng.normal(size=(6, 2)))
        assert k.evals == 24
        A, B = rng.normal(size=(3, 4, 2)), rng.normal(size=(3, 4, 2))
        va = np.ones((3, 4), bool)
        vb = np.ones((3, 4), bool)
        vb[2, 1:] = False
        out = k.batched(A, B, va, vb)
        assert k.evals == 24 + 3 * 16 - 4 * 3
        assert np.all(out[2, :, 1:] == 0)
        assert_allclose(out[0], Kernel().pairwise(A[0], B[0]))

    def test_counter_merge_reset(self):
        a, b = EvalCounter(), EvalCounter()
        a.add(3)
        b.add(4)
        a.merge(b)
        assert a.count == 7
        a.reset()
        assert a.count == 0
        with pytest.raises(ValueError):
            a.add(-1)

    def test_counter_is_thread_safe(self):
        c = EvalCounter()

        def work():
            for _ in range(2000):
                c.add(1)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert c.count == 16000

    def test_fresh_has_new_counter(self):
        k = Kernel()
        k([0.0], [0.0])
        f = k.fresh()
        assert f.evals == 0 and f.spec == k.spec


class TestPoints:
    def test_vector_becomes_column(self):
        assert as_points([1.0, 2.0, 3.0]).shape == (3, 1)
        assert PointSet([[1.0, 2.0]]).d == 2

    @pytest.mark.parametrize("bad", [np.zeros((0, 2)), [[np.inf]], np.zeros((2, 2, 2))])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            as_points(bad)


class TestExactOracles:
    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family)
    def test_sum_row_sums_and_mvm(self, spec, rng):
        X = rng.normal(size=(23, 2))
        K = brute_matrix(spec, X)
        k = Kernel(spec)
        assert exact_sum(X, k) == pytest.approx(K.sum(), rel=1e-12)
        assert k.evals == 23 * 22 // 2 + 23
        assert_allclose(exact_row_sums(X, spec), K.sum(axis=1) - 1.0, rtol=1e-12)
        x = rng.random(23)
        k = Kernel(spec)
        assert_allclose(exact_mvm(X, k, x), K @ x, rtol=1e-12)
        assert k.evals == 23 * 23

    def test_row_subset(self, rng):
        X = rng.normal(size=(10, 2))
        K = brute_matrix(KernelSpec(), X)
        k = Kernel()
        got = exact_row_sums(X, k, rows=np.array([2, 7]))
        assert_allclose(got, K[[2, 7]].sum(axis=1) - 1.0)
        assert k.evals == 2 * 9

    def test_identical_and_far_points(self):
        assert exact_sum(np.zeros((9, 2)), KernelSpec()) == pytest.approx(81.0)
        far = np.arange(9.0)[:, None] * 100.0
        assert exact_sum(far, KernelSpec()) == pytest.approx(9.0)

    def test_sum_is_chunk_independent(self, rng, monkeypatch):
        import kdematrix.kernels as km

        X = rng.normal(size=(50, 2))
        whole = exact_sum(X, KernelSpec())
        monkeypatch.setattr(km, "_row_chunk", lambda n, budget=0: 7)
        assert exact_sum(X, KernelSpec()) == pytest.approx(whole, rel=1e-13)

    def test_mvm_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            exact_mvm(np.zeros((3, 1)), KernelSpec(), np.ones(4))

    def test_top_eig_against_eigh(self, rng):
        X = rng.normal(size=(40, 3))
        K = brute_matrix(KernelSpec("gaussian", 1.5), X)
        lam, v = exact_top_eig(X, KernelSpec("gaussian", 1.5), tol=1e-13)
        w, V = np.linalg.eigh(K)
        assert lam == pytest.approx(w[-1], rel=1e-8)
        assert np.all(v >= 0)
        assert abs(v @ V[:, -1]) == pytest.approx(1.0, abs=1e-4)

    def test_top_eig_identical(self):
        lam, v = exact_top_eig(np.ones((6, 2)), KernelSpec())
        assert lam == pytest.approx(6.0)
        assert_allclose(v, np.full(6, 1 / math.sqrt(6)))

    def test_convergence_error_keeps_iterate(self):
        # a rotation has Rayleigh quotient 0 forever, so the relative test never passes
        with pytest.raises(ConvergenceError) as info:
            power_until_converged(lambda z: np.array([-z[1], z[0]]), 2, max_iter=5)
        assert info.value.value == pytest.approx(0.0, abs=1e-15)
        assert info.value.vector.shape == (2,)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 3)),
              elements=st.floats(-5, 5, allow_nan=False)),
       st.sampled_from(ALL_SPECS))
def test_exact_sum_bounds(X, spec):
    # s(K) = n + off-diagonal part, and 0 <= off-diagonal <= n(n-1)
    n = X.shape[0]
    s = exact_sum(X, spec)
    assert n - 1e-9 <= s <= n * n + 1e-9
    assert s == pytest.approx(brute_matrix(spec, X).sum(), rel=1e-10)
