"""Backprop recursion, block gradients, mini-batch arithmetic, FD oracles."""

import numpy as np
import pytest

from bsumnet import (BatchSampler, Dataset, ExponentialLoss, Identity, L2Loss,
                     Logistic, LogisticLoss, NetworkSpec, Network,
                     NonSmoothError, Regularizer, Softplus, SpecError,
                     build_network, forward)
from bsumnet.gradients import (BatchStream, block_gradient,
                               block_hessian, block_objective_fn,
                               delta_recursion, fd_gradient, objective_value,
                               stochastic_block_gradient)
from conftest import make_problem, scalar_block_gradient, scalar_deltas


def rel_err(analytic, numeric):
    return np.linalg.norm(analytic - numeric) / max(1.0, np.linalg.norm(numeric))


class TestDeltaRecursion:
    def test_identity_activation_passes_loss_gradient_through(self):
        net, data = make_problem([3, 2, 2], Identity(), L2Loss(), seed=0)
        outs = forward(net, data.X)
        deltas = delta_recursion(net, outs, L2Loss(), data.Y)
        grad_h = L2Loss().grad_H(outs.output, data.Y)
        assert np.array_equal(deltas[-1], grad_h)

    def test_single_layer_base_case(self):
        net, data = make_problem([4, 2], Logistic(), L2Loss(), seed=1)
        outs = forward(net, data.X)
        deltas = delta_recursion(net, outs, L2Loss(), data.Y)
        loss_grad = L2Loss().grad_H(outs.output, data.Y)
        sig = Logistic().derivative(outs.pre_activations[0])
        np.testing.assert_array_equal(deltas[0], loss_grad * sig)

    def test_three_layer_logistic_vs_scalar_oracle(self):
        net, data = make_problem([3, 4, 3, 2], Logistic(), L2Loss(), seed=2, n=5)
        outs = forward(net, data.X)
        deltas = delta_recursion(net, outs, L2Loss(), data.Y)
        oracle = scalar_deltas(net, data.X, data.Y, L2Loss())
        for got, want in zip(deltas, oracle):
            np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)


class TestBlockGradient:
    def test_zero_at_perfect_fit_without_regularizer(self):
        # single identity layer fitting Y = W X exactly
        rng = np.random.default_rng(3)
        w = rng.standard_normal((2, 3))
        X = rng.standard_normal((3, 8))
        spec = NetworkSpec.homogeneous([3, 2], Identity())
        net = Network(spec, [w.copy()])
        data = Dataset(X, w @ X)
        g = block_gradient(net, data, L2Loss(), 1)
        np.testing.assert_allclose(g, 0.0, atol=1e-14)

    def test_regularizer_term_survives_zero_residual(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal((2, 3))
        X = rng.standard_normal((3, 8))
        spec = NetworkSpec.homogeneous([3, 2], Identity(),
                                       regularizer=Regularizer.l2(0.25))
        net = Network(spec, [w.copy()])
        data = Dataset(X, w @ X)
        g = block_gradient(net, data, L2Loss(), 1)
        np.testing.assert_allclose(g, 2 * 0.25 * w, atol=1e-13)

    def test_matches_scalar_loop_oracle(self):
        net, data = make_problem([3, 4, 2], Logistic(), L2Loss(), lam=0.01,
                                 seed=5, n=4)
        for j in (1, 2):
            got = block_gradient(net, data, L2Loss(), j)
            want = scalar_block_gradient(net, data.X, data.Y, L2Loss(), j,
                                         reg=net.spec.regularizers[j - 1])
            np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_matches_fd_on_small_catalog(self):
        # the acceptance suite sweeps the full catalog at benchmark dims;
        # this keeps a quick cross-check in the unit tests
        for loss in (L2Loss(), ExponentialLoss(1.0), LogisticLoss()):
            net, data = make_problem([4, 3, 1], Softplus(), loss, lam=1e-3,
                                     seed=6, n=6)
            for j in (1, 2):
                analytic = block_gradient(net, data, loss, j)
                value_fn, _ = block_objective_fn(net, data, loss, j)
                numeric = fd_gradient(value_fn, net.weights[j - 1], h=1e-6)
                assert rel_err(analytic, numeric) <= 1e-6

    def test_l2_delta_linear_in_residual(self):
        net, data = make_problem([3, 2], Identity(), L2Loss(), seed=7)
        outs = forward(net, data.X)
        d1 = delta_recursion(net, outs, L2Loss(), data.Y)[-1]
        # targets 2Y - H double the residual H - Y, so the last delta doubles
        d2 = delta_recursion(net, outs, L2Loss(), 2 * data.Y - outs.output)[-1]
        np.testing.assert_allclose(d2, 2 * d1, atol=1e-12)

    def test_l1_combined_gradient_refused(self):
        net, data = make_problem([3, 2], Identity(), L2Loss(),
                                 reg=Regularizer.l1(0.1), seed=8)
        with pytest.raises(NonSmoothError):
            block_gradient(net, data, L2Loss(), 1)
        g = block_gradient(net, data, L2Loss(), 1, include_reg=False)
        assert g.shape == (2, 3)

    def test_layer_index_bounds(self):
        net, data = make_problem([3, 2], Identity(), L2Loss(), seed=9)
        with pytest.raises(SpecError):
            block_gradient(net, data, L2Loss(), 0)
        with pytest.raises(SpecError):
            block_gradient(net, data, L2Loss(), 2)


class TestStochasticGradient:
    def test_full_batch_is_bitwise_identical(self):
        net, data = make_problem([3, 4, 2], Logistic(), L2Loss(), lam=0.01,
                                 seed=10, n=9)
        for j in (1, 2):
            full = block_gradient(net, data, L2Loss(), j)
            batch = stochastic_block_gradient(net, data, L2Loss(), j,
                                              np.arange(data.n_samples))
            assert np.array_equal(full, batch)

    def test_single_sample_gradient(self):
        net, data = make_problem([3, 2, 1], Logistic(), L2Loss(), lam=0.05,
                                 seed=11, n=7)
        n = 3
        got = stochastic_block_gradient(net, data, L2Loss(), 1, [n])
        single = data.restrict([n])
        want = scalar_block_gradient(net, single.X, single.Y, L2Loss(), 1,
                                     reg=net.spec.regularizers[0])
        np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("batch_size", [4, 5])
    def test_partition_identity(self, batch_size):
        # size-weighted average of disjoint-batch gradients == full gradient
        net, data = make_problem([3, 3, 2], Logistic(), L2Loss(), lam=0.02,
                                 seed=12, n=12)
        n = data.n_samples
        for j in (1, 2):
            full = block_gradient(net, data, L2Loss(), j)
            acc = np.zeros_like(full)
            for start in range(0, n, batch_size):
                idx = np.arange(start, min(start + batch_size, n))
                g = stochastic_block_gradient(net, data, L2Loss(), j, idx)
                acc += (len(idx) / n) * g
            np.testing.assert_allclose(acc, full, atol=1e-12, rtol=0)

    def test_empty_batch_rejected(self):
        net, data = make_problem([3, 2], Identity(), L2Loss(), seed=13)
        with pytest.raises(SpecError):
            stochastic_block_gradient(net, data, L2Loss(), 1, [])


class TestFdGradient:
    def test_squared_frobenius(self):
        w = np.random.default_rng(14).standard_normal((3, 2))
        g = fd_gradient(lambda v: float(np.sum(v * v)), w, h=1e-6)
        np.testing.assert_allclose(g, 2 * w, atol=1e-9)

    def test_constant_function(self):
        w = np.ones((2, 2))
        g = fd_gradient(lambda v: 3.25, w, h=1e-6)
        np.testing.assert_array_equal(g, np.zeros((2, 2)))

    def test_linear_function_exact(self):
        rng = np.random.default_rng(15)
        a = rng.standard_normal((2, 3))
        w = rng.standard_normal((2, 3))
        g = fd_gradient(lambda v: float(np.sum(a * v)), w, h=1e-6)
        np.testing.assert_allclose(g, a, atol=1e-9)


class TestBlockHessian:
    def test_deep_linear_matches_kron_oracle(self):
        rng = np.random.default_rng(16)
        dims = [3, 2]
        lam = 0.1
        spec = NetworkSpec.homogeneous(dims, Identity(),
                                       regularizer=Regularizer.l2(lam))
        net = build_network(spec, "uniform", seed=16)
        X = rng.standard_normal((3, 10))
        Y = rng.standard_normal((2, 10))
        data = Dataset(X, Y)
        hess = block_hessian(net, data, L2Loss(), 1)
        oracle = np.kron(np.eye(2), (2.0 / 10) * (X @ X.T)) + 2 * lam * np.eye(6)
        np.testing.assert_allclose(hess, oracle, atol=1e-8)

    def test_pure_regularizer_hessian(self):
        # zero input data kills the data term entirely
        spec = NetworkSpec.homogeneous([2, 2], Identity(),
                                       regularizer=Regularizer.l2(0.3))
        net = build_network(spec, "uniform", seed=17)
        data = Dataset(np.zeros((2, 4)), np.zeros((2, 4)))
        hess = block_hessian(net, data, L2Loss(), 1)
        np.testing.assert_allclose(hess, 2 * 0.3 * np.eye(4), atol=1e-10)

    def test_symmetry_of_raw_differences(self):
        net, data = make_problem([3, 3, 1], Logistic(), L2Loss(), lam=0.01,
                                 seed=18, n=6)
        h = 1e-5
        w = net.weights[0]
        n = w.size
        raw = np.zeros((n, n))
        probe = net.copy()
        flat = probe.weights[0].reshape(-1)
        for a in range(n):
            orig = flat[a]
            flat[a] = orig + h
            gp = block_gradient(probe, data, L2Loss(), 1).reshape(-1)
            flat[a] = orig - h
            gm = block_gradient(probe, data, L2Loss(), 1).reshape(-1)
            flat[a] = orig
            raw[:, a] = (gp - gm) / (2 * h)
        assert np.max(np.abs(raw - raw.T)) <= 1e-5
        sym = block_hessian(net, data, L2Loss(), 1)
        assert np.array_equal(sym, sym.T)

    def test_deep_linear_hessian_constant_in_w(self):
        rng = np.random.default_rng(19)
        spec = NetworkSpec.homogeneous([3, 2, 2], Identity(),
                                       regularizer=Regularizer.l2(0.05))
        data = Dataset(rng.standard_normal((3, 8)), rng.standard_normal((2, 8)))
        a = build_network(spec, "uniform", seed=20)
        b = a.with_block(1, rng.standard_normal((2, 3)))
        ha = block_hessian(a, data, L2Loss(), 1)
        hb = block_hessian(b, data, L2Loss(), 1)
        np.testing.assert_allclose(ha, hb, atol=1e-5)

    def test_l1_layer_refused(self):
        net, data = make_problem([3, 2], Identity(), L2Loss(),
                                 reg=Regularizer.l1(0.1), seed=21)
        with pytest.raises(NonSmoothError):
            block_hessian(net, data, L2Loss(), 1)


class TestObjectiveHelpers:
    def test_objective_includes_all_regularizers(self):
        net, data = make_problem([3, 2, 1], Logistic(), L2Loss(), lam=0.1, seed=22)
        outs = forward(net, data.X)
        base = L2Loss().value(outs.output, data.Y)
        expected = base + sum(r.value(w) for r, w in
                              zip(net.spec.regularizers, net.weights))
        assert objective_value(net, data, L2Loss()) == pytest.approx(expected)

    def test_block_objective_consistent_with_gradient(self):
        net, data = make_problem([3, 3, 1], Softplus(), L2Loss(), lam=0.01, seed=23)
        value_fn, grad_fn = block_objective_fn(net, data, L2Loss(), 2)
        w = net.weights[1]
        assert value_fn(w) == pytest.approx(objective_value(net, data, L2Loss()))
        np.testing.assert_allclose(grad_fn(w),
                                   block_gradient(net, data, L2Loss(), 2),
                                   atol=1e-14)


class TestBatchStream:
    def test_full_mode_returns_all(self):
        stream = BatchStream(BatchSampler("full"), 7)
        assert np.array_equal(stream.next(1), np.arange(7))

    def test_fixed_batches_distinct_within_batch(self):
        stream = BatchStream(BatchSampler("fixed", batch_size=4, seed=0), 10)
        for k in range(1, 30):
            batch = stream.next(k)
            assert len(batch) == 4
            assert len(set(batch.tolist())) == 4

    def test_deterministic_given_seed(self):
        a = BatchStream(BatchSampler("fixed", batch_size=3, seed=5), 9)
        b = BatchStream(BatchSampler("fixed", batch_size=3, seed=5), 9)
        for k in range(1, 12):
            assert np.array_equal(a.next(k), b.next(k))

    def test_increasing_reaches_full_size(self):
        n = 6
        stream = BatchStream(BatchSampler("increasing", seed=1), n)
        sizes = [len(stream.next(k)) for k in range(1, 10)]
        assert sizes == [1, 2, 3, 4, 5, 6, 6, 6, 6]

    def test_oversized_fixed_batch_rejected(self):
        with pytest.raises(SpecError):
            BatchStream(BatchSampler("fixed", batch_size=11, seed=0), 10)


class TestBudgetsAndGuards:
    def test_hessian_size_budget(self):
        spec = NetworkSpec.homogeneous([101, 101], Identity(),
                                       regularizer=Regularizer.l2(0.1))
        net = build_network(spec, "zeros", seed=0)
        data = Dataset(np.zeros((101, 2)), np.zeros((101, 2)))
        from bsumnet import SizeError
        with pytest.raises(SizeError):
            block_hessian(net, data, L2Loss(), 1)

    def test_fd_gradient_needs_positive_step(self):
        with pytest.raises(SpecError):
            fd_gradient(lambda v: 0.0, np.zeros((1, 1)), h=0.0)
