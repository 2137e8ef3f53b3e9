"""Network construction, forward propagation, and feasible sets."""

import numpy as np
import pytest

from bsumnet import (Dataset, FrobeniusBall, Identity, Logistic, Network,
                     NetworkSpec, Regularizer, ShapeError, SpecError, Tanh,
                     Toeplitz, Unconstrained, build_network, forward,
                     network_output)
from conftest import scalar_output


def spec_of(dims, act, feasible=None):
    return NetworkSpec.homogeneous(dims, act, feasible=feasible)


class TestBuildNetwork:
    def test_zeros_scheme(self):
        net = build_network(spec_of([2, 2], Identity()), "zeros", seed=0)
        assert np.array_equal(net.weights[0], np.zeros((2, 2)))

    def test_toeplitz_membership_after_init(self):
        spec = spec_of([4, 4], Logistic(), feasible=Toeplitz())
        net = build_network(spec, "gaussian", seed=7)
        assert Toeplitz().contains(net.weights[0], tol=1e-12)

    def test_frobenius_ball_membership_after_init(self):
        spec = spec_of([5, 4], Logistic(), feasible=FrobeniusBall(0.5))
        net = build_network(spec, "gaussian", seed=3, scale=10.0)
        assert np.linalg.norm(net.weights[0]) <= 0.5 + 1e-12

    def test_deterministic_bitwise(self):
        spec = spec_of([3, 5, 2], Logistic())
        a = build_network(spec, "uniform", seed=11)
        b = build_network(spec, "uniform", seed=11)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_seed_changes_weights(self):
        spec = spec_of([3, 2], Logistic())
        a = build_network(spec, "uniform", seed=1)
        b = build_network(spec, "uniform", seed=2)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_unknown_scheme_rejected(self):
        with pytest.raises(SpecError):
            build_network(spec_of([2, 2], Identity()), "xavier", seed=0)

    def test_default_scale_is_inv_sqrt_fanin(self):
        spec = spec_of([100, 3], Identity())
        net = build_network(spec, "uniform", seed=0)
        assert np.max(np.abs(net.weights[0])) <= 0.1


class TestSpecValidation:
    def test_mismatched_lengths(self):
        with pytest.raises(SpecError):
            NetworkSpec((2, 3), (Identity(), Identity()), (Unconstrained(),),
                        (Regularizer.none(),))

    def test_bad_dims(self):
        with pytest.raises(SpecError):
            NetworkSpec.homogeneous([2, 0], Identity())
        with pytest.raises(SpecError):
            NetworkSpec.homogeneous([2], Identity())

    def test_weight_shape_checked(self):
        spec = spec_of([2, 3], Identity())
        with pytest.raises(ShapeError):
            Network(spec, [np.zeros((2, 3))])

    def test_frobenius_ball_needs_positive_radius(self):
        with pytest.raises(SpecError):
            FrobeniusBall(0.0)


class TestDataset:
    def test_column_count_must_agree(self):
        with pytest.raises(ShapeError):
            Dataset(np.zeros((2, 3)), np.zeros((1, 4)))

    def test_restrict_copies(self):
        d = Dataset(np.arange(6.0).reshape(2, 3), np.arange(3.0).reshape(1, 3))
        sub = d.restrict(np.array([2, 0]))
        assert np.array_equal(sub.X, d.X[:, [2, 0]])
        assert sub.X.flags["C_CONTIGUOUS"]


class TestForward:
    def test_identity_composition(self):
        spec = spec_of([3, 3, 3], Identity())
        net = Network(spec, [np.eye(3), np.eye(3)])
        X = np.random.default_rng(0).standard_normal((3, 7))
        outs = forward(net, X)
        assert np.array_equal(outs.output, X)

    def test_zero_weight_logistic_gives_half(self):
        net = build_network(spec_of([4, 2], Logistic()), "zeros", seed=0)
        out = network_output(net, np.random.default_rng(1).standard_normal((4, 5)))
        assert np.array_equal(out, np.full((2, 5), 0.5))

    def test_against_scalar_loop_oracle(self):
        spec = spec_of([4, 3, 5, 2], Logistic())
        net = build_network(spec, "uniform", seed=5)
        X = np.random.default_rng(2).standard_normal((4, 3))
        got = network_output(net, X)
        want = scalar_output(net, X)
        np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_network_output_matches_forward(self):
        spec = spec_of([2, 4, 1], Tanh())
        net = build_network(spec, "uniform", seed=9)
        X = np.random.default_rng(3).standard_normal((2, 6))
        assert np.array_equal(network_output(net, X),
                              forward(net, X).post_activations[-1])

    def test_shape_error_on_wrong_rows(self):
        net = build_network(spec_of([3, 2], Identity()), "uniform", seed=0)
        with pytest.raises(ShapeError):
            forward(net, np.zeros((4, 5)))

    def test_shape_propagation_randomized(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            depth = int(rng.integers(1, 5))
            dims = [int(rng.integers(1, 7)) for _ in range(depth + 1)]
            n = int(rng.integers(1, 9))
            net = build_network(spec_of(dims, Logistic()), "uniform",
                                seed=int(rng.integers(1000)))
            outs = forward(net, rng.standard_normal((dims[0], n)))
            for j in range(1, depth + 1):
                assert outs.pre_activations[j - 1].shape == (dims[j], n)
                assert outs.post_activations[j].shape == (dims[j], n)
            assert all(np.all(np.isfinite(z)) for z in outs.post_activations)

    def test_forward_is_pure_and_deterministic(self):
        spec = spec_of([3, 4, 2], Logistic())
        net = build_network(spec, "uniform", seed=4)
        X = np.random.default_rng(5).standard_normal((3, 8))
        a = forward(net, X)
        b = forward(net, X)
        assert np.array_equal(a.output, b.output)
        for u, v in zip(a.pre_activations, b.pre_activations):
            assert np.array_equal(u, v)

    @pytest.mark.parametrize("act", [Logistic(), Tanh()])
    def test_bounded_activations_stay_bounded(self, act):
        spec = spec_of([3, 6, 6, 2], act)
        net = build_network(spec, "gaussian", seed=8, scale=50.0)
        X = 100.0 * np.random.default_rng(6).standard_normal((3, 10))
        outs = forward(net, X)
        for z in outs.post_activations[1:]:
            assert np.all(np.abs(z) <= 1.0)


class TestFeasibleSets:
    def test_toeplitz_projection_example(self):
        got = Toeplitz().project(np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(got, np.array([[2.5, 2.0], [3.0, 2.5]]))

    def test_toeplitz_fixed_point(self):
        w = np.array([[1.0, 2.0, 3.0], [4.0, 1.0, 2.0], [5.0, 4.0, 1.0]])
        assert np.array_equal(Toeplitz().project(w), w)

    def test_ball_scaling_hits_radius(self):
        w = np.array([[2.0, 0.0], [0.0, 0.0]])
        got = FrobeniusBall(1.0).project(w)
        assert np.linalg.norm(got) == 1.0

    def test_ball_interior_untouched(self):
        w = np.array([[0.1, 0.2], [0.0, -0.1]])
        assert np.array_equal(FrobeniusBall(5.0).project(w), w)

    @pytest.mark.parametrize("feasible", [Unconstrained(), Toeplitz(),
                                          FrobeniusBall(0.7)])
    def test_projection_idempotent_bitwise(self, feasible):
        rng = np.random.default_rng(21)
        for _ in range(5):
            w = rng.standard_normal((4, 3))
            once = feasible.project(w)
            twice = feasible.project(once)
            assert np.array_equal(once, twice)
