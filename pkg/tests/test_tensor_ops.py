"""Forward/backward behavior of every tensor primitive."""

import numpy as np
import pytest

import tprnn.tensor as T
from tprnn.errors import ConfigError, DimensionError, GraphError
from tprnn.tensor import Tensor, backward, clear_tape, grad_check, no_grad


def t(data, grad=False):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        a = t(np.eye(2))
        b = t([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(T.matmul(a, b).data, b.data)

    def test_hand_computed(self):
        out = T.matmul(t([[1.0, 2.0]]), t([[3.0], [4.0]]))
        assert np.array_equal(out.data, [[11.0]])

    def test_grad_of_sum_wrt_a(self):
        a = t(np.eye(2), grad=True)
        b = t([[2.0, 3.0], [4.0, 5.0]])
        loss = T.sum_all(T.matmul(a, b))
        backward(loss)
        assert np.allclose(a.grad, [[5.0, 9.0], [5.0, 9.0]])
        # and the finite-difference oracle agrees
        err = grad_check(lambda x: T.matmul(x, b), [t(np.eye(2))], eps=1e-5)
        assert err < 1e-7

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(t(np.ones((2, 3))), t(np.ones((2, 2))))


class TestEwise:
    def test_add_identity(self):
        out = T.ewise("add", t([1.0, 2.0]), t([0.0, 0.0]))
        assert np.array_equal(out.data, [1.0, 2.0])

    def test_mul_hand_computed(self):
        out = T.ewise("mul", t([1.0, 2.0, 3.0]), t([2.0, 2.0, 2.0]))
        assert np.array_equal(out.data, [2.0, 4.0, 6.0])

    def test_mul_by_zero_annihilates_value_and_grad(self):
        x = t([1.0, -2.0, 3.0], grad=True)
        out = T.mul(x, t([0.0, 0.0, 0.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 0.0])
        backward(T.sum_all(out))
        assert np.array_equal(x.grad, [0.0, 0.0, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.add(t([1.0]), t([1.0, 2.0]))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            T.ewise("div", t([1.0]), t([1.0]))


class TestActivation:
    def test_sigmoid_at_zero(self):
        assert T.sigmoid(t([0.0])).data[0] == 0.5

    def test_tanh_at_zero(self):
        assert T.tanh(t([0.0])).data[0] == 0.0

    def test_sigmoid_saturation_is_finite(self):
        v = T.sigmoid(t([-50.0])).data[0]
        assert 0.0 <= v < 1e-20
        assert np.isfinite(v)
        # even absurd magnitudes never overflow
        big = T.sigmoid(t([-1e4, 1e4])).data
        assert np.all(np.isfinite(big))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            T.activation("relu", t([1.0]))


class TestAffine:
    def test_time_axis_identity(self):
        x = t(np.arange(6.0).reshape(3, 2))
        out = T.affine(x, t(np.eye(3)), axis="time")
        assert np.array_equal(out.data, x.data)

    def test_feature_axis_hand_computed(self):
        x = t(np.ones((2, 2)))
        w = t([[1.0, 0.0], [0.0, 2.0]])
        b = t([1.0, 1.0])
        out = T.affine(x, w, b, axis="feature")
        assert np.array_equal(out.data, [[2.0, 3.0], [2.0, 3.0]])

    def test_weight_grad_matches_finite_differences(self, rng):
        x = Tensor(rng.standard_normal((4, 3)))
        w = Tensor(rng.standard_normal((3, 2)))
        err = grad_check(lambda ww: T.affine(x, ww, axis="feature"), [w], eps=1e-5)
        assert err < 1e-6

    def test_time_axis_bias_is_per_position(self):
        x = t(np.zeros((3, 2)))
        w = t(np.zeros((3, 4)))
        b = t([1.0, 2.0, 3.0, 4.0])
        out = T.affine(x, w, b, axis="time")
        assert np.array_equal(out.data, np.array([[1, 1], [2, 2], [3, 3], [4, 4.0]]))

    def test_axis_extent_mismatch(self):
        with pytest.raises(DimensionError):
            T.affine(t(np.ones((3, 2))), t(np.ones((3, 4))), axis="feature")
        with pytest.raises(DimensionError):
            T.affine(t(np.ones((3, 2))), t(np.ones((2, 4))), axis="time")


class TestConv1d:
    def test_hand_computed(self):
        x = t([[1.0], [2.0], [3.0], [4.0]])
        k = t([[1.0], [1.0]])
        out = T.conv1d(x, k, stride=2)
        assert np.array_equal(out.data, [[3.0], [7.0]])

    def test_selector_kernel_shifts(self, rng):
        x = Tensor(rng.standard_normal((6, 3)))
        k = t(np.vstack([np.ones(3), np.zeros(3)]))
        out = T.conv1d(x, k, stride=1)
        assert np.array_equal(out.data, x.data[:5])

    def test_constant_preserved_by_sum_one_kernel(self):
        x = t(np.full((8, 2), 3.5))
        k = t(np.full((2, 2), 0.5))
        out = T.conv1d(x, k, stride=2)
        assert np.allclose(out.data, 3.5)

    def test_too_short_input(self):
        with pytest.raises(DimensionError):
            T.conv1d(t(np.ones((1, 2))), t(np.ones((2, 2))), stride=1)


class TestPool1d:
    def test_max_hand_computed(self):
        out = T.pool1d("max", t([[1.0], [3.0], [2.0], [5.0]]), k=2, stride=2)
        assert np.array_equal(out.data, [[3.0], [5.0]])

    def test_avg_preserves_constants(self):
        out = T.pool1d("avg", t(np.full((6, 2), 2.5)), k=2, stride=2)
        assert np.allclose(out.data, 2.5)

    def test_min_tie_routes_gradient_to_first_index(self):
        x = t([[4.0], [4.0]], grad=True)
        out = T.pool1d("min", x, k=2, stride=2)
        assert np.array_equal(out.data, [[4.0]])
        backward(T.sum_all(out))
        assert np.array_equal(x.grad, [[1.0], [0.0]])

    def test_max_tie_routes_gradient_to_first_index(self):
        x = t([[7.0], [7.0], [7.0]], grad=True)
        out = T.pool1d("max", x, k=3, stride=1)
        backward(T.sum_all(out))
        assert np.array_equal(x.grad, [[1.0], [0.0], [0.0]])

    def test_too_short_input(self):
        with pytest.raises(DimensionError):
            T.pool1d("max", t(np.ones((1, 1))), k=2, stride=1)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            T.pool1d("median", t(np.ones((4, 1))), k=2, stride=2)


class TestStackSlice:
    def test_single_tensor_gains_axis(self, rng):
        x = Tensor(rng.standard_normal((3, 2)))
        out = T.stack([x], axis=0)
        assert out.shape == (1, 3, 2)
        assert np.array_equal(out.data[0], x.data)

    def test_stack_slice_round_trip_is_exact(self, rng):
        a = Tensor(rng.standard_normal((4, 3)))
        b = Tensor(rng.standard_normal((4, 3)))
        back = T.slice_axis(T.stack([a, b], axis=0), 0, 0)
        assert np.array_equal(back.data, a.data)

    def test_interior_axis_shape(self, rng):
        parts = [Tensor(rng.standard_normal((48, 7))) for _ in range(4)]
        assert T.stack(parts, axis=1).shape == (48, 4, 7)

    def test_empty_list_rejected(self):
        with pytest.raises(DimensionError):
            T.stack([])

    def test_heterogeneous_shapes_rejected(self):
        with pytest.raises(DimensionError):
            T.stack([t(np.ones((2, 2))), t(np.ones((2, 3)))])

    def test_stack_backward_splits(self):
        a = t([1.0, 2.0], grad=True)
        b = t([3.0, 4.0], grad=True)
        out = T.mul(T.stack([a, b], axis=0), t([[1.0, 2.0], [3.0, 4.0]]))
        backward(T.sum_all(out))
        assert np.array_equal(a.grad, [1.0, 2.0])
        assert np.array_equal(b.grad, [3.0, 4.0])


class TestDropout:
    def test_p_zero_is_identity_in_both_modes(self, rng):
        x = Tensor(rng.standard_normal((5, 4)))
        assert T.dropout(x, 0.0, training=True, rng=rng) is x
        assert T.dropout(x, 0.0, training=False) is x

    def test_eval_mode_is_identity(self, rng):
        x = Tensor(rng.standard_normal((5, 4)))
        assert T.dropout(x, 0.5, training=False) is x

    def test_empirical_zero_fraction(self):
        gen = np.random.default_rng(7)
        x = Tensor(np.ones((1000, 100)))
        out = T.dropout(x, 0.5, training=True, rng=gen)
        zero_fraction = float((out.data == 0.0).mean())
        assert abs(zero_fraction - 0.5) < 0.01
        survivors = out.data[out.data != 0.0]
        assert np.allclose(survivors, 2.0)

    def test_mask_reused_in_backward(self):
        gen = np.random.default_rng(3)
        x = Tensor(np.ones(1000), requires_grad=True)
        out = T.dropout(x, 0.3, training=True, rng=gen)
        backward(T.sum_all(out))
        assert np.array_equal(x.grad, np.where(out.data != 0.0, 1.0 / 0.7, 0.0))

    def test_invalid_probability(self):
        x = t([1.0])
        for p in (-0.1, 1.0, 1.5):
            with pytest.raises(ConfigError):
                T.dropout(x, p, training=True, rng=np.random.default_rng(0))


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = Tensor(rng.standard_normal((3, 4, 2)), requires_grad=True)
        backward(T.sum_all(x))
        assert np.array_equal(x.grad, np.ones((3, 4, 2)))

    def test_sigmoid_grad_at_zero_is_quarter(self):
        x = t(np.zeros(5), grad=True)
        backward(T.sum_all(T.sigmoid(x)))
        assert np.allclose(x.grad, 0.25)

    def test_non_scalar_loss_rejected(self):
        x = t([1.0, 2.0], grad=True)
        with pytest.raises(GraphError):
            backward(T.scale(x, 2.0))

    def test_double_backward_without_reset_errors(self):
        x = t([1.0, 2.0], grad=True)
        loss = T.sum_all(x)
        backward(loss)
        with pytest.raises(GraphError):
            backward(loss)
        clear_tape()
        loss2 = T.sum_all(x)
        backward(loss2)  # re-armed after clear_tape

    def test_unreached_params_get_zero_grad(self):
        x = t([1.0, 2.0], grad=True)
        unused = t([5.0], grad=True)
        backward(T.sum_all(x), params=[x, unused])
        assert np.array_equal(unused.grad, [0.0])

    def test_disconnected_loss_rejected(self):
        with no_grad():
            loss = T.sum_all(t([1.0], grad=True))
        with pytest.raises(GraphError):
            backward(loss)

    def test_grads_accumulate_across_reuse(self):
        x = t([2.0], grad=True)
        backward(T.sum_all(T.mul(x, x)))
        assert np.allclose(x.grad, 4.0)  # d(x^2)/dx = 2x


class TestSmallOps:
    def test_scale_and_neg(self):
        x = t([1.0, -2.0], grad=True)
        out = -x
        assert np.array_equal(out.data, [-1.0, 2.0])
        backward(T.sum_all(out))
        assert np.array_equal(x.grad, [-1.0, -1.0])

    def test_abs_subgradient_zero_at_ties(self):
        x = t([-2.0, 0.0, 3.0], grad=True)
        backward(T.sum_all(T.abs_(x)))
        assert np.array_equal(x.grad, [-1.0, 0.0, 1.0])

    def test_repeat_sums_gradient(self):
        x = t([1.0, 2.0], grad=True)
        out = T.repeat(x, 3, axis=0)
        assert out.shape == (3, 2)
        backward(T.sum_all(out))
        assert np.array_equal(x.grad, [3.0, 3.0])

    def test_pad_tail_replicates_and_accumulates(self):
        x = t([[1.0], [2.0]], grad=True)
        out = T.pad_tail(x, 2)
        assert np.array_equal(out.data, [[1.0], [2.0], [2.0], [2.0]])
        backward(T.sum_all(out))
        assert np.array_equal(x.grad, [[1.0], [3.0]])

    def test_reshape_round_trip(self, rng):
        x = Tensor(rng.standard_normal((2, 6)), requires_grad=True)
        out = T.reshape(x, (3, 4))
        backward(T.sum_all(out))
        assert x.grad.shape == (2, 6)

    def test_axis_combine_weighted_sum(self):
        stacked = t(np.stack([np.full((2, 2), 1.0), np.full((2, 2), 2.0)]))
        w = t([0.25, 0.75])
        out = T.axis_combine(stacked, w)
        assert np.allclose(out.data, 1.75)

    def test_axis_combine_bias_and_grads(self, rng):
        stacked = Tensor(rng.standard_normal((3, 4, 2)))
        w = Tensor(rng.standard_normal(3))
        b = Tensor(np.asarray(0.5))
        err = grad_check(lambda s, ww, bb: T.axis_combine(s, ww, bb),
                         [stacked, w, b], eps=1e-5)
        assert err < 1e-7


class TestIdentitiesAndFiniteness:
    def test_affine_with_identity_is_exact(self, rng):
        x = Tensor(rng.standard_normal((5, 3)))
        out = T.affine(x, Tensor(np.eye(3)), axis="feature")
        assert np.array_equal(out.data, x.data)

    def test_composition_on_finite_inputs_stays_finite(self, rng):
        x = Tensor(rng.standard_normal((6, 4)) * 100.0)
        w = Tensor(rng.standard_normal((4, 4)) * 100.0)
        out = T.sigmoid(T.tanh(T.affine(T.mul(x, x), w, axis="feature")))
        assert np.all(np.isfinite(out.data))

    def test_eval_forward_records_nothing(self, rng):
        x = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        with no_grad():
            T.sigmoid(T.scale(x, 3.0))
        assert T.tape_size() == 0

    def test_debug_mode_rejects_non_finite_results(self, monkeypatch):
        monkeypatch.setattr(T, "_CHECK_FINITE", True)
        with pytest.raises(FloatingPointError):
            T.add(t([np.inf]), t([1.0]))
        T.add(t([1.0]), t([1.0]))  # finite results still pass
