"""Finite-difference verification of every backward rule.

Each differentiable operation is checked on 20 random small instances
(extents <= 6, values in [-2, 2], dropout off, pooling inputs de-tied), with
max relative error below 1e-4. The oracle itself is sanity-checked first.
"""

import numpy as np
import pytest

import tprnn.tensor as T
from tprnn.interaction import (
    init_inter,
    init_intra,
    inter_scale_forward,
    intra_scale_forward,
    rnn_forward,
    run_interaction,
)
from tprnn.pyramid import PyramidConfig, init_scale_block, scale_block_forward
from tprnn.tensor import Tensor, grad_check

TOL = 1e-4
N_INSTANCES = 20


def _rand(rng, *shape):
    return Tensor(rng.uniform(-2.0, 2.0, shape))


def _detied(rng, rows, cols):
    """Values with pairwise gaps, so pooling never sits on a tie."""
    vals = rng.permutation(rows * cols) * 0.37 + rng.uniform(-0.1, 0.1)
    return Tensor(vals.reshape(rows, cols))


class TestOracleItself:
    def test_identity_has_zero_error(self, rng):
        # identity is linear, so a large step has no truncation error and
        # keeps the cancellation noise of the difference quotient tiny
        x = _rand(rng, 3, 3)
        assert grad_check(lambda v: v, [x], eps=1e-2) < 1e-12

    def test_matmul_chain_depth_three(self, rng):
        ms = [_rand(rng, 3, 3) for _ in range(3)]
        err = grad_check(lambda a, b, c: T.matmul(T.matmul(a, b), c), ms)
        assert err < 1e-7

    def test_max_pool_away_from_ties(self, rng):
        x = _detied(rng, 6, 2)
        err = grad_check(lambda v: T.pool1d("max", v, 2, 2), [x])
        assert err < 1e-7

    def test_sum_projection_mode(self, rng):
        x = _rand(rng, 4)
        assert grad_check(lambda v: T.scale(v, 3.0), [x], projection="sum") < 1e-9


def _sweep(make_case):
    """Run grad_check over N_INSTANCES random instances; return worst error."""
    worst = 0.0
    for i in range(N_INSTANCES):
        rng = np.random.default_rng(1000 + i)
        f, inputs = make_case(rng)
        worst = max(worst, grad_check(f, inputs, seed=i))
    return worst


class TestEveryOperation:
    def test_matmul(self):
        def case(rng):
            m, k, n = rng.integers(1, 7, 3)
            return T.matmul, [_rand(rng, m, k), _rand(rng, k, n)]
        assert _sweep(case) < TOL

    @pytest.mark.parametrize("op", ["add", "sub", "mul"])
    def test_ewise(self, op):
        def case(rng):
            shape = tuple(rng.integers(1, 7, 2))
            return (lambda a, b: T.ewise(op, a, b)), [_rand(rng, *shape), _rand(rng, *shape)]
        assert _sweep(case) < TOL

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh"])
    def test_activation(self, kind):
        def case(rng):
            shape = tuple(rng.integers(1, 7, 2))
            return (lambda x: T.activation(kind, x)), [_rand(rng, *shape)]
        assert _sweep(case) < TOL

    @pytest.mark.parametrize("axis", ["feature", "time"])
    def test_affine_with_bias(self, axis):
        def case(rng):
            l, d, out = rng.integers(1, 7, 3)
            x = _rand(rng, l, d)
            w = _rand(rng, d if axis == "feature" else l, out)
            b = _rand(rng, out)
            return (lambda xx, ww, bb: T.affine(xx, ww, bb, axis=axis)), [x, w, b]
        assert _sweep(case) < TOL

    def test_conv1d(self):
        def case(rng):
            d = int(rng.integers(1, 4))
            k = int(rng.integers(1, 3))
            length = int(rng.integers(k, 7))
            stride = int(rng.integers(1, 3))
            return ((lambda x, kk: T.conv1d(x, kk, stride)),
                    [_rand(rng, length, d), _rand(rng, k, d)])
        assert _sweep(case) < TOL

    @pytest.mark.parametrize("mode", ["max", "min", "avg"])
    def test_pool1d(self, mode):
        def case(rng):
            d = int(rng.integers(1, 4))
            k = int(rng.integers(1, 4))
            length = int(rng.integers(k, 7))
            stride = int(rng.integers(1, 3))
            return (lambda x: T.pool1d(mode, x, k, stride)), [_detied(rng, length, d)]
        assert _sweep(case) < TOL

    def test_stack_and_slice(self):
        def case(rng):
            shape = tuple(rng.integers(1, 5, 2))
            parts = [_rand(rng, *shape) for _ in range(int(rng.integers(1, 4)))]
            return (lambda *ps: T.slice_axis(T.stack(list(ps), axis=1), 1, 0)), parts
        assert _sweep(case) < TOL

    def test_scale_repeat_pad_reshape(self):
        def case(rng):
            l, d = rng.integers(1, 6, 2)
            x = _rand(rng, l, d)

            def f(v):
                y = T.pad_tail(T.scale(v, -1.7), 2)
                y = T.repeat(y, 2, axis=0)
                return T.reshape(y, (2 * (l + 2) * d,))
            return f, [x]
        assert _sweep(case) < TOL

    def test_axis_combine(self):
        def case(rng):
            k, l, d = rng.integers(1, 6, 3)
            return (lambda s, w, b: T.axis_combine(s, w, b),
                    [_rand(rng, k, l, d), _rand(rng, k), Tensor(rng.uniform(-2, 2))])
        assert _sweep(case) < TOL

    def test_abs_away_from_zero(self):
        def case(rng):
            shape = tuple(rng.integers(1, 7, 2))
            sign = rng.choice([-1.0, 1.0], shape)
            vals = Tensor(sign * rng.uniform(0.5, 2.0, shape))
            return (lambda x: T.abs_(x)), [vals]
        assert _sweep(case) < TOL


class TestRecurrentBackward:
    @pytest.mark.parametrize("kind,gates", [("vanilla", 1), ("lstm", 4), ("gru", 3)])
    def test_rnn_all_inputs(self, kind, gates):
        def case(rng):
            d = int(rng.integers(1, 4))
            h = int(rng.integers(1, 4))
            length = int(rng.integers(1, 6))
            x = _rand(rng, length, d)
            wx = Tensor(rng.uniform(-0.7, 0.7, (d, gates * h)))
            wh = Tensor(rng.uniform(-0.7, 0.7, (h, gates * h)))
            b = Tensor(rng.uniform(-0.7, 0.7, gates * h))
            return (lambda *a: rnn_forward(kind, *a)), [x, wx, wh, b]
        assert _sweep(case) < TOL


class TestBlockBackward:
    def test_scale_block(self):
        def case(rng):
            cfg = PyramidConfig(feature_dim=2, num_scales=1)
            params = init_scale_block(cfg, rng)
            x = _rand(rng, 6, 2)

            def f(xx, ck, mw, mb):
                return scale_block_forward(xx, type(params)(ck, mw, mb), cfg)
            return f, [x, params.conv_kernels, params.mix_w, params.mix_b]
        assert _sweep(case) < TOL

    def test_intra_block(self, rng):
        params = init_intra("lstm", 2, 3, 4, 0.0, rng)
        x = _rand(rng, 5, 2)
        tensors = [x] + [t for _, t in params.named("p")]

        def f(*_):
            return intra_scale_forward(x, params, training=False)
        assert grad_check(f, tensors) < TOL

    def test_inter_block_toy(self, rng):
        params = init_inter(4, 8, 2, 2, 0.0, rng)
        z = _rand(rng, 4, 2)
        target = _rand(rng, 8, 2)
        tensors = [z, target] + [t for _, t in params.named("p")]

        def f(*_):
            return inter_scale_forward(z, target, params, training=False)
        assert grad_check(f, tensors) < TOL

    def test_full_model_l1_loss_on_24_step_toy(self, rng):
        from tprnn.model import TPRNN, ModelConfig, forward
        from tprnn.training import l1_loss

        cfg = ModelConfig(input_len=24, horizon=6, channels=2, num_scales=2,
                          global_len=2, hidden=3, d_ff=4, dropout_p=0.0, seed=2)
        model = TPRNN(cfg)
        x = Tensor(rng.standard_normal((24, 2)))
        truth = Tensor(rng.standard_normal((6, 2)))

        def f(*_):
            return l1_loss(forward(x, model.params, cfg), truth)
        assert grad_check(f, model.parameters()) < TOL

    def test_run_interaction_end_to_end(self, rng):
        # T=16, C=2, D=2, h=3 toy
        intra = [init_intra("lstm", 2, 3, 4, 0.0, rng) for _ in range(3)]
        inter = [init_inter(8, 16, 2, 2, 0.0, rng), init_inter(4, 8, 2, 2, 0.0, rng)]
        pyramid = [Tensor(rng.uniform(-2, 2, (n, 2))) for n in (16, 8, 4)]
        tensors = list(pyramid)
        for i, p in enumerate(intra):
            tensors += [t for _, t in p.named(f"i{i}")]
        for i, p in enumerate(inter):
            tensors += [t for _, t in p.named(f"e{i}")]

        def f(*_):
            outs = run_interaction(pyramid, intra, inter, training=False)
            return T.add(T.pad_tail(outs[2], 12),
                         T.add(T.pad_tail(outs[1], 8), outs[0]))
        assert grad_check(f, tensors) < TOL
