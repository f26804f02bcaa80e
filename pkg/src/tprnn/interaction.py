"""Top-down information interaction across pyramid levels.

Two alternating blocks run from the coarsest level down to the original
window. The intra-scale block models temporal structure within one level: a
recurrent pass, a two-layer feed-forward with dropout, and a sigmoid gate
driven by the block input. The inter-scale block compresses the interacted
level to a short global summary through a linear bottleneck, re-expands it to
the next finer level's length, and injects it residually.

Two structural replacements for the bottleneck exist for comparison runs:
``LastNodeParams`` broadcasts the final recurrent hidden state instead of a
learned summary, and ``FullConnectParams`` maps one level's time axis
directly onto the next with a single dense layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor, record_op

RNN_KINDS = ("vanilla", "lstm", "gru")

_GATES = {"vanilla": 1, "lstm": 4, "gru": 3}
_FWD = {"vanilla": "rnn_tanh_fwd", "lstm": "lstm_fwd", "gru": "gru_fwd"}
_BWD = {"vanilla": "rnn_tanh_bwd", "lstm": "lstm_bwd", "gru": "gru_bwd"}


@dataclass
class IntraScaleParams:
    """Recurrent weights plus the gated feed-forward of one level."""

    rnn_kind: str
    wx: Tensor        # (D, gates*h)
    wh: Tensor        # (h, gates*h)
    b: Tensor         # (gates*h,)
    w1: Tensor        # (h, d_ff)
    b1: Tensor        # (d_ff,)
    w2: Tensor        # (d_ff, D)
    b2: Tensor        # (D,)
    dropout_p: float = 0.1

    def named(self, prefix: str):
        return [(f"{prefix}.rnn_wx", self.wx), (f"{prefix}.rnn_wh", self.wh),
                (f"{prefix}.rnn_b", self.b), (f"{prefix}.w1", self.w1),
                (f"{prefix}.b1", self.b1), (f"{prefix}.w2", self.w2),
                (f"{prefix}.b2", self.b2)]


@dataclass
class InterScaleParams:
    """Bottleneck from one level (length L_s) to the next finer one (L_prev)."""

    w_in: Tensor      # (L_s, global_len), time axis, no bias
    w_mid: Tensor     # (D, D), feature axis
    b_mid: Tensor     # (D,)
    w_out: Tensor     # (global_len, L_prev), time axis, no bias
    dropout_p: float = 0.1

    @property
    def global_len(self) -> int:
        return self.w_in.shape[1]

    def named(self, prefix: str):
        return [(f"{prefix}.w_in", self.w_in), (f"{prefix}.w_mid", self.w_mid),
                (f"{prefix}.b_mid", self.b_mid), (f"{prefix}.w_out", self.w_out)]


@dataclass
class LastNodeParams:
    """Broadcast the final hidden state instead of a learned summary."""

    w_feat: Tensor    # (h, D)
    b_feat: Tensor    # (D,)
    w_time: Tensor    # (1, L_prev)
    dropout_p: float = 0.1

    def named(self, prefix: str):
        return [(f"{prefix}.w_feat", self.w_feat), (f"{prefix}.b_feat", self.b_feat),
                (f"{prefix}.w_time", self.w_time)]


@dataclass
class FullConnectParams:
    """Dense time-axis map between adjacent levels, no bottleneck."""

    w: Tensor         # (L_s, L_prev)
    dropout_p: float = 0.1

    def named(self, prefix: str):
        return [(f"{prefix}.w", self.w)]


def init_intra(rnn_kind: str, feature_dim: int, hidden: int, d_ff: int,
               dropout_p: float, rng: np.random.Generator) -> IntraScaleParams:
    if rnn_kind not in RNN_KINDS:
        raise ConfigError(f"rnn_kind must be one of {RNN_KINDS}, got '{rnn_kind}'")
    if hidden < 1:
        raise ConfigError(f"hidden size must be positive, got {hidden}")
    if d_ff < feature_dim:
        raise ConfigError(f"d_ff ({d_ff}) must be at least feature_dim ({feature_dim})")
    gates = _GATES[rnn_kind]
    bx = 1.0 / np.sqrt(feature_dim)
    bh = 1.0 / np.sqrt(hidden)
    wx = Tensor(rng.uniform(-bx, bx, (feature_dim, gates * hidden)), requires_grad=True)
    wh = Tensor(rng.uniform(-bh, bh, (hidden, gates * hidden)), requires_grad=True)
    b = np.zeros(gates * hidden)
    if rnn_kind == "lstm":
        b[hidden:2 * hidden] = 1.0  # forget gate starts open
    b = Tensor(b, requires_grad=True)
    w1 = Tensor(rng.uniform(-bh, bh, (hidden, d_ff)), requires_grad=True)
    b1 = Tensor(np.zeros(d_ff), requires_grad=True)
    bf = 1.0 / np.sqrt(d_ff)
    w2 = Tensor(rng.uniform(-bf, bf, (d_ff, feature_dim)), requires_grad=True)
    b2 = Tensor(np.zeros(feature_dim), requires_grad=True)
    return IntraScaleParams(rnn_kind, wx, wh, b, w1, b1, w2, b2, dropout_p)


def init_inter(level_len: int, prev_len: int, feature_dim: int, global_len: int,
               dropout_p: float, rng: np.random.Generator) -> InterScaleParams:
    if global_len < 1:
        raise ConfigError(f"global_len must be positive, got {global_len}")
    if global_len >= min(level_len, prev_len):
        raise ConfigError(
            f"global_len {global_len} must be smaller than both adjacent level "
            f"lengths ({level_len}, {prev_len})")
    bi = 1.0 / np.sqrt(level_len)
    bd = 1.0 / np.sqrt(feature_dim)
    bg = 1.0 / np.sqrt(global_len)
    return InterScaleParams(
        w_in=Tensor(rng.uniform(-bi, bi, (level_len, global_len)), requires_grad=True),
        w_mid=Tensor(rng.uniform(-bd, bd, (feature_dim, feature_dim)), requires_grad=True),
        b_mid=Tensor(np.zeros(feature_dim), requires_grad=True),
        w_out=Tensor(rng.uniform(-bg, bg, (global_len, prev_len)), requires_grad=True),
        dropout_p=dropout_p,
    )


def init_lastnode(hidden: int, prev_len: int, feature_dim: int,
                  dropout_p: float, rng: np.random.Generator) -> LastNodeParams:
    bh = 1.0 / np.sqrt(hidden)
    return LastNodeParams(
        w_feat=Tensor(rng.uniform(-bh, bh, (hidden, feature_dim)), requires_grad=True),
        b_feat=Tensor(np.zeros(feature_dim), requires_grad=True),
        w_time=Tensor(rng.uniform(-1.0, 1.0, (1, prev_len)), requires_grad=True),
        dropout_p=dropout_p,
    )


def init_fullconnect(level_len: int, prev_len: int, dropout_p: float,
                     rng: np.random.Generator) -> FullConnectParams:
    bi = 1.0 / np.sqrt(level_len)
    return FullConnectParams(
        w=Tensor(rng.uniform(-bi, bi, (level_len, prev_len)), requires_grad=True),
        dropout_p=dropout_p,
    )


def rnn_forward(kind: str, x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Full-sequence recurrence from a zero initial state, returning (L, h).

    Forward and backward-through-time both run in one fused kernel; the
    backward rule is exercised by the finite-difference oracle in the tests.
    """
    if kind not in RNN_KINDS:
        raise ConfigError(f"rnn_kind must be one of {RNN_KINDS}, got '{kind}'")
    gates = _GATES[kind]
    if x.ndim != 2 or wx.ndim != 2 or wh.ndim != 2 or b.ndim != 1:
        raise DimensionError("rnn_forward expects 2-d x/wx/wh and 1-d b")
    hidden = wh.shape[0]
    if wx.shape != (x.shape[1], gates * hidden) or wh.shape != (hidden, gates * hidden) \
            or b.shape != (gates * hidden,):
        raise DimensionError(
            f"inconsistent {kind} weight shapes: x {x.shape}, wx {wx.shape}, "
            f"wh {wh.shape}, b {b.shape}")
    fwd = getattr(kernels, _FWD[kind])
    bwd = getattr(kernels, _BWD[kind])
    xd, wxd, whd, bd = x.data, wx.data, wh.data, b.data
    res = fwd(xd, wxd, whd, bd)
    hs, caches = res[0], res[1:]

    def backward_fn(g):
        dx, dwx, dwh, db = bwd(np.ascontiguousarray(g), xd, wxd, whd, bd, hs, *caches)
        return (dx if x.requires_grad else None,
                dwx if wx.requires_grad else None,
                dwh if wh.requires_grad else None,
                db if b.requires_grad else None)

    return record_op(hs, (x, wx, wh, b), backward_fn)


def intra_scale_forward(x_hat: Tensor, params: IntraScaleParams, training: bool = False,
                        rng: np.random.Generator | None = None,
                        return_hidden: bool = False):
    """Gated within-level modeling: (L_s, D) in, (L_s, D) out."""
    h = rnn_forward(params.rnn_kind, x_hat, params.wx, params.wh, params.b)
    z = T.affine(h, params.w1, params.b1, axis="feature")
    z = T.dropout(z, params.dropout_p, training, rng)
    z = T.affine(z, params.w2, params.b2, axis="feature")
    out = T.mul(T.sigmoid(x_hat), z)
    return (out, h) if return_hidden else out


def inter_scale_forward(z_hat: Tensor, x_coarser_target: Tensor,
                        params: InterScaleParams, training: bool = False,
                        rng: np.random.Generator | None = None) -> Tensor:
    """Bottleneck summary of ``z_hat`` injected residually into the finer level."""
    level_len = z_hat.shape[0]
    prev_len = x_coarser_target.shape[0]
    if params.global_len >= min(level_len, prev_len):
        raise ConfigError(
            f"global_len {params.global_len} must be smaller than both adjacent "
            f"level lengths ({level_len}, {prev_len})")
    z_g = T.affine(z_hat, params.w_in, None, axis="time")
    z_g = T.affine(z_g, params.w_mid, params.b_mid, axis="feature")
    h_g = T.affine(z_g, params.w_out, None, axis="time")
    return T.add(T.dropout(h_g, params.dropout_p, training, rng), x_coarser_target)


def lastnode_forward(h_seq: Tensor, x_coarser_target: Tensor, params: LastNodeParams,
                     training: bool = False,
                     rng: np.random.Generator | None = None) -> Tensor:
    row = T.reshape(T.slice_axis(h_seq, 0, h_seq.shape[0] - 1), (1, h_seq.shape[1]))
    u = T.affine(row, params.w_feat, params.b_feat, axis="feature")
    spread = T.affine(u, params.w_time, None, axis="time")
    return T.add(T.dropout(spread, params.dropout_p, training, rng), x_coarser_target)


def fullconnect_forward(z_hat: Tensor, x_coarser_target: Tensor,
                        params: FullConnectParams, training: bool = False,
                        rng: np.random.Generator | None = None) -> Tensor:
    spread = T.affine(z_hat, params.w, None, axis="time")
    return T.add(T.dropout(spread, params.dropout_p, training, rng), x_coarser_target)


def run_interaction(pyramid: list[Tensor], intra_params, inter_params,
                    training: bool = False,
                    rng: np.random.Generator | None = None) -> list[Tensor]:
    """Alternate the two blocks from the top level down to the original window.

    ``intra_params`` is one record per level (index = scale) or None to skip
    within-level modeling entirely; ``inter_params[s-1]`` carries level s into
    level s-1 and may be None to leave the finer level untouched. Returns the
    interacted levels, index-aligned with the pyramid.
    """
    top = len(pyramid) - 1
    if intra_params is not None and len(intra_params) != top + 1:
        raise ConfigError(
            f"expected {top + 1} intra-scale records, got {len(intra_params)}")
    if inter_params is not None and len(inter_params) != top:
        raise ConfigError(f"expected {top} inter-scale records, got {len(inter_params)}")

    out: list[Tensor | None] = [None] * (top + 1)
    x_hat = pyramid[top]
    for s in range(top, -1, -1):
        h_seq = None
        if intra_params is None:
            z = x_hat
        else:
            trans = inter_params[s - 1] if (inter_params is not None and s > 0) else None
            need_hidden = isinstance(trans, LastNodeParams)
            res = intra_scale_forward(x_hat, intra_params[s], training, rng,
                                      return_hidden=need_hidden)
            z, h_seq = res if need_hidden else (res, None)
        out[s] = z
        if s == 0:
            break
        trans = inter_params[s - 1] if inter_params is not None else None
        if trans is None:
            x_hat = pyramid[s - 1]
        elif isinstance(trans, InterScaleParams):
            x_hat = inter_scale_forward(z, pyramid[s - 1], trans, training, rng)
        elif isinstance(trans, LastNodeParams):
            if h_seq is None:
                raise ConfigError("last-node transition needs the recurrent hidden state")
            x_hat = lastnode_forward(h_seq, pyramid[s - 1], trans, training, rng)
        elif isinstance(trans, FullConnectParams):
            x_hat = fullconnect_forward(z, pyramid[s - 1], trans, training, rng)
        else:
            raise ConfigError(f"unknown inter-scale record type {type(trans).__name__}")
    return out
