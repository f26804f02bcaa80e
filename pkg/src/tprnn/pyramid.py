"""Multi-scale pyramid construction.

Each level above the original window is produced by a scale block: a bank of
length-reducing branches (depthwise convolution plus max/min/avg pooling, all
sharing one window and stride so their outputs align) whose stacked outputs
are mixed by a small linear layer over the branch axis. Levels whose length
is not stride-aligned are replicate-padded on the right so the most recent
observations are never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .tensor import Tensor

BRANCH_ORDER = ("conv", "max", "min", "avg")


@dataclass(frozen=True)
class PyramidConfig:
    """Static description of the pyramid: how many levels and how each is built."""

    feature_dim: int
    num_scales: int = 2
    window: int = 2
    stride: int = 2
    branch_set: tuple[str, ...] = BRANCH_ORDER
    mix_full: bool = False  # mix (branches*D) -> D instead of per-branch scalars

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be positive, got {self.feature_dim}")
        if self.num_scales < 0:
            raise ConfigError(f"num_scales must be non-negative, got {self.num_scales}")
        if self.window < 1 or self.stride < 1:
            raise ConfigError(
                f"window and stride must be positive, got {self.window}, {self.stride}")
        branches = tuple(b for b in BRANCH_ORDER if b in self.branch_set)
        if not branches:
            raise ConfigError("branch_set must contain at least one of conv/max/min/avg")
        unknown = set(self.branch_set) - set(BRANCH_ORDER)
        if unknown:
            raise ConfigError(f"unknown branches: {sorted(unknown)}")
        object.__setattr__(self, "branch_set", branches)


@dataclass
class ScaleBlockParams:
    """Learnable state of one scale block (one record per constructed level)."""

    conv_kernels: Tensor | None  # (window, D), present iff "conv" is a branch
    mix_w: Tensor                # (branches,) or (branches*D, D) when mix_full
    mix_b: Tensor                # scalar, or (D,) when mix_full

    def named(self, prefix: str):
        out = []
        if self.conv_kernels is not None:
            out.append((f"{prefix}.conv_kernels", self.conv_kernels))
        out.append((f"{prefix}.mix_w", self.mix_w))
        out.append((f"{prefix}.mix_b", self.mix_b))
        return out


def init_scale_block(cfg: PyramidConfig, rng: np.random.Generator) -> ScaleBlockParams:
    nb = len(cfg.branch_set)
    d = cfg.feature_dim
    conv = None
    if "conv" in cfg.branch_set:
        bound = 1.0 / np.sqrt(cfg.window)
        conv = Tensor(rng.uniform(-bound, bound, (cfg.window, d)), requires_grad=True)
    if cfg.mix_full:
        bound = 1.0 / np.sqrt(nb * d)
        mix_w = Tensor(rng.uniform(-bound, bound, (nb * d, d)), requires_grad=True)
        mix_b = Tensor(np.zeros(d), requires_grad=True)
    else:
        bound = 1.0 / np.sqrt(nb)
        mix_w = Tensor(rng.uniform(-bound, bound, nb), requires_grad=True)
        mix_b = Tensor(np.zeros(()), requires_grad=True)
    return ScaleBlockParams(conv, mix_w, mix_b)


def padded_length(length: int, window: int, stride: int) -> int:
    """Smallest stride-aligned length >= max(length, window)."""
    if length < window:
        return window
    return length + (stride - (length - window) % stride) % stride


def level_length(length: int, window: int, stride: int) -> int:
    """Output length of one scale block applied to an input of ``length``."""
    return (padded_length(length, window, stride) - window) // stride + 1


def scale_lengths(input_len: int, cfg: PyramidConfig) -> list[int]:
    """Lengths [L_0 .. L_C] of every pyramid level for a given input length."""
    lengths = [input_len]
    for _ in range(cfg.num_scales):
        nxt = level_length(lengths[-1], cfg.window, cfg.stride)
        if nxt < 1 or nxt >= lengths[-1]:
            raise ConfigError("pyramid too deep for input length")
        lengths.append(nxt)
    return lengths


def scale_block_forward(x: Tensor, params: ScaleBlockParams, cfg: PyramidConfig) -> Tensor:
    """One construction step: (L, D) -> (L', D) through all configured branches."""
    if x.ndim != 2 or x.shape[1] != cfg.feature_dim:
        raise DimensionError(
            f"scale block expects (L, {cfg.feature_dim}) input, got {x.shape}")
    length = x.shape[0]
    out_len = level_length(length, cfg.window, cfg.stride)
    if out_len < 1 or out_len >= length:
        raise ConfigError("pyramid too deep for input length")
    pad = padded_length(length, cfg.window, cfg.stride) - length
    if pad:
        x = T.pad_tail(x, pad)

    branches = []
    for name in cfg.branch_set:
        if name == "conv":
            branches.append(T.conv1d(x, params.conv_kernels, cfg.stride))
        else:
            branches.append(T.pool1d(name, x, cfg.window, cfg.stride))

    if cfg.mix_full:
        merged = T.reshape(T.stack(branches, axis=1),
                           (out_len, len(branches) * cfg.feature_dim))
        return T.affine(merged, params.mix_w, params.mix_b, axis="feature")
    stacked = T.stack(branches, axis=0)
    return T.axis_combine(stacked, params.mix_w, params.mix_b)


def build_pyramid(x0: Tensor, all_params: list[ScaleBlockParams],
                  cfg: PyramidConfig) -> list[Tensor]:
    """Return [X^0 .. X^C]: the original window plus every constructed level."""
    if len(all_params) != cfg.num_scales:
        raise ConfigError(
            f"expected {cfg.num_scales} scale-block parameter records, got {len(all_params)}")
    levels = [x0]
    for s in range(1, cfg.num_scales + 1):
        try:
            levels.append(scale_block_forward(levels[-1], all_params[s - 1], cfg))
        except (ConfigError, DimensionError) as exc:
            raise type(exc)(f"scale {s}: {exc}") from exc
    return levels
