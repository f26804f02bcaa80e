"""Full forecaster assembly: pyramid -> interaction -> per-scale prediction -> fusion.

A model is a (config, parameters) pair. The config's ``variant`` field picks
one of the structural reroutes used for component comparisons:

* ``full``          - everything on
* ``no_conv``       - construction branches shrink to max/min/avg pooling
* ``no_pooling``    - construction uses the convolution branch only
* ``no_interscale`` - levels never talk to each other (finer levels keep
                      their constructed values)
* ``no_intrascale`` - no recurrent modeling; the bottleneck acts on raw levels
* ``no_all``        - per-scale predictors act directly on the pyramid
* ``lastnode``      - bottleneck replaced by broadcasting the last hidden state
* ``fullconnect``   - bottleneck replaced by a dense level-to-level map
* ``no_fusion``     - only the original-scale predictor produces the forecast

Checkpoints are a two-file container: ``<stem>.manifest.json`` (format
version, config, named shapes/offsets, CRC-32 of the payload, creation
metadata) plus ``<stem>.params.bin`` (little-endian float32 values
concatenated in manifest order).
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import tensor as T
from .errors import (
    CheckpointChecksumError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
    DimensionError,
)
from .interaction import (
    FullConnectParams,
    InterScaleParams,
    IntraScaleParams,
    LastNodeParams,
    RNN_KINDS,
    init_fullconnect,
    init_inter,
    init_intra,
    init_lastnode,
    run_interaction,
)
from .pyramid import (
    BRANCH_ORDER,
    PyramidConfig,
    ScaleBlockParams,
    build_pyramid,
    init_scale_block,
    scale_lengths,
)
from .tensor import Tensor

VARIANTS = ("full", "no_conv", "no_pooling", "no_all", "no_interscale",
            "no_intrascale", "lastnode", "fullconnect", "no_fusion")

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    input_len: int
    horizon: int
    channels: int
    num_scales: int = 2
    global_len: int = 6
    hidden: int | None = None      # defaults to channels
    d_ff: int | None = None        # defaults to 4 * channels
    dropout_p: float = 0.1
    rnn_kind: str = "lstm"
    branch_set: tuple[str, ...] = BRANCH_ORDER
    window: int = 2
    stride: int = 2
    variant: str = "full"
    seed: int = 0
    mix_full: bool = False
    fusion_per_horizon: bool = False

    def __post_init__(self):
        if self.input_len < 1 or self.horizon < 1 or self.channels < 1:
            raise ConfigError(
                f"input_len, horizon and channels must be positive, got "
                f"{self.input_len}, {self.horizon}, {self.channels}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}'; choose from {VARIANTS}")
        if self.rnn_kind not in RNN_KINDS:
            raise ConfigError(f"rnn_kind must be one of {RNN_KINDS}, got '{self.rnn_kind}'")
        self.branch_set = tuple(self.branch_set)

    @property
    def hidden_size(self) -> int:
        return self.hidden if self.hidden else self.channels

    @property
    def ff_size(self) -> int:
        return self.d_ff if self.d_ff else 4 * self.channels

    def effective_branches(self) -> tuple[str, ...]:
        if self.variant == "no_conv":
            return tuple(b for b in self.branch_set if b != "conv")
        if self.variant == "no_pooling":
            return ("conv",)
        return self.branch_set

    def pyramid_config(self) -> PyramidConfig:
        return PyramidConfig(
            feature_dim=self.channels, num_scales=self.num_scales,
            window=self.window, stride=self.stride,
            branch_set=self.effective_branches(), mix_full=self.mix_full)

    def lengths(self) -> list[int]:
        """Per-level lengths [L_0 .. L_C] for this config's input length."""
        return scale_lengths(self.input_len, self.pyramid_config())

    @property
    def uses_intra(self) -> bool:
        return self.variant not in ("no_intrascale", "no_all")

    @property
    def inter_kind(self) -> str | None:
        if self.variant in ("no_interscale", "no_all"):
            return None
        if self.variant in ("lastnode", "fullconnect"):
            return self.variant
        return "bottleneck"

    def validate(self) -> None:
        """Checks that need the derived level lengths."""
        lengths = self.lengths()
        if self.inter_kind == "bottleneck":
            for s in range(1, self.num_scales + 1):
                if self.global_len >= min(lengths[s], lengths[s - 1]):
                    raise ConfigError(
                        f"global_len {self.global_len} must be smaller than both "
                        f"adjacent level lengths ({lengths[s]}, {lengths[s - 1]}) "
                        f"at scale {s}")
        if self.variant == "lastnode" and not self.uses_intra:
            raise ConfigError("lastnode needs the recurrent block")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["branch_set"] = list(self.branch_set)
        return d


@dataclass
class ModelParams:
    """Every learnable tensor, grouped the way the forward pass consumes them."""

    scale_blocks: list[ScaleBlockParams] = field(default_factory=list)
    intra: list[IntraScaleParams] | None = None
    inter: list | None = None
    predictors: list[tuple[Tensor, Tensor]] = field(default_factory=list)
    fusion: Tensor | None = None

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for s, blk in enumerate(self.scale_blocks, start=1):
            out.extend(blk.named(f"scale_block.{s}"))
        if self.intra is not None:
            for s, p in enumerate(self.intra):
                out.extend(p.named(f"intra.{s}"))
        if self.inter is not None:
            for s, p in enumerate(self.inter, start=1):
                if p is not None:
                    out.extend(p.named(f"inter.{s}"))
        for s, (w, b) in enumerate(self.predictors):
            out.append((f"predictor.{s}.w", w))
            out.append((f"predictor.{s}.b", b))
        if self.fusion is not None:
            out.append(("fusion.w", self.fusion))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            t.data = snap[name].copy()


def init_params(cfg: ModelConfig, seed: int | None = None) -> ModelParams:
    """Draw fresh parameters; the draw order equals the registry order."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    lengths = cfg.lengths()
    pyr = cfg.pyramid_config()
    d = cfg.channels
    h = cfg.hidden_size

    params = ModelParams()
    for _ in range(cfg.num_scales):
        params.scale_blocks.append(init_scale_block(pyr, rng))
    if cfg.uses_intra:
        params.intra = [init_intra(cfg.rnn_kind, d, h, cfg.ff_size, cfg.dropout_p, rng)
                        for _ in range(cfg.num_scales + 1)]
    kind = cfg.inter_kind
    if kind is not None:
        params.inter = []
        for s in range(1, cfg.num_scales + 1):
            if kind == "bottleneck":
                params.inter.append(init_inter(
                    lengths[s], lengths[s - 1], d, cfg.global_len, cfg.dropout_p, rng))
            elif kind == "lastnode":
                params.inter.append(init_lastnode(
                    h, lengths[s - 1], d, cfg.dropout_p, rng))
            else:
                params.inter.append(init_fullconnect(
                    lengths[s], lengths[s - 1], cfg.dropout_p, rng))
    pred_scales = [0] if cfg.variant == "no_fusion" else list(range(cfg.num_scales + 1))
    for s in pred_scales:
        bound = 1.0 / np.sqrt(lengths[s])
        w = Tensor(rng.uniform(-bound, bound, (lengths[s], cfg.horizon)), requires_grad=True)
        b = Tensor(np.zeros(cfg.horizon), requires_grad=True)
        params.predictors.append((w, b))
    if cfg.variant != "no_fusion":
        n = cfg.num_scales + 1
        shape = (n, cfg.horizon) if cfg.fusion_per_horizon else (n,)
        params.fusion = Tensor(np.full(shape, 1.0 / n), requires_grad=True)
    return params


def param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count; cross-checked against the registry in tests."""
    lengths = cfg.lengths()
    branches = cfg.effective_branches()
    d, h, ff = cfg.channels, cfg.hidden_size, cfg.ff_size
    gates = {"vanilla": 1, "lstm": 4, "gru": 3}[cfg.rnn_kind]

    total = 0
    per_block = (cfg.window * d if "conv" in branches else 0)
    per_block += (len(branches) * d * d + d) if cfg.mix_full else (len(branches) + 1)
    total += cfg.num_scales * per_block
    if cfg.uses_intra:
        per_intra = gates * (d * h + h * h + h) + h * ff + ff + ff * d + d
        total += (cfg.num_scales + 1) * per_intra
    kind = cfg.inter_kind
    for s in range(1, cfg.num_scales + 1):
        if kind == "bottleneck":
            total += lengths[s] * cfg.global_len + d * d + d + cfg.global_len * lengths[s - 1]
        elif kind == "lastnode":
            total += h * d + d + lengths[s - 1]
        elif kind == "fullconnect":
            total += lengths[s] * lengths[s - 1]
    pred_scales = [0] if cfg.variant == "no_fusion" else list(range(cfg.num_scales + 1))
    total += sum(lengths[s] * cfg.horizon + cfg.horizon for s in pred_scales)
    if cfg.variant != "no_fusion":
        total += (cfg.num_scales + 1) * (cfg.horizon if cfg.fusion_per_horizon else 1)
    return total


def predict_scale(z_hat: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-scale horizon predictor: time-axis map (L_s, D) -> (H, D),
    weights shared across channels."""
    return T.affine(z_hat, w, b, axis="time")


def fuse(per_scale: list[Tensor], w_f: Tensor) -> Tensor:
    """Bias-free weighted sum of the per-scale predictions.

    1-d weights hold one scalar per scale; 2-d weights (scales, horizon) give
    each horizon position its own mixture.
    """
    if len(per_scale) != w_f.shape[0]:
        raise DimensionError(
            f"fuse got {len(per_scale)} predictions but {w_f.shape[0]} weights")
    if w_f.ndim == 1:
        return T.axis_combine(T.stack(per_scale, axis=0), w_f)
    if w_f.ndim == 2:
        horizon, d = per_scale[0].shape
        if w_f.shape[1] != horizon:
            raise DimensionError(
                f"per-horizon fusion weights {w_f.shape} vs horizon {horizon}")
        out = None
        for s, pred in enumerate(per_scale):
            w_row = T.repeat(T.slice_axis(w_f, 0, s), d, axis=1)
            term = T.mul(pred, w_row)
            out = term if out is None else T.add(out, term)
        return out
    raise DimensionError(f"fusion weights must be 1-d or 2-d, got {w_f.shape}")


def forward(x: Tensor, params: ModelParams, cfg: ModelConfig,
            training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """One window in, one forecast out: (input_len, D) -> (horizon, D)."""
    if x.shape != (cfg.input_len, cfg.channels):
        raise DimensionError(
            f"expected input of shape ({cfg.input_len}, {cfg.channels}), got {x.shape}")
    levels = build_pyramid(x, params.scale_blocks, cfg.pyramid_config())
    feats = run_interaction(levels, params.intra, params.inter, training, rng)
    if cfg.variant == "no_fusion":
        w, b = params.predictors[0]
        return predict_scale(feats[0], w, b)
    preds = [predict_scale(feats[s], w, b) for s, (w, b) in enumerate(params.predictors)]
    return fuse(preds, params.fusion)


class TPRNN:
    """Convenience wrapper bundling a config with its parameters."""

    def __init__(self, cfg: ModelConfig, params: ModelParams | None = None):
        cfg.validate()
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg)

    def forward(self, x: Tensor, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        return forward(x, self.params, self.cfg, training, rng)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Inference on a raw array, no recording, dropout off."""
        with T.no_grad():
            return self.forward(Tensor(x)).data

    def predict_batch(self, xs: np.ndarray) -> np.ndarray:
        """Map inference over a leading batch axis with shared parameters."""
        if xs.ndim != 3:
            raise DimensionError(f"expected (batch, input_len, channels), got {xs.shape}")
        return np.stack([self.predict(x) for x in xs], axis=0)

    def named_parameters(self):
        return self.params.named_parameters()

    def parameters(self):
        return self.params.parameters()


# ---------------------------------------------------------------------------
# predictor-weight export
# ---------------------------------------------------------------------------

def export_predictor_weights(params: ModelParams):
    """Flatten every per-scale predictor into (scale, input_position,
    horizon_position, weight) rows plus a per-position mean |weight| marginal."""
    rows = []
    marginal = []
    for s, (w, _) in enumerate(params.predictors):
        wd = w.data
        for i in range(wd.shape[0]):
            for j in range(wd.shape[1]):
                rows.append((s, i, j, wd[i, j]))
            marginal.append((s, i, float(np.abs(wd[i]).mean())))
    return rows, marginal


# ---------------------------------------------------------------------------
# checkpoint persistence
# ---------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, cfg: ModelConfig, stem: str | Path,
                    metadata: dict | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.manifest.json`` and ``<stem>.params.bin``."""
    stem = Path(stem)
    named = params.named_parameters()
    entries = []
    chunks = []
    offset = 0
    for name, t in named:
        arr = t.data.astype("<f4")
        entries.append({"name": name, "shape": list(t.shape),
                        "offset": offset, "length": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += int(arr.size)
    payload = b"".join(chunks)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": cfg.to_dict(),
        "params": entries,
        "checksum": zlib.crc32(payload),
        "created": datetime.now(timezone.utc).isoformat(),
        "library_version": __version__,
        "metadata": metadata or {},
    }
    manifest_path = stem.with_suffix(stem.suffix + ".manifest.json")
    payload_path = stem.with_suffix(stem.suffix + ".params.bin")
    manifest_path.write_text(json.dumps(manifest, indent=2))
    payload_path.write_bytes(payload)
    return manifest_path, payload_path


def load_checkpoint(stem: str | Path) -> tuple[ModelParams, ModelConfig, dict]:
    """Validate and load a checkpoint pair; returns (params, config, metadata)."""
    stem = Path(stem)
    manifest_path = stem.with_suffix(stem.suffix + ".manifest.json")
    payload_path = stem.with_suffix(stem.suffix + ".params.bin")
    manifest = json.loads(manifest_path.read_text())

    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint format version {version!r}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}")
    try:
        cfg = ModelConfig(**manifest["config"])
    except TypeError as exc:
        raise CheckpointShapeError(f"manifest config is invalid: {exc}") from exc

    entries = manifest["params"]
    total = sum(e["length"] for e in entries)
    payload = payload_path.read_bytes()
    if len(payload) != 4 * total:
        raise CheckpointTruncatedError(
            f"payload holds {len(payload)} bytes, manifest promises {4 * total}")
    if zlib.crc32(payload) != manifest["checksum"]:
        raise CheckpointChecksumError("payload does not match the manifest checksum")

    params = init_params(cfg)
    named = dict(params.named_parameters())
    if set(named) != {e["name"] for e in entries}:
        raise CheckpointShapeError(
            "manifest parameter names do not match the config's parameter registry")
    flat = np.frombuffer(payload, dtype="<f4")
    for e in entries:
        t = named[e["name"]]
        shape = tuple(e["shape"])
        if shape != t.shape or int(np.prod(shape)) != e["length"]:
            raise CheckpointShapeError(
                f"parameter '{e['name']}' has shape {shape} in the manifest, "
                f"expected {t.shape}")
        t.data = flat[e["offset"]:e["offset"] + e["length"]].astype(
            np.float64).reshape(shape)
    return params, cfg, manifest.get("metadata", {})
