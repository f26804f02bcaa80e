"""Dataset ingestion, chronological splitting, scaling, and synthesis.

CSV layout: UTF-8, comma-separated, first header names the timestamp column
(its values are kept for round-tripping but never used in computation), every
other column is a numeric channel. Splits are strictly chronological; the
z-score scaler is fitted on the train rows only and applied everywhere, so
nothing about validation or test data can leak into it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

SPLITS = ("train", "val", "test")


@dataclass
class SeriesDataset:
    """A multivariate series plus split boundaries and normalization state.

    Treated as immutable: the split/scaler helpers return new instances.
    """

    channel_names: list[str]
    values: np.ndarray                       # (N, D) float64
    timestamps: list[str] | None = None
    ratios: tuple[float, float, float] | None = None
    bounds: tuple[int, int] | None = None    # (train_end, val_end)
    scaler_mean: np.ndarray | None = None    # (D,)
    scaler_std: np.ndarray | None = None     # (D,)
    flags: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def split_range(self, split: str) -> tuple[int, int]:
        if self.bounds is None:
            raise ConfigError("dataset has no split boundaries; call chronological_split")
        if split not in SPLITS:
            raise ConfigError(f"unknown split '{split}'")
        train_end, val_end = self.bounds
        if split == "train":
            return 0, train_end
        if split == "val":
            return train_end, val_end
        return val_end, self.n

    def split_values(self, split: str) -> np.ndarray:
        lo, hi = self.split_range(split)
        return self.values[lo:hi]

    def denormalize(self, arr: np.ndarray) -> np.ndarray:
        if self.scaler_mean is None:
            return arr
        return arr * self.scaler_std + self.scaler_mean

    def normalize(self, arr: np.ndarray) -> np.ndarray:
        if self.scaler_mean is None:
            return arr
        return (arr - self.scaler_mean) / self.scaler_std


@dataclass(frozen=True)
class WindowSample:
    """A lookback slice and the horizon slice immediately after it."""

    input: np.ndarray   # (T, D)
    target: np.ndarray  # (H, D)


def load_csv(path: str | Path) -> SeriesDataset:
    """Parse a channel CSV, rejecting ragged rows, non-numeric cells, and
    duplicate timestamps. Errors name the offending line (1-based)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: need a timestamp column plus at least one channel")
        names = [h.strip() for h in header[1:]]
        ncol = len(header)
        timestamps: list[str] = []
        seen: set[str] = set()
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != ncol:
                raise DataError(
                    f"{path}: line {lineno}: expected {ncol} fields, got {len(row)}")
            ts = row[0]
            if ts in seen:
                raise DataError(f"{path}: line {lineno}: duplicate timestamp '{ts}'")
            seen.add(ts)
            timestamps.append(ts)
            parsed = []
            for name, cell in zip(names, row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}: non-numeric value '{cell}' "
                        f"in column '{name}'") from None
                if not math.isfinite(v):
                    raise DataError(
                        f"{path}: line {lineno}: non-finite value in column '{name}'")
                parsed.append(v)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return SeriesDataset(channel_names=names, values=np.array(rows, dtype=np.float64),
                         timestamps=timestamps)


def write_csv(ds: SeriesDataset, path: str | Path) -> None:
    """Inverse of load_csv; float repr keeps values exact across a round trip."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(ds.channel_names))
        for i in range(ds.n):
            ts = ds.timestamps[i] if ds.timestamps else str(i)
            writer.writerow([ts] + [repr(float(v)) for v in ds.values[i]])


def chronological_split(ds: SeriesDataset, ratios: tuple[float, float, float],
                        input_len: int | None = None,
                        horizon: int | None = None) -> SeriesDataset:
    """Fix split boundaries: train gets the first floor(r1*N) rows, validation
    the next floor(r2*N), test the rest. Never shuffles."""
    if len(ratios) != 3:
        raise ConfigError(f"need three split ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios):
        raise ConfigError(f"split ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    train_end = int(ratios[0] * ds.n)
    val_end = train_end + int(ratios[1] * ds.n)
    out = replace(ds, ratios=tuple(ratios), bounds=(train_end, val_end),
                  flags=list(ds.flags))
    lengths = {"train": train_end, "val": val_end - train_end, "test": ds.n - val_end}
    for split, ratio in zip(SPLITS, ratios):
        if lengths[split] == 0:
            out.flags.append(f"{split} split is empty")
        if input_len is not None and horizon is not None and ratio > 0:
            if lengths[split] < input_len + horizon:
                raise ConfigError(
                    f"{split} split has {lengths[split]} rows, too small for "
                    f"input_len {input_len} + horizon {horizon}")
    return out


def fit_apply_scaler(ds: SeriesDataset) -> SeriesDataset:
    """Per-channel z-score with statistics from the train split only.

    Constant channels are flagged and get std 1 so they normalize to zeros.
    """
    train = ds.split_values("train")
    if train.shape[0] == 0:
        raise ConfigError("cannot fit a scaler: train split is empty")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    flags = list(ds.flags)
    for i, name in enumerate(ds.channel_names):
        if std[i] == 0.0:
            std[i] = 1.0
            flags.append(f"channel '{name}' is constant on the train split")
    return replace(ds, values=(ds.values - mean) / std,
                   scaler_mean=mean, scaler_std=std, flags=flags)


def make_windows(ds: SeriesDataset, split: str, input_len: int, horizon: int,
                 stride: int = 1) -> list[WindowSample]:
    """Every stride-aligned (input, target) pair fully inside the split."""
    if stride < 1:
        raise ConfigError(f"window stride must be positive, got {stride}")
    rows = ds.split_values(split)
    total = input_len + horizon
    if rows.shape[0] < total:
        raise ConfigError(
            f"{split} split has {rows.shape[0]} rows, too small for "
            f"input_len {input_len} + horizon {horizon}")
    count = (rows.shape[0] - total) // stride + 1
    return [WindowSample(rows[i:i + input_len], rows[i + input_len:i + total])
            for i in range(0, count * stride, stride)]


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SineComponent:
    amplitude: float
    period: float
    phase: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a synthetic multivariate series: a sum of sinusoids plus an
    optional linear trend and Gaussian noise. Channels share the components
    but are phase-shifted by ``channel_phase_step`` per channel index."""

    n: int = 2000
    channels: int = 2
    components: tuple[SineComponent, ...] = (
        SineComponent(1.0, 24.0), SineComponent(0.5, 168.0))
    trend_slope: float = 0.0
    noise_std: float = 0.0
    seed: int = 0
    channel_phase_step: float = 0.7


def multiscale_preset(n: int = 2000, channels: int = 2, noise_std: float = 0.0,
                      seed: int = 0) -> SynthSpec:
    """The default daily/weekly-style recipe used by the bundled experiments."""
    return SynthSpec(n=n, channels=channels, noise_std=noise_std, seed=seed)


def gen_synthetic(spec: SynthSpec) -> SeriesDataset:
    if spec.n < 1 or spec.channels < 1:
        raise ConfigError(f"need n >= 1 and channels >= 1, got {spec.n}, {spec.channels}")
    t = np.arange(spec.n, dtype=np.float64)
    values = np.zeros((spec.n, spec.channels))
    for c in range(spec.channels):
        for comp in spec.components:
            values[:, c] += comp.amplitude * np.sin(
                2.0 * np.pi * t / comp.period + comp.phase + c * spec.channel_phase_step)
        values[:, c] += spec.trend_slope * t
    if spec.noise_std > 0.0:
        rng = np.random.default_rng(spec.seed)
        values += rng.normal(0.0, spec.noise_std, values.shape)
    names = [f"ch{c}" for c in range(spec.channels)]
    timestamps = [f"t{i}" for i in range(spec.n)]
    return SeriesDataset(channel_names=names, values=values, timestamps=timestamps)


def prepare(ds: SeriesDataset, ratios: tuple[float, float, float],
            input_len: int, horizon: int) -> SeriesDataset:
    """split + scale in one call, validating window feasibility."""
    return fit_apply_scaler(chronological_split(ds, ratios, input_len, horizon))
