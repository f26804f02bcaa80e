"""Sanity-check forecasters: naive, seasonal-naive, and a linear map.

These exist to anchor the evaluation numbers, not to compete seriously. The
linear map is a channel-independent least-squares fit from the lookback
window to the horizon, shared across channels, solved in closed form on the
train windows.
"""

from __future__ import annotations

import numpy as np

from .data import SeriesDataset, make_windows
from .errors import ConfigError


def naive_forecast(history: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observed row."""
    return np.repeat(history[-1:], horizon, axis=0)


def seasonal_naive_forecast(history: np.ndarray, horizon: int, period: int) -> np.ndarray:
    """Repeat the most recent full season."""
    if history.shape[0] < period:
        raise ConfigError(
            f"seasonal naive needs at least {period} rows of history, "
            f"got {history.shape[0]}")
    season = history[-period:]
    idx = np.arange(horizon) % period
    return season[idx]


class LinearMapForecaster:
    """y[:, d] = W.T @ x[:, d] + b for every channel d, with W (T, H), b (H,).

    ``fit`` solves the map in closed form; ``fit_trained`` optimizes it with
    the exact training protocol the main model uses (same optimizer, loss,
    batching, and early stopping), which is the variant the bundled
    experiments compare against so the optimization budget is identical.
    """

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        self.weights = weights
        self.bias = bias

    @classmethod
    def fit(cls, ds: SeriesDataset, input_len: int, horizon: int,
            ridge: float = 1e-8) -> "LinearMapForecaster":
        windows = make_windows(ds, "train", input_len, horizon)
        x = np.concatenate([w.input.T for w in windows], axis=0)   # (n*D, T)
        y = np.concatenate([w.target.T for w in windows], axis=0)  # (n*D, H)
        design = np.hstack([x, np.ones((x.shape[0], 1))])
        gram = design.T @ design + ridge * np.eye(design.shape[1])
        coef = np.linalg.solve(gram, design.T @ y)                 # (T+1, H)
        return cls(coef[:-1], coef[-1])

    @classmethod
    def fit_trained(cls, ds: SeriesDataset, input_len: int, horizon: int,
                    train_cfg=None, seed: int = 0) -> "LinearMapForecaster":
        from .model import TPRNN, ModelConfig
        from .training import TrainConfig, fit

        cfg = ModelConfig(input_len=input_len, horizon=horizon, channels=ds.d,
                          num_scales=0, variant="no_all", dropout_p=0.0, seed=seed)
        tcfg = train_cfg if train_cfg is not None else TrainConfig(seed=seed)
        model, _state = fit(TPRNN(cfg), ds, tcfg)
        w, b = model.params.predictors[0]
        gain = float(model.params.fusion.data.reshape(-1)[0])
        return cls(w.data * gain, b.data * gain)

    def forecast(self, history: np.ndarray, horizon: int) -> np.ndarray:
        if horizon != self.bias.shape[0]:
            raise ConfigError(
                f"forecaster was fitted for horizon {self.bias.shape[0]}, got {horizon}")
        return self.weights.T @ history[-self.weights.shape[0]:] + self.bias[:, None]


def evaluate_forecaster(forecast_fn, ds: SeriesDataset, split: str,
                        input_len: int, horizon: int) -> dict[str, float]:
    """Aggregate MSE/MAE of a forecasting callable over a split's windows."""
    windows = make_windows(ds, split, input_len, horizon)
    sq = 0.0
    ab = 0.0
    count = 0
    for w in windows:
        err = forecast_fn(w.input, horizon) - w.target
        sq += float((err ** 2).sum())
        ab += float(np.abs(err).sum())
        count += err.size
    return {"mse": sq / count, "mae": ab / count, "windows": len(windows)}
