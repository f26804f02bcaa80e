"""Command-line surface: train / evaluate / forecast / ablate / sweep / synth /
export-weights.

Settings resolve with precedence flags > config file > defaults, and every
run writes its fully resolved settings into its report so results stay
traceable. Failures print one machine-readable ``error:<category>: ...`` line
on stderr and exit nonzero; artifacts are only written after their inputs
have validated, so a failed command leaves no partial outputs behind.
"""

from __future__ import annotations

import csv
import functools
import json
from pathlib import Path

import click
import numpy as np

from . import __version__
from .data import (
    SeriesDataset,
    gen_synthetic,
    load_csv,
    multiscale_preset,
    prepare,
    write_csv,
)
from .errors import (
    CheckpointError,
    CheckpointShapeError,
    ConfigError,
    DataError,
    DimensionError,
    TprnnError,
    TrainingError,
)
from .model import (
    TPRNN,
    VARIANTS,
    ModelConfig,
    export_predictor_weights,
    load_checkpoint,
    save_checkpoint,
)
from .training import TrainConfig, evaluate, fit

EXIT_CODES = (
    (ConfigError, "config", 2),
    (DimensionError, "shape", 2),
    (DataError, "data", 3),
    (CheckpointError, "checkpoint", 4),
    (TrainingError, "training", 5),
)

DEFAULTS = {
    "dataset": None,
    "out": "runs",
    "ratios": "0.7:0.1:0.2",
    "seed": 0,
    "input_len": 96,
    "horizon": 24,
    "num_scales": 2,
    "global_len": 6,
    "hidden": None,
    "d_ff": None,
    "dropout": 0.1,
    "rnn": "lstm",
    "window": 2,
    "stride": 2,
    "variant": "full",
    "mix_full": False,
    "fusion_per_horizon": False,
    "lr": 0.001,
    "batch_size": 32,
    "max_epochs": 30,
    "patience": 5,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps_adam": 1e-8,
    "clip_norm": None,
    "synth_n": 2000,
    "synth_channels": 2,
    "synth_noise": 0.1,
}


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TprnnError as exc:
            for etype, category, code in EXIT_CODES:
                if isinstance(exc, etype):
                    click.echo(f"error:{category}: {exc}", err=True)
                    raise SystemExit(code) from exc
            click.echo(f"error:internal: {exc}", err=True)
            raise SystemExit(1) from exc
    return wrapper


def resolve_settings(config_path: str | None, overrides: dict) -> dict:
    """Merge defaults, config file, and CLI flags; reject unknown keys."""
    settings = dict(DEFAULTS)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            settings[key] = value
    return settings


def _parse_ratios(text) -> tuple[float, float, float]:
    if isinstance(text, (list, tuple)):
        parts = [float(v) for v in text]
    else:
        try:
            parts = [float(p) for p in str(text).split(":")]
        except ValueError:
            raise ConfigError(f"cannot parse ratios '{text}', expected a:b:c") from None
    if len(parts) != 3:
        raise ConfigError(f"need three split ratios, got {len(parts)}")
    total = sum(parts)
    if total <= 0:
        raise ConfigError(f"split ratios must sum to a positive value, got {text}")
    return tuple(p / total for p in parts)


def _load_series(settings: dict) -> SeriesDataset:
    if settings["dataset"]:
        return load_csv(settings["dataset"])
    spec = multiscale_preset(n=int(settings["synth_n"]),
                             channels=int(settings["synth_channels"]),
                             noise_std=float(settings["synth_noise"]),
                             seed=int(settings["seed"]))
    return gen_synthetic(spec)


def _model_config(settings: dict, channels: int, **replacements) -> ModelConfig:
    values = dict(
        input_len=int(settings["input_len"]), horizon=int(settings["horizon"]),
        channels=channels, num_scales=int(settings["num_scales"]),
        global_len=int(settings["global_len"]),
        hidden=None if settings["hidden"] is None else int(settings["hidden"]),
        d_ff=None if settings["d_ff"] is None else int(settings["d_ff"]),
        dropout_p=float(settings["dropout"]), rnn_kind=settings["rnn"],
        window=int(settings["window"]), stride=int(settings["stride"]),
        variant=settings["variant"], seed=int(settings["seed"]),
        mix_full=bool(settings["mix_full"]),
        fusion_per_horizon=bool(settings["fusion_per_horizon"]),
    )
    values.update(replacements)
    cfg = ModelConfig(**values)
    cfg.validate()
    return cfg


def _train_config(settings: dict) -> TrainConfig:
    clip = settings["clip_norm"]
    return TrainConfig(
        lr=float(settings["lr"]), batch_size=int(settings["batch_size"]),
        max_epochs=int(settings["max_epochs"]), patience=int(settings["patience"]),
        beta1=float(settings["beta1"]), beta2=float(settings["beta2"]),
        eps_adam=float(settings["eps_adam"]), seed=int(settings["seed"]),
        clip_norm=None if clip is None else float(clip),
    )


def _checkpoint_metadata(ds: SeriesDataset, report) -> dict:
    return {
        "scaler_mean": list(ds.scaler_mean),
        "scaler_std": list(ds.scaler_std),
        "channel_names": list(ds.channel_names),
        "split_bounds": list(ds.bounds),
        "test_mse": report.mse,
        "test_mae": report.mae,
    }


def _train_once(settings: dict, out_dir: Path | None, variant: str | None = None,
                global_len: int | None = None, seed: int | None = None):
    """Shared train pipeline; returns (model, dataset, report, state)."""
    ratios = _parse_ratios(settings["ratios"])
    series = _load_series(settings)
    ds = prepare(series, ratios, int(settings["input_len"]), int(settings["horizon"]))
    replacements = {}
    if variant is not None:
        replacements["variant"] = variant
    if global_len is not None:
        replacements["global_len"] = global_len
    if seed is not None:
        replacements["seed"] = seed
    cfg = _model_config(settings, ds.d, **replacements)
    tcfg = _train_config(settings)
    if seed is not None:
        tcfg.seed = seed
    model = TPRNN(cfg)
    log_path = out_dir / "train_log.jsonl" if out_dir else None
    model, state = fit(model, ds, tcfg, log_path=log_path)
    report = evaluate(model, ds, "test")
    return model, ds, report, state


def _write_report(path: Path, settings: dict, cfg: ModelConfig, report, state=None):
    body = {
        "tool_version": __version__,
        "settings": {k: v for k, v in settings.items()},
        "model_config": cfg.to_dict(),
        "variant": cfg.variant,
        "report": report.to_dict(),
    }
    if state is not None:
        body["epochs_run"] = state.epoch
        body["best_epoch"] = state.best_epoch
        body["best_val_loss"] = state.best_val
        body["stopped_early"] = state.stopped_early
    path.write_text(json.dumps(body, indent=2))


def common_options(fn):
    options = [
        click.option("--config", "config_path", type=str, default=None,
                     help="JSON settings file; flags override it."),
        click.option("--seed", type=int, default=None),
        click.option("--out", type=str, default=None, help="Output directory."),
        click.option("--dataset", type=str, default=None,
                     help="CSV path; omit to use the bundled synthetic preset."),
        click.option("--ratios", type=str, default=None, help="Split ratios a:b:c."),
        click.option("--input-len", "input_len", type=int, default=None),
        click.option("--horizon", type=int, default=None),
        click.option("--scales", "num_scales", type=int, default=None),
        click.option("--global-len", "global_len", type=int, default=None),
        click.option("--variant", type=click.Choice(VARIANTS), default=None),
        click.option("--rnn", type=click.Choice(["vanilla", "lstm", "gru"]), default=None),
        click.option("--hidden", type=int, default=None),
        click.option("--d-ff", "d_ff", type=int, default=None),
        click.option("--dropout", type=float, default=None),
        click.option("--lr", type=float, default=None),
        click.option("--batch-size", "batch_size", type=int, default=None),
        click.option("--epochs", "max_epochs", type=int, default=None),
        click.option("--patience", type=int, default=None),
        click.option("--noise", "synth_noise", type=float, default=None,
                     help="Noise level of the synthetic fallback dataset."),
        click.option("--synth-n", "synth_n", type=int, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _resolve(config_path, kwargs) -> dict:
    return resolve_settings(config_path, kwargs)


@click.group()
@click.version_option(version=__version__)
def main():
    """Multi-scale recurrent forecasting toolkit."""


@main.command()
@common_options
@_handle_errors
def train(config_path, **kwargs):
    """Train a model and write checkpoint, training log, and report."""
    settings = _resolve(config_path, kwargs)
    out_dir = Path(settings["out"])
    ratios = _parse_ratios(settings["ratios"])
    series = _load_series(settings)
    ds = prepare(series, ratios, int(settings["input_len"]), int(settings["horizon"]))
    cfg = _model_config(settings, ds.d)
    tcfg = _train_config(settings)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = TPRNN(cfg)
    model, state = fit(model, ds, tcfg, log_path=out_dir / "train_log.jsonl")
    report = evaluate(model, ds, "test")
    save_checkpoint(model.params, cfg, out_dir / "checkpoint",
                    metadata=_checkpoint_metadata(ds, report))
    _write_report(out_dir / "report.json", settings, cfg, report, state)
    click.echo(f"test mse={report.mse:.6f} mae={report.mae:.6f} "
               f"(epochs={state.epoch}, best={state.best_epoch})")


@main.command(name="evaluate")
@common_options
@click.option("--checkpoint", "checkpoint_stem", type=str, required=True,
              help="Checkpoint stem (without .manifest.json / .params.bin).")
@click.option("--split", type=click.Choice(["val", "test"]), default="test")
@_handle_errors
def evaluate_cmd(config_path, checkpoint_stem, split, **kwargs):
    """Evaluate a stored checkpoint on one split of a dataset."""
    settings = _resolve(config_path, kwargs)
    params, cfg, _meta = load_checkpoint(checkpoint_stem)
    series = _load_series(settings)
    if series.d != cfg.channels:
        raise CheckpointShapeError(
            f"checkpoint expects {cfg.channels} channels, dataset has {series.d}")
    ratios = _parse_ratios(settings["ratios"])
    ds = prepare(series, ratios, cfg.input_len, cfg.horizon)
    model = TPRNN(cfg, params)
    report = evaluate(model, ds, split)
    out_dir = Path(settings["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(out_dir / "report.json", settings, cfg, report)
    click.echo(f"{split} mse={report.mse:.6f} mae={report.mae:.6f}")


@main.command()
@click.option("--checkpoint", "checkpoint_stem", type=str, required=True)
@click.option("--input", "input_csv", type=str, required=True,
              help="CSV with at least input_len rows of history.")
@click.option("--out", type=str, default="forecast.csv")
@_handle_errors
def forecast(checkpoint_stem, input_csv, out):
    """Forecast the horizon following the provided history."""
    params, cfg, meta = load_checkpoint(checkpoint_stem)
    series = load_csv(input_csv)
    if series.d != cfg.channels:
        raise CheckpointShapeError(
            f"checkpoint expects {cfg.channels} channels, input has {series.d}")
    if series.n < cfg.input_len:
        raise DataError(
            f"insufficient history: need at least {cfg.input_len} rows, "
            f"got {series.n}")
    if "scaler_mean" not in meta:
        raise CheckpointError("checkpoint carries no scaler; cannot denormalize")
    mean = np.array(meta["scaler_mean"])
    std = np.array(meta["scaler_std"])
    history = (series.values[-cfg.input_len:] - mean) / std
    model = TPRNN(cfg, params)
    pred = model.predict(history) * std + mean
    out_path = Path(out)
    if out_path.parent != Path("."):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    forecast_ds = SeriesDataset(
        channel_names=list(series.channel_names), values=pred,
        timestamps=[f"h{i + 1}" for i in range(cfg.horizon)])
    write_csv(forecast_ds, out_path)
    click.echo(f"wrote {cfg.horizon} forecast rows to {out_path}")


@main.command()
@common_options
@_handle_errors
def ablate(config_path, **kwargs):
    """Train every structural variant under identical seeds and splits."""
    settings = _resolve(config_path, kwargs)
    out_dir = Path(settings["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    meta: dict = {"seed": int(settings["seed"]), "split_bounds": {}, "errors": {}}
    for variant in VARIANTS:
        try:
            _model, ds, report, _state = _train_once(settings, None, variant=variant)
            rows.append((variant, f"{report.mse:.6f}", f"{report.mae:.6f}", "ok"))
            meta["split_bounds"][variant] = list(ds.bounds)
        except TprnnError as exc:
            rows.append((variant, "", "", "failed"))
            meta["errors"][variant] = str(exc)
    table = out_dir / "ablation.csv"
    with table.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "mse", "mae", "status"])
        writer.writerows(rows)
    (out_dir / "ablation_meta.json").write_text(json.dumps(meta, indent=2))
    click.echo(f"wrote {len(rows)} variant rows to {table}")


@main.command()
@common_options
@click.option("--values", type=str, default="1:10",
              help="Global lengths to try: comma list or lo:hi range.")
@_handle_errors
def sweep(config_path, values, **kwargs):
    """Train once per global-information length and tabulate test errors."""
    settings = _resolve(config_path, kwargs)
    out_dir = Path(settings["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    parsed = _parse_sweep_values(values)
    rows = []
    meta: dict = {"skipped": {}, "seed": int(settings["seed"])}
    for value in parsed:
        try:
            _model, _ds, report, _state = _train_once(settings, None, global_len=value)
            rows.append((value, f"{report.mse:.6f}", f"{report.mae:.6f}"))
        except ConfigError as exc:
            meta["skipped"][str(value)] = str(exc)
    table = out_dir / "sweep.csv"
    with table.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["global_len", "mse", "mae"])
        writer.writerows(rows)
    (out_dir / "sweep_meta.json").write_text(json.dumps(meta, indent=2))
    click.echo(f"wrote {len(rows)} sweep rows to {table}")


def _parse_sweep_values(text: str) -> list[int]:
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse sweep values '{text}'") from None
    if not values:
        raise ConfigError("sweep needs at least one value")
    return sorted(set(values))


@main.command()
@click.option("--out", type=str, default="synthetic.csv")
@click.option("--n", type=int, default=2000)
@click.option("--channels", type=int, default=2)
@click.option("--noise", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
@_handle_errors
def synth(out, n, channels, noise, seed):
    """Write the synthetic multiscale preset to a CSV file."""
    ds = gen_synthetic(multiscale_preset(n=n, channels=channels,
                                         noise_std=noise, seed=seed))
    out_path = Path(out)
    if out_path.parent != Path("."):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, out_path)
    click.echo(f"wrote {ds.n} rows x {ds.d} channels to {out_path}")


@main.command(name="export-weights")
@click.option("--checkpoint", "checkpoint_stem", type=str, required=True)
@click.option("--out", type=str, default="weights")
@_handle_errors
def export_weights(checkpoint_stem, out):
    """Dump per-scale predictor weights as flat CSV tables."""
    params, _cfg, _meta = load_checkpoint(checkpoint_stem)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, marginal = export_predictor_weights(params)
    with (out_dir / "predictor_weights.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scale", "input_position", "horizon_position", "weight"])
        for scale, i, j, w in rows:
            writer.writerow([scale, i, j, repr(float(w))])
    with (out_dir / "predictor_weights_marginal.csv").open(
            "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scale", "input_position", "mean_abs_weight"])
        for scale, i, w in marginal:
            writer.writerow([scale, i, repr(float(w))])
    click.echo(f"wrote {len(rows)} weight rows to {out_dir}")


if __name__ == "__main__":
    main()
