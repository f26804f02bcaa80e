"""Dataset loading, splitting, scaling, windowing, and synthesis."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tprnn.data import (
    SeriesDataset,
    SineComponent,
    SynthSpec,
    chronological_split,
    fit_apply_scaler,
    gen_synthetic,
    load_csv,
    make_windows,
    multiscale_preset,
    prepare,
    write_csv,
)
from tprnn.errors import ConfigError, DataError


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_small_file(self, tmp_path):
        path = _write(tmp_path, "date,a,b\n1,1.0,2.0\n2,3.5,4.0\n3,5.0,6.5\n")
        ds = load_csv(path)
        assert (ds.n, ds.d) == (3, 2)
        assert ds.channel_names == ["a", "b"]
        assert ds.values[1, 0] == 3.5

    def test_missing_cell_names_the_line(self, tmp_path):
        path = _write(tmp_path, "date,a,b\n1,1.0,2.0\n2,3.5\n")
        with pytest.raises(DataError, match="line 3"):
            load_csv(path)

    def test_non_numeric_cell_names_line_and_column(self, tmp_path):
        path = _write(tmp_path, "date,a,b\n1,1.0,2.0\n2,oops,4.0\n")
        with pytest.raises(DataError, match="line 3.*column 'a'"):
            load_csv(path)

    def test_duplicate_timestamp_rejected(self, tmp_path):
        path = _write(tmp_path, "date,a\n1,1.0\n1,2.0\n")
        with pytest.raises(DataError, match="duplicate timestamp"):
            load_csv(path)

    def test_empty_file_and_header_only(self, tmp_path):
        with pytest.raises(DataError, match="empty"):
            load_csv(_write(tmp_path, ""))
        with pytest.raises(DataError, match="no data rows"):
            load_csv(_write(tmp_path, "date,a\n", name="h.csv"))

    def test_no_channels_rejected(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, "date\n1\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(tmp_path / "nope.csv")

    def test_benchmark_shaped_file(self, tmp_path):
        # same row/column extents as the hourly transformer benchmark table
        n, d = 17420, 7
        rows = ["date," + ",".join(f"c{i}" for i in range(d))]
        vals = np.round(np.random.default_rng(0).standard_normal((n, d)), 4)
        rows += [f"t{i}," + ",".join(map(str, vals[i])) for i in range(n)]
        ds = load_csv(_write(tmp_path, "\n".join(rows) + "\n"))
        assert (ds.n, ds.d) == (17420, 7)
        split = chronological_split(ds, (0.6, 0.2, 0.2))
        assert split.bounds[0] == 10452

    def test_write_load_round_trip_is_exact(self, tmp_path):
        ds = gen_synthetic(SynthSpec(n=50, channels=3, noise_std=0.3, seed=5))
        path = tmp_path / "rt.csv"
        write_csv(ds, path)
        back = load_csv(path)
        assert np.array_equal(back.values, ds.values)
        assert back.channel_names == ds.channel_names


class TestSplit:
    def test_boundaries_70_80(self):
        ds = gen_synthetic(SynthSpec(n=100, channels=1))
        out = chronological_split(ds, (0.7, 0.1, 0.2))
        assert out.bounds == (70, 80)

    def test_degenerate_all_train_flags_empty_splits(self):
        ds = gen_synthetic(SynthSpec(n=10, channels=1))
        out = chronological_split(ds, (1.0, 0.0, 0.0), input_len=4, horizon=2)
        assert out.bounds == (10, 10)
        assert "val split is empty" in out.flags
        assert "test split is empty" in out.flags

    def test_ratios_must_sum_to_one(self):
        ds = gen_synthetic(SynthSpec(n=10, channels=1))
        with pytest.raises(ConfigError):
            chronological_split(ds, (0.5, 0.2, 0.2))

    def test_too_small_split_names_the_split(self):
        ds = gen_synthetic(SynthSpec(n=100, channels=1))
        with pytest.raises(ConfigError, match="val split"):
            chronological_split(ds, (0.7, 0.1, 0.2), input_len=8, horizon=4)

    def test_split_views_are_chronological_and_disjoint(self):
        ds = gen_synthetic(SynthSpec(n=50, channels=1))
        out = chronological_split(ds, (0.6, 0.2, 0.2))
        joined = np.concatenate([out.split_values(s) for s in ("train", "val", "test")])
        assert np.array_equal(joined, ds.values)


class TestScaler:
    def test_already_standardized_data_unchanged(self, rng):
        vals = rng.standard_normal((400, 2))
        vals = (vals - vals[:280].mean(0)) / vals[:280].std(0)
        ds = SeriesDataset(["a", "b"], vals)
        ds = chronological_split(ds, (0.7, 0.1, 0.2))
        out = fit_apply_scaler(ds)
        assert np.allclose(out.values, vals, atol=1e-12)

    def test_constant_channel_flagged_and_zeroed(self):
        vals = np.column_stack([np.ones(40), np.arange(40.0)])
        ds = chronological_split(SeriesDataset(["flat", "ramp"], vals), (0.5, 0.25, 0.25))
        out = fit_apply_scaler(ds)
        assert any("constant" in f for f in out.flags)
        assert np.allclose(out.split_values("train")[:, 0], 0.0)

    def test_denormalize_round_trip(self, rng):
        ds = gen_synthetic(SynthSpec(n=60, channels=2, noise_std=0.2, seed=3))
        out = fit_apply_scaler(chronological_split(ds, (0.7, 0.1, 0.2)))
        assert np.allclose(out.denormalize(out.values), ds.values, atol=1e-12)

    def test_statistics_come_from_train_rows_only(self, rng):
        ds = gen_synthetic(SynthSpec(n=100, channels=2, noise_std=0.5, seed=1))
        split = chronological_split(ds, (0.6, 0.2, 0.2))
        fitted = fit_apply_scaler(split)

        tampered_vals = split.values.copy()
        tampered_vals[split.bounds[1]:] += 1000.0  # vandalize the test rows
        tampered = SeriesDataset(ds.channel_names, tampered_vals,
                                 bounds=split.bounds, ratios=split.ratios)
        refit = fit_apply_scaler(tampered)
        assert np.array_equal(refit.scaler_mean, fitted.scaler_mean)
        assert np.array_equal(refit.scaler_std, fitted.scaler_std)


class TestWindows:
    def test_count_formula(self):
        ds = chronological_split(gen_synthetic(SynthSpec(n=5, channels=1)), (1.0, 0, 0))
        assert len(make_windows(ds, "train", 2, 1)) == 3

    def test_exactly_one_window(self):
        ds = chronological_split(gen_synthetic(SynthSpec(n=6, channels=1)), (1.0, 0, 0))
        assert len(make_windows(ds, "train", 4, 2)) == 1

    def test_first_target_starts_at_index_t(self):
        ds = chronological_split(gen_synthetic(SynthSpec(n=10, channels=1)), (1.0, 0, 0))
        w = make_windows(ds, "train", 3, 2)[0]
        assert np.array_equal(w.input, ds.values[:3])
        assert np.array_equal(w.target, ds.values[3:5])

    def test_stride_respected(self):
        ds = chronological_split(gen_synthetic(SynthSpec(n=20, channels=1)), (1.0, 0, 0))
        assert len(make_windows(ds, "train", 4, 2, stride=3)) == (20 - 6) // 3 + 1

    def test_too_small_split(self):
        ds = chronological_split(gen_synthetic(SynthSpec(n=20, channels=1)), (0.5, 0.25, 0.25))
        with pytest.raises(ConfigError):
            make_windows(ds, "val", 4, 2)

    @given(n=st.integers(30, 200), t=st.integers(1, 12), h=st.integers(1, 12))
    @settings(max_examples=40, deadline=None)
    def test_targets_never_cross_split_boundaries(self, n, t, h):
        ds = gen_synthetic(SynthSpec(n=n, channels=1))
        split = chronological_split(ds, (0.6, 0.2, 0.2))
        for name in ("train", "val", "test"):
            lo, hi = split.split_range(name)
            if hi - lo < t + h:
                continue
            for w in make_windows(split, name, t, h):
                # every window row must be a row of this split's slice
                block = np.vstack([w.input, w.target])
                assert block.shape[0] == t + h
                found = np.where((split.values[lo:hi] == block[0]).all(axis=1))[0]
                assert found.size >= 1

    @given(n=st.integers(40, 160), t=st.integers(2, 10), h=st.integers(1, 8))
    @settings(max_examples=30, deadline=None)
    def test_scaler_ignores_val_and_test_rows(self, n, t, h):
        rng = np.random.default_rng(n)
        vals = rng.standard_normal((n, 2))
        ds = chronological_split(SeriesDataset(["a", "b"], vals), (0.6, 0.2, 0.2))
        fitted = fit_apply_scaler(ds)
        mutated_vals = vals.copy()
        mutated_vals[ds.bounds[0]:] = 777.0
        mutated = fit_apply_scaler(
            SeriesDataset(["a", "b"], mutated_vals, bounds=ds.bounds))
        assert np.array_equal(fitted.scaler_mean, mutated.scaler_mean)
        assert np.array_equal(fitted.scaler_std, mutated.scaler_std)


class TestSynthetic:
    def test_noiseless_sinusoid_is_exactly_periodic(self):
        spec = SynthSpec(n=200, channels=1, components=(SineComponent(1.0, 24.0),))
        ds = gen_synthetic(spec)
        assert np.allclose(ds.values[:100, 0], ds.values[24:124, 0], atol=1e-9)

    def test_pure_trend_is_exact(self):
        spec = SynthSpec(n=50, channels=1, components=(), trend_slope=0.01)
        ds = gen_synthetic(spec)
        assert np.array_equal(ds.values[:, 0], 0.01 * np.arange(50.0))

    def test_seeded_noise_is_reproducible(self):
        a = gen_synthetic(SynthSpec(n=64, channels=2, noise_std=0.4, seed=11))
        b = gen_synthetic(SynthSpec(n=64, channels=2, noise_std=0.4, seed=11))
        assert np.array_equal(a.values, b.values)

    def test_channels_are_phase_shifted_copies(self):
        ds = gen_synthetic(SynthSpec(n=100, channels=2))
        assert not np.allclose(ds.values[:, 0], ds.values[:, 1])

    def test_preset_has_both_periods(self):
        spec = multiscale_preset()
        periods = sorted(c.period for c in spec.components)
        assert periods == [24.0, 168.0]
        assert spec.n == 2000 and spec.channels == 2

    def test_prepare_pipeline(self):
        ds = prepare(gen_synthetic(multiscale_preset(n=500)), (0.7, 0.1, 0.2), 24, 8)
        assert ds.scaler_mean is not None
        assert ds.bounds == (350, 400)
