import numpy as np
import pytest

from errors import FundamentalLoadError
from market.fundamental import (FundamentalSeries, ObservationModel, VolumeProfile, generate_ou, load_csv,
                                load_volume_profile_csv, observe)


def write(path, text):
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_two_rows(self, tmp_path):
        series = load_csv(write(tmp_path / "f.csv", "time_ns,price_ticks\n0,1000\n10,1001\n"))
        assert len(series) == 2
        assert series.value_at(10) == 1001

    def test_duplicate_timestamp_names_the_row(self, tmp_path):
        with pytest.raises(FundamentalLoadError, match="row 2"):
            load_csv(write(tmp_path / "f.csv", "time_ns,price_ticks\n0,1000\n0,1001\n"))

    def test_non_positive_price(self, tmp_path):
        with pytest.raises(FundamentalLoadError, match="row 1"):
            load_csv(write(tmp_path / "f.csv", "time_ns,price_ticks\n0,0\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(FundamentalLoadError):
            load_csv(write(tmp_path / "f.csv", ""))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FundamentalLoadError) as info:
            load_csv(tmp_path / "absent.csv")
        assert info.value.field == "csv_paths"


class TestSeries:
    def test_value_between_points_uses_previous_point(self):
        series = FundamentalSeries([0, 100], [1000, 1010])
        assert series.value_at(50) == 1000
        assert series.value_at(500) == 1010

    def test_value_before_start_raises(self):
        with pytest.raises(ValueError):
            FundamentalSeries([10], [1000]).value_at(5)

    def test_slice_keeps_the_point_before_the_window(self):
        series = FundamentalSeries([0, 10, 20, 30], [1, 2, 3, 4])
        window = series.slice(15, 20)
        assert window.value_at(15) == 2
        assert window.value_at(20) == 3
        assert window.end == 20


class TestOrnsteinUhlenbeck:
    def test_zero_volatility_from_the_mean_is_constant(self):
        series = generate_ou(1000, 0.01, 0.0, 10, (0, 1_000), seed=1)
        assert set(series.values.tolist()) == {1000}

    def test_zero_volatility_decays_toward_the_mean(self):
        series = generate_ou(1000, 1e7, 0.0, 10, (0, 1_000), seed=1, initial=1100)
        assert series.values[0] == 1100
        assert np.all(np.diff(series.values) <= 0)
        assert series.values[-1] == 1000

    def test_same_seed_same_series(self):
        a = generate_ou(1000, 0.001, 2.0, 10**9, (0, 60 * 10**9), seed=9)
        b = generate_ou(1000, 0.001, 2.0, 10**9, (0, 60 * 10**9), seed=9)
        assert np.array_equal(a.values, b.values)

    def test_grid_covers_the_session_end(self):
        series = generate_ou(1000, 0.0, 1.0, 7, (0, 20), seed=2)
        assert series.times.tolist() == [0, 7, 14, 20]


class TestObservation:
    def test_noiseless_observation_is_exact(self):
        series = FundamentalSeries([0], [1234])
        assert observe(series, 5, ObservationModel(0.0), np.random.default_rng(0)) == 1234

    def test_noisy_observation_is_unbiased(self):
        series = FundamentalSeries([0], [1000])
        rng = np.random.default_rng(0)
        draws = [observe(series, 0, ObservationModel(100.0), rng) for _ in range(5_000)]
        assert abs(np.mean(draws) - 1000) < 1.0

    def test_negative_variance_is_rejected(self):
        with pytest.raises(ValueError):
            ObservationModel(-1.0)


class TestVolumeProfile:
    def test_u_shape_edges_are_three_times_the_centre(self):
        profile = VolumeProfile.u_shape(13, 0, 13)
        assert profile.weights.sum() == pytest.approx(1.0)
        assert profile.weights[0] == pytest.approx(3 * profile.weights[6])

    def test_mass_between_counts_partial_buckets(self):
        profile = VolumeProfile([0.75, 0.25], 0, 100)
        assert profile.weight_between(0, 100) == pytest.approx(1.0)
        assert profile.weight_between(25, 75) == pytest.approx(0.375 + 0.125)
        assert profile.weight_between(40, 60) == pytest.approx(0.15 + 0.05)
        assert profile.weight_between(-50, 0) == 0.0

    def test_csv_profile(self, tmp_path):
        path = write(tmp_path / "v.csv", "bucket_index,weight\n0,1\n1,3\n")
        profile = load_volume_profile_csv(path, 0, 10)
        assert profile.weights.tolist() == [0.25, 0.75]

    def test_csv_profile_with_gap(self, tmp_path):
        with pytest.raises(FundamentalLoadError):
            load_volume_profile_csv(write(tmp_path / "v.csv", "bucket_index,weight\n0,1\n2,3\n"), 0, 10)

    def test_all_zero_weights_are_rejected(self):
        with pytest.raises(ValueError):
            VolumeProfile([0.0, 0.0], 0, 10)
