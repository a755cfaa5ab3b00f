import csv
import json

import pytest
from pydantic import ValidationError

from config import DEFAULT_TRAIN_DAYS, MIN_CLONER_SAMPLES, NS_PER_SECOND
from errors import ConfigError, DatasetError, FundamentalLoadError
from market.agents import twap_schedule, vwap_schedule
from market.exchange import BUY, SELL
from market.scenario import (AgentCounts, ScenarioConfig, build_fundamentals, build_volume_profile, day_directories,
                             run_scenario, taker_config)
from reporting.manifest import RunManifest


def read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def test_run_writes_one_directory_per_day(tiny_config, tmp_path):
    artifacts = run_scenario(tiny_config(), tmp_path)
    assert [p.name for p in day_directories(tmp_path)] == ["day_00", "day_01"]
    for day_dir in day_directories(tmp_path):
        manifest = RunManifest.read(day_dir)
        assert set(manifest.outputs) == {"orders.csv", "trades.csv", "l2.csv", "agents.csv"}
    assert len(artifacts.days) == 2
    assert "day_01/fundamental.csv" in artifacts.manifest.outputs


def test_same_seed_same_checksums(tiny_config, tmp_path):
    first = run_scenario(tiny_config(), tmp_path / "a")
    second = run_scenario(tiny_config(), tmp_path / "b")
    assert first.manifest.outputs == second.manifest.outputs
    assert [d.trace_hash for d in first.days] == [d.trace_hash for d in second.days]


def test_different_seed_changes_the_run(tiny_config, tmp_path):
    first = run_scenario(tiny_config(), tmp_path / "a")
    second = run_scenario(tiny_config(seed=4), tmp_path / "b")
    assert first.manifest.outputs != second.manifest.outputs


def test_parallel_days_match_serial_days(tiny_config, tmp_path):
    serial = run_scenario(tiny_config(), tmp_path / "serial", max_workers=1)
    parallel = run_scenario(tiny_config(), tmp_path / "parallel", max_workers=2)
    assert serial.manifest.outputs == parallel.manifest.outputs


def test_logs_stay_inside_the_session_and_noise_acts_once(tiny_config, tmp_path):
    cfg = tiny_config()
    run_scenario(cfg, tmp_path)
    for day_dir in day_directories(tmp_path):
        orders = read_rows(day_dir / "orders.csv")
        roster = read_rows(day_dir / "agents.csv")
        noise_ids = {row["agent_id"] for row in roster if row["strategy"] == "noise"}
        assert len(noise_ids) == cfg.counts.noise
        noise_rows = [row for row in orders if row["agent_id"] in noise_ids]
        assert len(noise_rows) <= cfg.counts.noise
        assert len({row["agent_id"] for row in noise_rows}) == len(noise_rows)
        for row in orders + read_rows(day_dir / "l2.csv"):
            assert cfg.session_open_ns <= int(row["time_ns"]) <= cfg.session_close_ns


def test_lone_noise_agent_finds_no_counterparty(tiny_config, tmp_path):
    counts = AgentCounts(noise=1, value=0, market_maker=0, twap=0, vwap=0, momentum=0, mean_reversion=0)
    artifacts = run_scenario(tiny_config(counts=counts, opening_book={"levels": 0}, days=1), tmp_path)
    assert artifacts.days[0].trade_count == 0
    assert artifacts.days[0].order_rows <= 1


def test_short_fundamental_fails_before_simulating(tiny_config, tmp_path):
    path = tmp_path / "f.csv"
    path.write_text(f"time_ns,price_ticks\n0,1000\n{100 * NS_PER_SECOND},1001\n")
    cfg = tiny_config(fundamental={"source": "csv", "csv_paths": [str(path)]})
    with pytest.raises(FundamentalLoadError):
        run_scenario(cfg, tmp_path / "run")
    assert not (tmp_path / "run" / "day_00").exists()


def test_ou_days_are_chained(tiny_config):
    series = build_fundamentals(tiny_config(fundamental={"mean_ticks": 1000, "vol": 5.0}))
    assert series[1].value_at(0) == series[0].value_at(600 * NS_PER_SECOND)


def test_takers_alternate_sides_across_days(tiny_config):
    cfg = tiny_config()
    assert taker_config(cfg, 0, 0).side == BUY
    assert taker_config(cfg, 0, 1).side == SELL
    assert taker_config(cfg, 1, 0).t_start == taker_config(cfg, 0, 0).t_end


class TestConfigValidation:
    def test_unknown_preset(self):
        with pytest.raises(ConfigError) as info:
            ScenarioConfig.preset("huge")
        assert info.value.field == "preset"

    def test_small_preset_counts(self):
        cfg = ScenarioConfig.preset("small")
        assert cfg.counts.noise == 500
        assert cfg.total_agents() == 529
        assert cfg.market_taker.parent_qty == 1440

    def test_small_preset_schedules_enough_taker_children(self):
        cfg = ScenarioConfig.preset("small")
        profile = build_volume_profile(cfg)
        children = 0
        for day in range(DEFAULT_TRAIN_DAYS):
            for k in range(cfg.counts.twap):
                children += sum(1 for _, qty in twap_schedule(taker_config(cfg, k, day)) if qty > 0)
            for k in range(cfg.counts.vwap):
                children += sum(1 for _, qty in vwap_schedule(taker_config(cfg, k, day), profile) if qty > 0)
        assert children >= 3 * MIN_CLONER_SAMPLES

    def test_preset_overrides_win(self):
        cfg = ScenarioConfig.preset("small", market_taker={"parent_qty": 48})
        assert cfg.market_taker.parent_qty == 48
        assert cfg.counts.twap == 3

    def test_invalid_file_names_the_field(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"counts": {"noise": -1}}))
        with pytest.raises(ConfigError) as info:
            ScenarioConfig.from_json_file(path)
        assert info.value.field == "counts.noise"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_json_file(tmp_path / "absent.json")

    def test_inverted_session(self, tiny_config):
        with pytest.raises(ValidationError):
            tiny_config(session_open_ns=10, session_close_ns=5)

    def test_taker_windows_must_fit(self, tiny_config):
        with pytest.raises(ValidationError):
            tiny_config(market_taker={"window_ns": 600 * NS_PER_SECOND})

    def test_empty_run_directory(self, tmp_path):
        with pytest.raises(DatasetError):
            day_directories(tmp_path)
