"""
Scenario Module.

This module assembles the market of one trading week: it validates the scenario configuration,
prepares one fundamental slice per day, builds the exchange and the agent population for each
day, runs the days (in parallel when allowed) and writes the raw logs every downstream stage
reads.
"""

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from config import (AGENT_DEFAULTS, DEFAULT_COMPUTATION_DELAY_NS, DEFAULT_DAYS, FUNDAMENTAL_DEFAULTS, L2_DEPTH,
                    NY_SEATTLE_KM, OPENING_BOOK_DEFAULTS, PRESET_SETTINGS, PRESETS, SESSION_CLOSE_NS,
                    SESSION_OPEN_NS, SIGNAL_SPEED_KM_S, TICK_DOLLARS)
from errors import ConfigError, DatasetError, FundamentalLoadError
from market.agents import (DirectionalConfig, ExecutionOrderConfig, MarketMakerAgent, MarketMakerConfig,
                           MeanReversionAgent, MomentumAgent, NoiseAgent, NoiseAgentConfig, TwapAgent, ValueAgent,
                           ValueAgentConfig, VwapAgent)
from market.exchange import BUY, ORDER_LOG_HEADER, SELL, TRADE_HEADER, ExchangeAgent, l2_header
from market.fundamental import FundamentalSeries, VolumeProfile, generate_ou, load_csv, load_volume_profile_csv
from market.kernel import Kernel, LatencyModel
from reporting.manifest import RunManifest, sha256_text

logger = logging.getLogger(__name__)

ROSTER_HEADER = ["agent_id", "strategy", "archetype"]
DAY_FILES = ("orders.csv", "trades.csv", "l2.csv", "agents.csv")


class AgentCounts(BaseModel):
    noise: int = Field(default=PRESETS["default"]["noise"], ge=0)
    value: int = Field(default=PRESETS["default"]["value"], ge=0)
    market_maker: int = Field(default=PRESETS["default"]["market_maker"], ge=0)
    twap: int = Field(default=PRESETS["default"]["twap"], ge=0)
    vwap: int = Field(default=PRESETS["default"]["vwap"], ge=0)
    momentum: int = Field(default=PRESETS["default"]["momentum"], ge=0)
    mean_reversion: int = Field(default=PRESETS["default"]["mean_reversion"], ge=0)


class LatencyConfig(BaseModel):
    distance_km: float = Field(default=NY_SEATTLE_KM, ge=0)
    signal_speed_km_s: float = Field(default=SIGNAL_SPEED_KM_S, gt=0)
    computation_delay_ns: int = Field(default=DEFAULT_COMPUTATION_DELAY_NS, ge=0)
    jitter_ns: int = Field(default=0, ge=0)

    def to_model(self) -> LatencyModel:
        model = LatencyModel.from_distance(self.distance_km, self.signal_speed_km_s, self.computation_delay_ns)
        model.jitter_ns = self.jitter_ns
        return model


class FundamentalConfig(BaseModel):
    source: Literal["ou", "csv"] = FUNDAMENTAL_DEFAULTS["source"]
    mean_ticks: float = Field(default=FUNDAMENTAL_DEFAULTS["mean_ticks"], gt=0)
    reversion_rate: float = Field(default=FUNDAMENTAL_DEFAULTS["reversion_rate"], ge=0)
    vol: float = Field(default=FUNDAMENTAL_DEFAULTS["vol"], ge=0)
    dt_ns: int = Field(default=FUNDAMENTAL_DEFAULTS["dt_ns"], gt=0)
    csv_paths: list[str] = Field(default_factory=list)
    volume_profile_csv: Optional[str] = FUNDAMENTAL_DEFAULTS["volume_profile_csv"]

    @model_validator(mode="after")
    def check_paths(self):
        if self.source == "csv" and not self.csv_paths:
            raise ValueError("csv_paths must name at least one file when source is csv")
        return self


class OpeningBookConfig(BaseModel):
    levels: int = Field(default=OPENING_BOOK_DEFAULTS["levels"], ge=0)
    qty: int = Field(default=OPENING_BOOK_DEFAULTS["qty"], gt=0)


class MarketTakerSettings(BaseModel):
    parent_qty: int = Field(default=AGENT_DEFAULTS["market_taker"]["parent_qty"], gt=0)
    window_ns: int = Field(default=AGENT_DEFAULTS["market_taker"]["window_ns"], gt=0)
    n_slots: int = Field(default=AGENT_DEFAULTS["market_taker"]["n_slots"], ge=1)
    first_start_offset_ns: int = Field(default=AGENT_DEFAULTS["market_taker"]["first_start_offset_ns"], ge=0)


class ScenarioConfig(BaseModel):
    """
    Complete description of a simulated week; JSON scenario files validate against this model.
    """

    counts: AgentCounts = Field(default_factory=AgentCounts)
    session_open_ns: int = SESSION_OPEN_NS
    session_close_ns: int = SESSION_CLOSE_NS
    latency: LatencyConfig = Field(default_factory=LatencyConfig)
    fundamental: FundamentalConfig = Field(default_factory=FundamentalConfig)
    opening_book: OpeningBookConfig = Field(default_factory=OpeningBookConfig)
    noise: NoiseAgentConfig = Field(default_factory=NoiseAgentConfig)
    value: ValueAgentConfig = Field(default_factory=ValueAgentConfig)
    market_maker: MarketMakerConfig = Field(default_factory=MarketMakerConfig)
    market_taker: MarketTakerSettings = Field(default_factory=MarketTakerSettings)
    directional: DirectionalConfig = Field(default_factory=DirectionalConfig)
    days: int = Field(default=DEFAULT_DAYS, ge=1)
    seed: int = Field(default=0, ge=0)
    tick_dollars: float = Field(default=TICK_DOLLARS, gt=0)
    l2_depth: int = Field(default=L2_DEPTH, ge=1)
    trace: bool = False

    @model_validator(mode="after")
    def check_session(self):
        if self.session_open_ns >= self.session_close_ns:
            raise ValueError("session_open_ns must precede session_close_ns")
        takers = max(min(max(self.counts.twap, self.counts.vwap), 3), 1)
        last_end = (self.session_open_ns + self.market_taker.first_start_offset_ns
                    + takers * self.market_taker.window_ns)
        if (self.counts.twap or self.counts.vwap) and last_end > self.session_close_ns:
            raise ValueError("market-taker windows extend past the session close")
        return self

    @classmethod
    def preset(cls, name: str, **overrides) -> "ScenarioConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}", field="preset")
        return cls.model_validate({"counts": PRESETS[name]} | PRESET_SETTINGS.get(name, {}) | overrides)

    @classmethod
    def from_json_file(cls, path) -> "ScenarioConfig":
        """
        Loads a scenario file, turning validation failures into a ConfigError naming the field.
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"scenario file {path} does not exist", field="scenario")
        try:
            return cls.model_validate_json(path.read_text())
        except ValidationError as e:
            raise config_error_from(e)

    def config_hash(self) -> str:
        return sha256_text(self.model_dump_json())

    def total_agents(self) -> int:
        return sum(self.counts.model_dump().values())


def config_error_from(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "-"
    return ConfigError(first["msg"], field=field)


class DayResult(BaseModel):
    day: int
    directory: str
    event_count: int
    trace_hash: str
    order_rows: int
    trade_count: int
    wall_time_s: float


class RunArtifacts(BaseModel):
    out_dir: str
    days: list[DayResult]
    manifest: RunManifest


def day_seed_sequence(seed: int, day: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(day,))


def build_fundamentals(cfg: ScenarioConfig) -> list:
    """
    Prepares one fundamental series per day and checks that each covers the session.

    OU days are chained: each day starts where the previous one closed.

    Raises:
        FundamentalLoadError: If a series does not span the whole session.
    """
    session = (cfg.session_open_ns, cfg.session_close_ns)
    series = []
    if cfg.fundamental.source == "csv":
        paths = cfg.fundamental.csv_paths
        if 1 < len(paths) < cfg.days:
            raise FundamentalLoadError(f"{len(paths)} fundamental files for {cfg.days} days", field="csv_paths")
        for day in range(cfg.days):
            series.append(load_csv(paths[day] if len(paths) > 1 else paths[0]))
    else:
        initial = None
        for day in range(cfg.days):
            day_series = generate_ou(cfg.fundamental.mean_ticks, cfg.fundamental.reversion_rate, cfg.fundamental.vol,
                                     cfg.fundamental.dt_ns, session,
                                     np.random.SeedSequence(cfg.seed, spawn_key=(day, 2**32 - 2)), initial)
            initial = float(day_series.values[-1])
            series.append(day_series)

    for day, day_series in enumerate(series):
        if not day_series.covers(*session):
            raise FundamentalLoadError(
                f"fundamental for day {day} spans [{day_series.start}, {day_series.end}], shorter than the session",
                field="fundamental")
    return [day_series.slice(*session) for day_series in series]


def build_volume_profile(cfg: ScenarioConfig) -> VolumeProfile:
    if cfg.fundamental.volume_profile_csv:
        return load_volume_profile_csv(cfg.fundamental.volume_profile_csv, cfg.session_open_ns, cfg.session_close_ns)
    return VolumeProfile.u_shape(13, cfg.session_open_ns, cfg.session_close_ns)


def taker_config(cfg: ScenarioConfig, k: int, day: int) -> ExecutionOrderConfig:
    """Window and side of the k-th taker of a kind on a given day."""
    settings = cfg.market_taker
    t_start = cfg.session_open_ns + settings.first_start_offset_ns + (k % 3) * settings.window_ns
    return ExecutionOrderConfig(parent_qty=settings.parent_qty, side=BUY if (k + day) % 2 == 0 else SELL,
                                t_start=t_start, t_end=t_start + settings.window_ns, n_slots=settings.n_slots)


def build_population(cfg: ScenarioConfig, day: int, fundamental: FundamentalSeries, profile: VolumeProfile) -> list:
    """
    Creates the exchange followed by every trading agent, in a fixed order so ids are stable.
    """
    opening_levels = cfg.opening_book.levels
    population = [ExchangeAgent(fundamental.value_at(cfg.session_open_ns), opening_levels, cfg.opening_book.qty,
                                cfg.l2_depth)]
    counts = cfg.counts
    population += [MarketMakerAgent(cfg.market_maker, fundamental) for _ in range(counts.market_maker)]
    population += [ValueAgent(cfg.value, fundamental) for _ in range(counts.value)]
    population += [NoiseAgent(cfg.noise, cfg.session_open_ns, cfg.session_close_ns) for _ in range(counts.noise)]
    population += [TwapAgent(taker_config(cfg, k, day)) for k in range(counts.twap)]
    population += [VwapAgent(taker_config(cfg, k, day), profile) for k in range(counts.vwap)]
    population += [MomentumAgent(cfg.directional) for _ in range(counts.momentum)]
    population += [MeanReversionAgent(cfg.directional) for _ in range(counts.mean_reversion)]
    return population


def _write_rows(path: Path, header: list, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def run_day(cfg: ScenarioConfig, day: int, fundamental: FundamentalSeries, profile: VolumeProfile,
            out_dir: Path) -> DayResult:
    """
    Simulates one session and writes its logs to out_dir/day_NN/.

    Args:
        cfg (ScenarioConfig): The scenario.
        day (int): Day index, which also derives the day's seed.
        fundamental (FundamentalSeries): The day's fundamental slice.
        profile (VolumeProfile): Volume profile for VWAP agents.
        out_dir (Path): Root output directory.

    Returns:
        DayResult: Counts, the kernel trace hash and the day directory.
    """
    started = time.perf_counter()
    day_dir = Path(out_dir) / f"day_{day:02d}"
    day_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"Day {day}: simulating {cfg.total_agents()} agents")

    trace_file = open(day_dir / "trace.jsonl", "w") if cfg.trace else None
    try:
        kernel = Kernel(cfg.latency.to_model(), cfg.session_open_ns, cfg.session_close_ns,
                        day_seed_sequence(cfg.seed, day), trace_file)
        population = build_population(cfg, day, fundamental, profile)
        for agent in population:
            kernel.register(agent)
        event_count = kernel.run(cfg.session_close_ns)
    finally:
        if trace_file is not None:
            trace_file.close()

    exchange = population[0]
    _write_rows(day_dir / "orders.csv", ORDER_LOG_HEADER, exchange.order_log)
    _write_rows(day_dir / "trades.csv", TRADE_HEADER, (trade.as_row() for trade in exchange.trades))
    _write_rows(day_dir / "l2.csv", l2_header(cfg.l2_depth), (snapshot.as_row() for snapshot in exchange.l2_log))
    _write_rows(day_dir / "agents.csv", ROSTER_HEADER,
                ([agent.id, str(getattr(agent.strategy, "value", agent.strategy)),
                  agent.archetype.value if agent.archetype is not None else ""] for agent in population))

    manifest = RunManifest(command=f"simulate day {day}", config_hash=cfg.config_hash(), seed=cfg.seed)
    for name in DAY_FILES + (("trace.jsonl",) if cfg.trace else ()):
        manifest.add_output(day_dir / name, day_dir)
    result = DayResult(day=day, directory=str(day_dir), event_count=event_count, trace_hash=kernel.trace_hash,
                       order_rows=len(exchange.order_log), trade_count=len(exchange.trades),
                       wall_time_s=round(time.perf_counter() - started, 3))
    manifest.wall_time_s = result.wall_time_s
    manifest.write(day_dir)
    logger.info(f"Day {day}: {event_count} events, {result.order_rows} orders, {result.trade_count} trades")
    return result


def run_scenario(cfg: ScenarioConfig, out_dir, max_workers: int = 1) -> RunArtifacts:
    """
    Runs every day of the scenario and writes the run-level manifest.

    Args:
        cfg (ScenarioConfig): The validated scenario.
        out_dir (str | Path): Output directory, created if needed.
        max_workers (int): Upper bound on days simulated concurrently.

    Returns:
        RunArtifacts: Per-day results and the run manifest.
    """
    started = time.perf_counter()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fundamentals = build_fundamentals(cfg)
    profile = build_volume_profile(cfg)
    (out_dir / "scenario.json").write_text(cfg.model_dump_json(indent=2))

    if max_workers > 1 and cfg.days > 1:
        with ProcessPoolExecutor(max_workers=min(max_workers, cfg.days)) as pool:
            futures = [pool.submit(run_day, cfg, day, fundamentals[day], profile, out_dir) for day in range(cfg.days)]
            days = [future.result() for future in futures]
    else:
        days = [run_day(cfg, day, fundamentals[day], profile, out_dir) for day in range(cfg.days)]

    for day, series in enumerate(fundamentals):
        series.to_csv(out_dir / f"day_{day:02d}" / "fundamental.csv")

    manifest = RunManifest(command="simulate", config_hash=cfg.config_hash(), seed=cfg.seed)
    manifest.add_output(out_dir / "scenario.json", out_dir)
    for result in days:
        day_dir = Path(result.directory)
        for name in DAY_FILES + ("fundamental.csv",):
            manifest.add_output(day_dir / name, out_dir)
    manifest.wall_time_s = round(time.perf_counter() - started, 3)
    manifest.write(out_dir)
    return RunArtifacts(out_dir=str(out_dir), days=days, manifest=manifest)


def day_directories(run_dir) -> list:
    """Returns the day_NN directories of a simulation run in day order."""
    run_dir = Path(run_dir)
    directories = sorted(path for path in run_dir.glob("day_*") if path.is_dir())
    if not directories:
        raise DatasetError(f"no day directories under {run_dir}", field="run")
    return directories
