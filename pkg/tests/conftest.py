import pytest

from config import NS_PER_SECOND
from market.kernel import Agent
from market.scenario import AgentCounts, ScenarioConfig, run_scenario


class RecordingAgent(Agent):
    """Records every wakeup and message it receives."""

    def __init__(self):
        super().__init__()
        self.wakeups = []
        self.messages = []

    def wakeup(self, t):
        self.wakeups.append(t)

    def receive_message(self, t, sender, message):
        self.messages.append((t, sender, message))


def make_tiny_config(**overrides) -> ScenarioConfig:
    """A ten-minute market with every strategy present, small enough for unit tests."""
    settings = {
        "counts": AgentCounts(noise=20, value=2, market_maker=1, twap=1, vwap=1, momentum=1, mean_reversion=1),
        "session_open_ns": 0,
        "session_close_ns": 600 * NS_PER_SECOND,
        "value": {"lambda_a_ns": 5 * NS_PER_SECOND},
        "market_maker": {"lambda_a_ns": 2 * NS_PER_SECOND},
        "market_taker": {"window_ns": 60 * NS_PER_SECOND, "first_start_offset_ns": 30 * NS_PER_SECOND,
                         "n_slots": 4, "parent_qty": 40},
        "directional": {"short_window": 2, "long_window": 3, "cadence_ns": 5 * NS_PER_SECOND},
        "fundamental": {"mean_ticks": 1000},
        "days": 2,
        "seed": 3,
    }
    settings.update(overrides)
    return ScenarioConfig.model_validate(settings)


@pytest.fixture
def recording_agent_cls():
    return RecordingAgent


@pytest.fixture
def tiny_config():
    return make_tiny_config


@pytest.fixture(scope="session")
def five_day_run(tmp_path_factory):
    """A five-day run of the tiny market, shared by the dataset and pipeline tests."""
    out_dir = tmp_path_factory.mktemp("run")
    run_scenario(make_tiny_config(days=5), out_dir)
    return out_dir
