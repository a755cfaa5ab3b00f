import pytest

from errors import ConfigError
from settings_manager import THREADS_VARIABLE, SettingsManager


def test_workers_default_to_one(monkeypatch):
    monkeypatch.delenv(THREADS_VARIABLE, raising=False)
    assert SettingsManager().max_workers() == 1


def test_workers_come_from_the_environment(monkeypatch):
    monkeypatch.setenv(THREADS_VARIABLE, "4")
    assert SettingsManager().max_workers() == 4


@pytest.mark.parametrize("raw", ["0", "-2", "many"])
def test_invalid_worker_counts(monkeypatch, raw):
    monkeypatch.setenv(THREADS_VARIABLE, raw)
    with pytest.raises(ConfigError) as info:
        SettingsManager().max_workers()
    assert info.value.field == THREADS_VARIABLE


def test_missing_setting_without_default(monkeypatch):
    monkeypatch.delenv("LOB_ARENA_UNSET", raising=False)
    with pytest.raises(ConfigError):
        SettingsManager().get_setting("LOB_ARENA_UNSET")


def test_one_line_error_format():
    error = ConfigError("expected a positive\ninteger", field="days")
    assert error.one_line() == "error field=days message=expected a positive integer"
    assert ConfigError("boom").one_line() == "error field=- message=boom"
