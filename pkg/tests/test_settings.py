import importlib

import pytest

import settings
from errors import SettingsError


@pytest.fixture
def problems(monkeypatch):
    found = []
    monkeypatch.setattr(settings, "ENV_PROBLEMS", found)
    return found


def test_env_int_falls_back_and_records(monkeypatch, problems):
    monkeypatch.setenv("QKDLAB_N_STARTS", "lots")
    assert settings._env_int("QKDLAB_N_STARTS", 20, 20) == 20
    assert "QKDLAB_N_STARTS" in problems[0]
    with pytest.raises(SettingsError):
        settings.check_environment()


def test_env_int_clamps_to_minimum(monkeypatch, problems):
    monkeypatch.setenv("QKDLAB_N_STARTS", "5")
    assert settings._env_int("QKDLAB_N_STARTS", 20, 20) == 20
    assert not problems
    settings.check_environment()


def test_env_float_range(monkeypatch, problems):
    monkeypatch.setenv("QKDLAB_Q_GRID_STEP", "0.002")
    assert settings._env_float("QKDLAB_Q_GRID_STEP", 0.001, 0.0, 0.5) == 0.002
    monkeypatch.setenv("QKDLAB_Q_GRID_STEP", "0")
    assert settings._env_float("QKDLAB_Q_GRID_STEP", 0.001, 0.0, 0.5) == 0.001
    assert len(problems) == 1


def test_default_grid_step(monkeypatch):
    monkeypatch.delenv("QKDLAB_Q_GRID_STEP", raising=False)
    importlib.reload(settings)
    assert settings.Q_GRID_STEP == 0.001


def test_configure_logging_rejects_unknown_level():
    with pytest.raises(SettingsError):
        settings.configure_logging("chatty")
