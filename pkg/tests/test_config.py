# tests/test_config.py
import pytest

from config_loader import DEFAULT_CONFIG, load_config
from hvselect.errors import ConfigError
from utils.runconfig import RunConfig


def test_defaults_without_env_file(tmp_path):
    assert load_config(str(tmp_path / "missing.env"), environ={}) == DEFAULT_CONFIG


def test_env_file_and_environment(tmp_path):
    env = tmp_path / ".env"
    env.write_text("THREADS=4\nENABLE_LOGGER=yes\nAVAILABILITY_THRESHOLD=0.75\nUNRELATED=1\n")

    config = load_config(str(env), environ={"THREADS": "2", "PATH": "/bin"})

    assert config["THREADS"] == 2
    assert config["ENABLE_LOGGER"] is True
    assert config["AVAILABILITY_THRESHOLD"] == 0.75
    assert "UNRELATED" not in config and "PATH" not in config


@pytest.mark.parametrize("environ", [
    {"THREADS": "many"},
    {"ENABLE_LOGGER": "maybe"},
    {"AVAILABILITY_THRESHOLD": "1.5"},
    {"THREADS": "-1"},
])
def test_invalid_values(tmp_path, environ):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.env"), environ=environ)


def test_threads_parallelize_validation_splits():
    config = RunConfig(panel="panel.csv", hierarchy="hierarchy.json", threads=4, window_years=3)
    validation = config.validation_config

    assert validation.workers == 4
    assert validation.hvs.workers == 1
    assert validation.window_years == 3
    assert config.hvs.workers == 4

    assert RunConfig(panel="panel.csv", hierarchy="hierarchy.json").validation_config.workers == 1
