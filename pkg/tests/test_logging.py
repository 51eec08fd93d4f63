import logging

import pytest

from tof_mcl import default_logging

logger = logging.getLogger('tof_mcl')


def test_info_formatter():
    logger.log(default_logging.INFO_LEVELS.cell, 'test')
    logger.log(default_logging.INFO_LEVELS.experiment, 'test')


def test_propagate_to_main():
    default_logging.propagate_to_main_logger()
    assert logger.propagate
    logger.log(default_logging.INFO_LEVELS.cell, 'test')
    default_logging.set_default_logging()
    assert not logger.propagate
    logger.log(default_logging.INFO_LEVELS.cell, 'test')


def test_level_names_are_registered():
    for name, level in default_logging.INFO_LEVELS._asdict().items():
        assert logging.getLevelName(level) == name.upper()


@pytest.mark.parametrize('value, expected', [
    ('', default_logging.DEFAULT_LEVEL),
    ('DEBUG', logging.DEBUG),
    ('warning', logging.WARNING),
    ('step', default_logging.INFO_LEVELS.step),
    ('Trial', default_logging.INFO_LEVELS.trial),
    ('12', 12),
])
def test_level_from_env(value, expected):
    assert default_logging.level_from_env(value) == expected


def test_unknown_level_falls_back(monkeypatch):
    monkeypatch.setenv(default_logging.ENV_VAR, 'chatty')
    with pytest.warns(UserWarning):
        level = default_logging.level_from_env()
    assert level == default_logging.DEFAULT_LEVEL


def test_env_var_sets_level(monkeypatch):
    monkeypatch.setenv(default_logging.ENV_VAR, 'WARNING')
    default_logging.set_default_logging()
    assert logger.level == logging.WARNING
    monkeypatch.delenv(default_logging.ENV_VAR)
    default_logging.set_default_logging()
    assert logger.level == default_logging.DEFAULT_LEVEL
