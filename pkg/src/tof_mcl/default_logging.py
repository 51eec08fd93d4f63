import os
import sys
import logging
import warnings
from typing import NamedTuple, Optional

ENV_VAR = 'TOFMCL_LOG'


class InfoLevels(NamedTuple):
    progress_bar: int
    step: int
    trial: int
    cell: int
    calibration: int
    experiment: int


class InfoFormatter(logging.Formatter):

    def format(self, record: logging.LogRecord) -> str:
        self._style._fmt = self._info_fmt(record.levelno)
        return super().format(record)

    @staticmethod
    def _info_fmt(level_no: Optional[int] = None) -> str:
        if level_no == INFO_LEVELS.experiment:
            return '%(asctime)s\n%(message)s\n'
        if level_no is not None and level_no >= logging.WARNING:
            return '%(levelname)s: %(message)s\n'
        if level_no == INFO_LEVELS.step:
            if logger.level > INFO_LEVELS.progress_bar:
                return '%(message)s ...\r'
        return '%(message)s\n'


def level_from_env(value: Optional[str] = None) -> int:
    """
    Parse the verbosity requested through the TOFMCL_LOG variable.

    Args:
        value: a standard level name, one of the package level names or an
        integer. Defaults to the content of the environment variable.

    Returns:
        the numeric level, the default one if the value is not understood.
    """
    if value is None:
        value = os.environ.get(ENV_VAR, '')
    value = value.strip()
    if not value:
        return DEFAULT_LEVEL
    if value.lstrip('-').isdigit():
        return int(value)
    custom_levels = INFO_LEVELS._asdict()
    if value.lower() in custom_levels:
        return custom_levels[value.lower()]
    standard_level = logging.getLevelName(value.upper())
    if isinstance(standard_level, int):
        return standard_level
    warnings.warn(f'{ENV_VAR}={value} is not a logging level, '
                  f'using the default one.')
    return DEFAULT_LEVEL


def set_default_logging(level: Optional[int] = None) -> None:
    logger.handlers.clear()
    formatter = InfoFormatter()

    stdout_handler = logging.StreamHandler(sys.stdout)
    stdout_handler.terminator = ''
    stdout_handler.setFormatter(formatter)
    logger.addHandler(stdout_handler)
    logger.setLevel(level_from_env() if level is None else level)
    logger.propagate = False


def propagate_to_main_logger() -> None:
    logger.handlers.clear()
    logger.addHandler(logging.NullHandler())
    logger.setLevel(logging.NOTSET)
    logger.propagate = True


logger = logging.getLogger('tof_mcl')
INFO_LEVELS = InfoLevels(17, 19, 21, 23, 25, 27)
for _name, _level in INFO_LEVELS._asdict().items():
    logging.addLevelName(_level, _name.upper())
DEFAULT_LEVEL = INFO_LEVELS.cell
set_default_logging()
