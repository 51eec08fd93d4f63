import pathlib
from typing import Any, Final, Iterable, Optional
import yaml  # type: ignore

from tof_mcl import exceptions
from tof_mcl import tracking


def load_yaml(path: pathlib.Path | str) -> dict[str, Any]:
    """
    Read a YAML mapping.

    Raises:
        ConfigFileError: if the file is unreadable or not a mapping.
    """
    path = pathlib.Path(path)
    try:
        with path.open() as config_file:
            config = yaml.safe_load(config_file)
    except (OSError, yaml.YAMLError) as err:
        raise exceptions.ConfigFileError(str(path), str(err)) from err
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise exceptions.ConfigFileError(str(path), 'not a mapping')
    return config


def check_keys(entry: dict[str, Any],
               allowed: Iterable[str],
               source: str) -> None:
    """Raise ConfigFileError when entry has keys outside allowed."""
    unknown = sorted(set(entry) - set(allowed))
    if unknown:
        raise exceptions.ConfigFileError(source, f'unknown keys {unknown}')
    return


def parse_switch(value: bool | str) -> bool:
    """Read on/off, true/false or yes/no as a boolean."""
    if isinstance(value, bool):
        return value
    switches = {'on': True, 'true': True, 'yes': True,
                'off': False, 'false': False, 'no': False}
    try:
        return switches[str(value).strip().lower()]
    except KeyError:
        raise ValueError(f'{value} is not on or off') from None


class PathManager:
    """
    Paths of the outputs of an experiment.

    Every file lives in exp_pardir/exp_name, created on first access.

    Args:
        exp_pardir: parent directory of the experiment folders.
        exp_name: the name of the experiment folder. Defaults to the name of
            the active experiment.

    Properties:
        directory: the folder of the experiment.
        config: the run configuration.
        metadata: the structured dump of the run settings.
        calibration: the fitted calibration.
        sweeps: the synthesized characterization sweeps.
        residuals: the residuals of the range fit.
        trace: the per-step errors of a localization run.
        samples: the readings of a localization run.
        results: the benchmark table.
        results_text: the benchmark table in its printed layout.
    """

    def __init__(self,
                 exp_pardir: pathlib.Path | str,
                 exp_name: Optional[str] = None) -> None:
        self.exp_pardir: Final = pathlib.Path(exp_pardir)
        self._exp_name = exp_name

    @property
    def exp_name(self) -> str:
        if self._exp_name is not None:
            return self._exp_name
        return tracking.Experiment.get_active_environment().exp_name

    @property
    def directory(self) -> pathlib.Path:
        directory = self.exp_pardir / self.exp_name
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    @property
    def config(self) -> pathlib.Path:
        return self.directory / 'config.yml'

    @property
    def metadata(self) -> pathlib.Path:
        return self.directory / 'metadata.yml'

    @property
    def calibration(self) -> pathlib.Path:
        return self.directory / 'calibration.txt'

    @property
    def sweeps(self) -> pathlib.Path:
        return self.directory / 'sweeps.csv'

    @property
    def residuals(self) -> pathlib.Path:
        return self.directory / 'residuals.csv'

    @property
    def trace(self) -> pathlib.Path:
        return self.directory / 'trace.csv'

    @property
    def samples(self) -> pathlib.Path:
        return self.directory / 'samples.csv'

    @property
    def results(self) -> pathlib.Path:
        return self.directory / 'results.csv'

    @property
    def results_text(self) -> pathlib.Path:
        return self.directory / 'results.txt'
