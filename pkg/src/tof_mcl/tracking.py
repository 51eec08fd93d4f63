from __future__ import annotations

import datetime
import warnings
from typing import TYPE_CHECKING, Any, ClassVar, Final, Optional
import yaml  # type: ignore

from tof_mcl import default_logging
from tof_mcl import repr_utils
from tof_mcl.default_logging import logger

if TYPE_CHECKING:
    from tof_mcl import io_utils

TIME_FORMAT: Final = '%Y-%m-%d %H:%M:%S'


class Experiment:
    """
    A characterization, localization or benchmark run.

    Only one run is active at a time; output paths default to its name.

    Args:
        exp_name: the name of the run, also its output folder.
        config: the settings as read from the command line and the files.
        record_settings: whether add_metadata stores anything.
        max_items: containers and arrays in the metadata are cut to this.

    Attributes:
        metadata: structured representation of the objects of the run.
        started: when the run was last activated.
    """
    active_environment: ClassVar[Optional[Experiment]] = None
    default_prefix: ClassVar[str] = 'run_'
    unnamed_runs: ClassVar[int] = 0

    def __init__(self,
                 exp_name: str,
                 config: Optional[dict[str, Any]] = None,
                 record_settings: bool = True,
                 max_items: int = 9) -> None:
        self.exp_name: Final = exp_name
        self.config = dict(config or {})
        self.record_settings = record_settings
        self.max_items = max_items
        self.metadata: dict[str, Any] = {}
        self.started: Optional[datetime.datetime] = None

    def run(self) -> None:
        previous = type(self).active_environment
        if previous is not None and previous is not self:
            previous.stop()
        type(self).active_environment = self
        self.started = datetime.datetime.now()
        logger.log(default_logging.INFO_LEVELS.experiment,
                   'Run %(name)s started.',
                   {'name': self.exp_name})
        return

    def stop(self) -> None:
        if type(self).active_environment is self:
            type(self).active_environment = None
        logger.log(default_logging.INFO_LEVELS.experiment,
                   'Run %(name)s stopped.',
                   {'name': self.exp_name})
        return

    def __repr__(self) -> str:
        return f'{type(self).__name__}(exp_name={self.exp_name!r})'

    def __enter__(self) -> Experiment:
        self.run()
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.stop()

    def dump(self, paths: io_utils.PathManager) -> None:
        """Write config.yml, when there is a config, and metadata.yml."""
        if self.config:
            with paths.config.open('w') as config_file:
                yaml.safe_dump(self.config, config_file, sort_keys=False)
        header: dict[str, Any] = {'run': self.exp_name}
        if self.started is not None:
            header['timestamp'] = self.started.strftime(TIME_FORMAT)
        with paths.metadata.open('w') as metadata_file:
            yaml.dump(header | self.metadata,
                      metadata_file,
                      Dumper=repr_utils.MetadataDumper,
                      sort_keys=False)
        logger.debug('Metadata of %(name)s written in %(path)s.',
                     {'name': self.exp_name, 'path': paths.metadata})
        return

    @classmethod
    def get_active_environment(cls) -> Experiment:
        """The active run, or a new unnamed one."""
        if cls.active_environment is None:
            cls.unnamed_runs += 1
            cls(f'{cls.default_prefix}{cls.unnamed_runs}').run()
        assert cls.active_environment is not None
        return cls.active_environment


def extract_metadata(objects: dict[str, Any],
                     max_items: int = 10) -> dict[str, Any]:
    try:
        return {name: repr_utils.struc_repr(value, max_size=max_items)
                for name, value in objects.items()}
    except RecursionError:
        warnings.warn(f'Metadata of {", ".join(objects)} is self-referencing '
                      'and was skipped.')
        return {}


def add_metadata(exp: Experiment, objects: dict[str, Any]) -> None:
    if exp.record_settings:
        exp.metadata |= extract_metadata(objects, exp.max_items)
    return
