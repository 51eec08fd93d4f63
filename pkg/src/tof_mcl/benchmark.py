"""
Localization benchmark over a grid of (sensor count, sample count) cells.

The data of a benchmark is synthesized once, from the 'data' stream of the
master seed. Each trial then draws its initial center and its filter stream
from seeds hashed from the master seed, the method and the cell, so a single
cell can be rerun in isolation with identical results.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
import pathlib
from typing import Any, Final, Optional, Sequence
import pandas as pd

from tof_mcl import data_types
from tof_mcl import exceptions
from tof_mcl import io_utils
from tof_mcl import mcl
from tof_mcl import progress
from tof_mcl import protocols
from tof_mcl import seeding
from tof_mcl import sensor_model
from tof_mcl import simulator
from tof_mcl import structures
from tof_mcl.default_logging import logger
from tof_mcl.default_logging import INFO_LEVELS

RESULT_COLUMNS: Final = ('method',
                         'sensors',
                         'samples',
                         'ex_mean',
                         'ex_std',
                         'eg_mean',
                         'eg_std',
                         'status')
STATUS_OK: Final = 'ok'
PRESET_SPECS: Final[dict[str, dict[str, Any]]] = {
    'crate-samples': {'scene': 'crate',
                      'grid': {'sensors': [1], 'samples': [2, 4, 6, 8, 10]}},
    'crate-sensors': {'scene': 'crate',
                      'grid': {'sensors': [2, 3, 4], 'samples': [4, 6]}},
    'statue-grid': {'scene': 'statue',
                    'grid': {'sensors': [1, 2], 'samples': [4, 6]}},
}
_SPEC_KEYS: Final = ('preset',
                     'scene',
                     'methods',
                     'cells',
                     'grid',
                     'trials',
                     'seed',
                     'frames_per_sample',
                     'noise',
                     'calibration',
                     'workers',
                     'filter')


@dataclasses.dataclass(frozen=True)
class BenchmarkSpec:
    """
    What a benchmark runs.

    Attributes:
        scene: a preset scene name or the path of a scene file.
        methods: the likelihoods compared.
        cells: (sensor count, sample count) pairs, in output order.
        trials: filter runs per cell and method.
        seed: master seed of every random stream.
        frames_per_sample: frames acquired at each robot pose.
        noise_on: whether the synthesized readings are noisy.
        calibration: file of the calibration used by the likelihoods.
            Defaults to the characterized one.
        workers: cells evaluated concurrently.
        filter: settings of the particle filter.
    """
    scene: str = 'crate'
    methods: tuple[data_types.Method, ...] = tuple(data_types.Method)
    cells: tuple[tuple[int, int], ...] = ((1, 2), (1, 4), (1, 6), (1, 8),
                                          (1, 10))
    trials: int = 5
    seed: int = 0
    frames_per_sample: int = 1
    noise_on: bool = True
    calibration: Optional[str] = None
    workers: int = 1
    filter: mcl.FilterConfig = dataclasses.field(
        default_factory=mcl.FilterConfig
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, 'methods', tuple(
            data_types.Method.parse(method) for method in self.methods
        ))
        object.__setattr__(self, 'cells', tuple(
            (int(sensors), int(samples)) for sensors, samples in self.cells
        ))
        if not self.methods:
            raise exceptions.ConfigFileError('benchmark', 'no method')
        if not self.cells:
            raise exceptions.ConfigFileError('benchmark', 'no cell')
        if self.trials < 1:
            raise exceptions.ConfigFileError('benchmark',
                                             'trials must be at least 1')
        if self.frames_per_sample < 1:
            raise exceptions.ConfigFileError(
                'benchmark', 'frames_per_sample must be at least 1'
            )
        if self.workers < 1:
            raise exceptions.ConfigFileError('benchmark',
                                             'workers must be at least 1')

    @classmethod
    def from_dict(cls,
                  entry: dict[str, Any],
                  source: str = 'benchmark') -> BenchmarkSpec:
        """
        Read a benchmark description.

        A preset name fills scene and grid, explicit keys override it. The
        grid is either a list of [sensors, samples] cells or a mapping of
        sensor counts and sample counts whose product is taken.

        Raises:
            ConfigFileError: if a key is unknown or a value malformed.
        """
        io_utils.check_keys(entry, _SPEC_KEYS, source)
        entry = dict(entry)
        preset = entry.pop('preset', None)
        if preset is not None:
            if preset not in PRESET_SPECS:
                raise exceptions.ConfigFileError(
                    source, f'unknown preset {preset}'
                )
            entry = PRESET_SPECS[preset] | entry
        settings: dict[str, Any] = {}
        try:
            if 'grid' in entry:
                grid = entry['grid']
                settings['cells'] = tuple((sensors, samples)
                                          for sensors in grid['sensors']
                                          for samples in grid['samples'])
            if 'cells' in entry:
                settings['cells'] = tuple(tuple(cell)
                                          for cell in entry['cells'])
            if 'methods' in entry:
                settings['methods'] = tuple(entry['methods'])
            if 'noise' in entry:
                settings['noise_on'] = io_utils.parse_switch(entry['noise'])
            if 'filter' in entry:
                settings['filter'] = mcl.FilterConfig.from_dict(
                    entry['filter'] or {}, f'{source}: filter'
                )
            for key in ('scene', 'calibration'):
                if key in entry:
                    settings[key] = str(entry[key])
            for key in ('trials', 'seed', 'frames_per_sample', 'workers'):
                if key in entry:
                    settings[key] = int(entry[key])
            return cls(**settings)
        except (KeyError, TypeError, ValueError) as err:
            if type(err).__module__ == exceptions.__name__:
                raise
            raise exceptions.ConfigFileError(source, str(err)) from err

    @classmethod
    def load(cls, source: data_types.PathLike) -> BenchmarkSpec:
        """A preset name or the path of a YAML description."""
        if str(source) in PRESET_SPECS:
            return cls.from_dict({'preset': str(source)})
        return cls.from_dict(io_utils.load_yaml(source), str(source))

    def check_feasible(self, scene: simulator.Scene) -> None:
        """
        Raises:
            InfeasibleCellError: if a cell asks for more sensors than mounts
                or more samples than robot poses.
        """
        for sensors, samples in self.cells:
            if not (1 <= sensors <= scene.num_mounts
                    and 1 <= samples <= scene.num_poses):
                raise exceptions.InfeasibleCellError(sensors,
                                                     samples,
                                                     scene.num_mounts,
                                                     scene.num_poses)
        return

    def likelihood_noise(self) -> sensor_model.NoiseModel:
        if self.calibration is None:
            return sensor_model.NoiseModel()
        return sensor_model.NoiseModel.load(self.calibration)


def resolve_scene(reference: data_types.PathLike) -> simulator.Scene:
    """A preset scene by name, otherwise a scene file."""
    if str(reference) in simulator.PRESETS:
        return simulator.PRESETS[str(reference)]()
    return simulator.load_scene(reference)


def check_cell(scene: simulator.Scene, sensors: int, samples: int) -> None:
    BenchmarkSpec(cells=((sensors, samples),)).check_feasible(scene)
    return


def collect_data(scene: simulator.Scene,
                 samples: int,
                 streams: protocols.GeneratorFactory,
                 *,
                 noise_on: bool = True,
                 frames_per_sample: int = 1,
                 config: Optional[mcl.FilterConfig] = None
                 ) -> list[simulator.DataSample]:
    """Readings of all the mounts at the first robot poses."""
    config = mcl.FilterConfig() if config is None else config
    noise = sensor_model.NoiseModel()
    if not noise_on:
        noise = noise.noiseless()
    return simulator.collect_samples(scene,
                                     noise,
                                     streams('data'),
                                     pose_indices=range(samples),
                                     frames_per_sample=frames_per_sample,
                                     device=config.device,
                                     chunk_size=config.chunk_size)


def cell_samples(data: Sequence[simulator.DataSample],
                 sensors: int,
                 samples: int) -> list[simulator.DataSample]:
    """The data of the first robot poses, seen by the first sensors."""
    return [sample.restricted(sensors) for sample in data
            if sample.robot_pose_index < samples]


def run_trial(scene: simulator.Scene,
              data: Sequence[simulator.DataSample],
              method: data_types.Method,
              noise: sensor_model.NoiseModel,
              config: mcl.FilterConfig,
              streams: protocols.GeneratorFactory,
              sensors: int,
              samples: int,
              trial: int) -> mcl.LocalizationResult:
    """
    One filter run of a cell.

    The initial center depends on the cell and the trial only, so that every
    method starts from the same hypothesis.
    """
    if config.init_center is None:
        center = mcl.draw_init_center(scene.object_truth,
                                      config,
                                      streams('init', sensors, samples, trial))
        config = dataclasses.replace(config, init_center=center)
    model = sensor_model.LikelihoodModel.for_method(method, noise)
    rng = streams(method.value, sensors, samples, trial)
    return mcl.run_localization(scene,
                                cell_samples(data, sensors, samples),
                                model,
                                config,
                                rng)


@dataclasses.dataclass(frozen=True, eq=False)
class ResultTable:
    """
    Mean and standard deviation of the final errors of each cell and method.

    Attributes:
        frame: one row per cell and method, columns as RESULT_COLUMNS.
    """
    frame: pd.DataFrame

    def __post_init__(self) -> None:
        if tuple(self.frame.columns) != RESULT_COLUMNS:
            raise exceptions.ConfigFileError(
                'result table', f'columns {list(self.frame.columns)}'
            )

    def __len__(self) -> int:
        return len(self.frame)

    def save(self, path: data_types.PathLike) -> None:
        self.frame.to_csv(path, index=False)
        return

    @classmethod
    def load(cls, path: data_types.PathLike) -> ResultTable:
        frame = pd.read_csv(path,
                            float_precision='round_trip',
                            keep_default_na=False,
                            na_values=['NaN', 'nan', ''])
        return cls(frame)

    def cell(self,
             method: str | data_types.Method,
             sensors: int,
             samples: int) -> pd.Series:
        method = data_types.Method.parse(method).value.upper()
        frame = self.frame
        row = frame[(frame['method'] == method)
                    & (frame['sensors'] == sensors)
                    & (frame['samples'] == samples)]
        return row.iloc[0]

    def to_text(self) -> str:
        """
        Methods against cells, "mean ± std", lowest mean per cell starred.
        """
        blocks = []
        for label, mean, std in (('e_x (m)', 'ex_mean', 'ex_std'),
                                 ('e_gamma (deg)', 'eg_mean', 'eg_std')):
            pivot: dict[str, dict[str, str]] = {}
            cells = self.frame.groupby(['sensors', 'samples'], sort=False)
            for (sensors, samples), group in cells:
                column = f'{sensors} ToF / {samples} samples'
                lowest = group.loc[group['status'] == STATUS_OK, mean].min()
                entries: dict[str, str] = {}
                for _, row in group.iterrows():
                    if row['status'] != STATUS_OK:
                        entries[row['method']] = 'failed'
                        continue
                    star = '*' if row[mean] == lowest else ''
                    entries[row['method']] = (
                        f'{row[mean]:.4f} ± {row[std]:.4f}{star}'
                    )
                pivot[column] = entries
            table = pd.DataFrame(pivot)
            blocks.append(f'{label}\n{table.to_string()}')
        return '\n\n'.join(blocks) + '\n'


def _cell_row(method: data_types.Method,
              sensors: int,
              samples: int,
              errors: Optional[structures.ErrorAggregate],
              status: str) -> dict[str, Any]:
    row: dict[str, Any] = {'method': method.value.upper(),
                           'sensors': sensors,
                           'samples': samples}
    if errors is None:
        return row | {'ex_mean': math.nan, 'ex_std': math.nan,
                      'eg_mean': math.nan, 'eg_std': math.nan,
                      'status': status}
    mean = errors.reduce()
    std = errors.std()
    return row | {'ex_mean': mean['e_x'], 'ex_std': std['e_x'],
                  'eg_mean': mean['e_gamma'], 'eg_std': std['e_gamma'],
                  'status': status}


def run_benchmark(spec: BenchmarkSpec,
                  scene: Optional[simulator.Scene] = None) -> ResultTable:
    """
    Run every trial of every cell and method.

    A cell whose trials raise is recorded with NaN errors and the message as
    status, and the others still run. Rows follow the order of the cells,
    then of the methods, whatever the number of workers.

    Raises:
        InfeasibleCellError: if a cell does not fit the scene.
    """
    scene = resolve_scene(spec.scene) if scene is None else scene
    spec.check_feasible(scene)
    streams = seeding.StreamFactory(spec.seed)
    noise = spec.likelihood_noise()
    data = collect_data(scene,
                        max(samples for _, samples in spec.cells),
                        streams,
                        noise_on=spec.noise_on,
                        frames_per_sample=spec.frames_per_sample,
                        config=spec.filter)
    jobs = [(method, sensors, samples)
            for sensors, samples in spec.cells
            for method in spec.methods]

    def run_job(job: tuple[data_types.Method, int, int]) -> dict[str, Any]:
        method, sensors, samples = job
        errors = structures.ErrorAggregate()
        try:
            for trial in range(spec.trials):
                result = run_trial(scene, data, method, noise, spec.filter,
                                   streams, sensors, samples, trial)
                errors += {'e_x': result.error.e_x,
                           'e_gamma': result.error.e_gamma}
        except (ValueError, IndexError, KeyError, RuntimeError) as err:
            logger.warning('%(method)s with %(sensors)d sensor(s) and '
                           '%(samples)d sample(s) failed: %(err)s',
                           {'method': method.value.upper(),
                            'sensors': sensors,
                            'samples': samples,
                            'err': err})
            return _cell_row(method, sensors, samples, None, f'error: {err}')
        row = _cell_row(method, sensors, samples, errors, STATUS_OK)
        logger.log(INFO_LEVELS.cell,
                   '%(method)s %(sensors)d ToF %(samples)2d samples: '
                   'e_x %(ex).4f ± %(exs).4f m, '
                   'e_gamma %(eg).3f ± %(egs).3f deg',
                   {'method': row['method'],
                    'sensors': sensors,
                    'samples': samples,
                    'ex': row['ex_mean'],
                    'exs': row['ex_std'],
                    'eg': row['eg_mean'],
                    'egs': row['eg_std']})
        return row

    rows: list[dict[str, Any]] = []
    with concurrent.futures.ThreadPoolExecutor(spec.workers) as pool:
        bar = progress.TqdmTrials(pool.map(run_job, jobs),
                                  desc='Benchmark',
                                  total=len(jobs))
        for row in bar:
            rows.append(row)
            bar.send({'e_x': row['ex_mean']})
    frame = pd.DataFrame(rows, columns=list(RESULT_COLUMNS))
    return ResultTable(frame)


def save_outputs(table: ResultTable,
                 paths: io_utils.PathManager) -> pathlib.Path:
    table.save(paths.results)
    text = table.to_text()
    paths.results_text.write_text(text, encoding='utf-8')
    logger.log(INFO_LEVELS.experiment, '%(text)s', {'text': text})
    return paths.results
