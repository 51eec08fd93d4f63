"""
Characterization sweeps and calibration fitting.

The sweeps reproduce the two bench experiments in simulation: a range sweep
at normal incidence and an incidence sweep at a fixed distance. The fits
recover the NoiseModel parameters by ordinary least squares, summing with
math.fsum so that the result does not depend on the order of the records.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, Final, NamedTuple, Optional, Sequence
import numpy as np
import pandas as pd

from tof_mcl import data_types
from tof_mcl import exceptions
from tof_mcl import geometry
from tof_mcl import io_utils
from tof_mcl import sensor_model
from tof_mcl import seeding
from tof_mcl import progress
from tof_mcl.default_logging import logger
from tof_mcl.default_logging import INFO_LEVELS

MAX_SWEEP_RANGE_MM: Final = 800.
ORIENTATION_DISTANCE_MM: Final = 200.
CONFIDENCE_Z: Final = 3.29
MIN_SIGMA_PCT: Final = 1e-9
SWEEP_COLUMNS: Final = ('true_range_mm',
                        'theta_deg',
                        'phi_deg',
                        'frame_index',
                        'mean_reading_mm')
_BOARD_HALF_SIZE: Final = 1.5
_BOARD_HALF_THICKNESS: Final = 0.005


def range_schedule() -> list[float]:
    """Commanded distances: 5 mm steps up to 200 mm, then 10 mm steps."""
    fine = [20. + 5. * k for k in range(37)]
    coarse = [210. + 10. * k for k in range(60)]
    return fine + coarse


def angle_schedule() -> list[float]:
    return [-25. + 5. * k for k in range(11)]


@dataclasses.dataclass(frozen=True, eq=False)
class SweepRecord:
    """
    Frames acquired at one commanded pose.

    Attributes:
        commanded_true_range: distance of the target along the boresight (mm).
        theta: incidence in the sensor x-z plane (deg).
        phi: incidence in the sensor y-z plane (deg).
        readings: per-frame mean readings (mm).
        beams_per_frame: beams averaged in each frame mean.
        sensor_id: which sensor acquired the frames.
    """
    commanded_true_range: float
    theta: float
    phi: float
    readings: data_types.FloatArray
    beams_per_frame: int = 64
    sensor_id: int = 0

    def __post_init__(self) -> None:
        readings = np.asarray(self.readings, dtype=np.float64).ravel()
        name = (f'({self.commanded_true_range} mm, {self.theta} deg, '
                f'{self.phi} deg)')
        if len(readings) < 2:
            raise exceptions.SweepEnvelopeError(name,
                                                'fewer than 2 readings')
        if not (sensor_model.MIN_RANGE_MM
                <= self.commanded_true_range
                <= MAX_SWEEP_RANGE_MM):
            raise exceptions.SweepEnvelopeError(name, 'range out of envelope')
        limit = sensor_model.CHARACTERIZED_ANGLE_DEG
        if abs(self.theta) > limit or abs(self.phi) > limit:
            raise exceptions.SweepEnvelopeError(name, 'angle out of envelope')
        if self.beams_per_frame < 1:
            raise exceptions.SweepEnvelopeError(name,
                                                'no beam in the frame means')
        readings.flags.writeable = False
        object.__setattr__(self, 'readings', readings)

    @property
    def mean(self) -> float:
        return math.fsum(self.readings) / len(self.readings)

    @property
    def std(self) -> float:
        """Sample standard deviation of the frame means."""
        mean = self.mean
        squares = math.fsum((r - mean) ** 2 for r in self.readings)
        return math.sqrt(squares / (len(self.readings) - 1))

    @property
    def beam_sigma(self) -> float:
        """Standard deviation of a single beam reading (mm)."""
        return self.std * math.sqrt(self.beams_per_frame)


class LineFit(NamedTuple):
    slope: float
    offset: float
    slope_se: float
    offset_se: float

    @property
    def slope_ci(self) -> float:
        return CONFIDENCE_Z * self.slope_se

    @property
    def offset_ci(self) -> float:
        return CONFIDENCE_Z * self.offset_se


class RangeFit(NamedTuple):
    slope: float
    offset: float
    sigma_table: data_types.SigmaTable


class OrientationFit(NamedTuple):
    a: float
    b: float
    c: float


def _frame_means(axis_true_mm: np.ndarray,
                 theta: np.ndarray,
                 phi: np.ndarray,
                 noise: sensor_model.NoiseModel,
                 frames: int,
                 rng: np.random.Generator) -> data_types.FloatArray:
    means = np.empty(frames)
    for frame in range(frames):
        readings, valid = sensor_model.synthesize_readings(axis_true_mm,
                                                           theta,
                                                           phi,
                                                           noise,
                                                           rng)
        means[frame] = readings[valid].mean() if valid.any() else np.nan
    return means[np.isfinite(means)]


def generate_range_sweep(noise: sensor_model.NoiseModel,
                         rng: np.random.Generator,
                         *,
                         frames_per_pose: int = 100,
                         grid: Optional[sensor_model.BeamGrid] = None,
                         sensor_id: int = 0) -> list[SweepRecord]:
    """
    Simulate the range sweep against a flat board at normal incidence.

    The incidence model is disabled during this sweep, as the board faces
    the sensor. Each pose draws from its own child stream of rng.

    Returns:
        one record per commanded distance, in increasing order.
    """
    grid = sensor_model.build_beam_grid() if grid is None else grid
    range_noise = dataclasses.replace(noise, orientation_coeffs=(0., 0., 0.))
    schedule = range_schedule()
    streams = rng.spawn(len(schedule))
    records: list[SweepRecord] = []
    sensor_pose = geometry.Pose3()
    for distance_mm, stream in progress.TqdmTrials(list(zip(schedule,
                                                            streams)),
                                                   desc='Range sweep'):
        board = geometry.Box(
            (0., 0., distance_mm / 1000 + _BOARD_HALF_THICKNESS),
            (_BOARD_HALF_SIZE, _BOARD_HALF_SIZE, _BOARD_HALF_THICKNESS),
        )
        hits = geometry.raycast_beams(sensor_pose, grid, board)
        axis_true_mm = hits.distances * grid.axis_cosines * 1000
        theta, phi = sensor_model.incidence_angles(hits.normals, sensor_pose)
        means = _frame_means(axis_true_mm,
                             theta,
                             phi,
                             range_noise,
                             frames_per_pose,
                             stream)
        records.append(SweepRecord(distance_mm, 0., 0., means,
                                   beams_per_frame=len(grid),
                                   sensor_id=sensor_id))
    return records


def generate_orientation_sweep(noise: sensor_model.NoiseModel,
                               plane: str | data_types.Plane,
                               rng: np.random.Generator,
                               *,
                               frames_per_pose: int = 100,
                               beams_per_frame: int = 64,
                               sensor_id: int = 0) -> list[SweepRecord]:
    """
    Simulate the incidence sweep at a fixed 200 mm distance.

    The sensor rotates around a point of the board, so every beam sees the
    board at the same boresight distance and incidence. The xy plane varies
    theta and the zy plane varies phi.
    """
    plane = data_types.Plane(plane)
    angles = angle_schedule()
    streams = rng.spawn(len(angles))
    records: list[SweepRecord] = []
    axis_true_mm = np.full(beams_per_frame, ORIENTATION_DISTANCE_MM)
    for angle, stream in zip(angles, streams):
        if plane is data_types.Plane.XY:
            theta, phi = angle, 0.
        else:
            theta, phi = 0., angle
        means = _frame_means(axis_true_mm,
                             np.full(beams_per_frame, theta),
                             np.full(beams_per_frame, phi),
                             noise,
                             frames_per_pose,
                             stream)
        records.append(SweepRecord(ORIENTATION_DISTANCE_MM, theta, phi, means,
                                   beams_per_frame=beams_per_frame,
                                   sensor_id=sensor_id))
    return records


def fit_range_line(records: Sequence[SweepRecord]) -> LineFit:
    """
    Regress the commanded range on the mean reading.

    Raises:
        RankDeficientFitError: if fewer than 2 distinct mean readings.
    """
    x = [record.mean for record in records]
    y = [record.commanded_true_range for record in records]
    distinct = len(set(x))
    if distinct < 2:
        raise exceptions.RankDeficientFitError(distinct, 2)
    n = len(x)
    x_mean = math.fsum(x) / n
    y_mean = math.fsum(y) / n
    sxx = math.fsum((xi - x_mean) ** 2 for xi in x)
    sxy = math.fsum((xi - x_mean) * (yi - y_mean) for xi, yi in zip(x, y))
    slope = sxy / sxx
    offset = y_mean - slope * x_mean
    if n > 2:
        squares = math.fsum((yi - slope * xi - offset) ** 2
                            for xi, yi in zip(x, y))
        variance = squares / (n - 2)
    else:
        variance = 0.
    slope_se = math.sqrt(variance / sxx)
    offset_se = math.sqrt(variance * (1 / n + x_mean ** 2 / sxx))
    return LineFit(slope, offset, slope_se, offset_se)


def fit_sigma_table(records: Sequence[SweepRecord],
                    knots: Sequence[float] = tuple(
                        r for r, _ in sensor_model.CHARACTERIZED_SIGMA_TABLE
                    )) -> data_types.SigmaTable:
    """
    Condense the per-pose spread on the given range knots.

    Each pose is assigned to the knot nearest to its mean reading (the lower
    one on ties) and the knot takes the average percent of its poses. A knot
    without poses takes the value of the nearest pose.

    With the default bias line a 20 mm target reads about 40 mm, so no pose
    falls on the 20 mm knot. That knot then carries the spread of the
    shortest pose, near 1.3%, and not the 40% of the characterized table.
    """
    means = np.array([record.mean for record in records])
    percents = np.array([record.beam_sigma / record.mean * 100
                         for record in records])
    knot_array = np.asarray(knots, dtype=np.float64)
    nearest = np.abs(means[:, None] - knot_array[None, :]).argmin(axis=1)
    table: list[tuple[float, float]] = []
    for index, knot in enumerate(knot_array):
        assigned = percents[nearest == index]
        if len(assigned):
            value = math.fsum(assigned.tolist()) / len(assigned)
        else:
            value = float(percents[np.abs(means - knot).argmin()])
        if value <= 0:
            logger.warning('No spread at the %(knot)s mm knot: '
                           'sigma set to %(floor)s%%.',
                           {'knot': knot, 'floor': MIN_SIGMA_PCT})
            value = MIN_SIGMA_PCT
        table.append((float(knot), value))
    return tuple(table)


def fit_range_model(records: Sequence[SweepRecord]) -> RangeFit:
    """Bias line and sigma table from a range sweep."""
    line = fit_range_line(records)
    return RangeFit(line.slope, line.offset, fit_sigma_table(records))


def percent_errors(records: Sequence[SweepRecord],
                   slope: float,
                   offset: float) -> data_types.FloatArray:
    """Range-corrected percent error of each record."""
    corrected = np.array([slope * record.mean + offset for record in records])
    true = np.array([record.commanded_true_range for record in records])
    return (corrected - true) / true * 100


def _fit_paraboloid(radii: Sequence[float],
                    errors: Sequence[float]) -> OrientationFit:
    distinct = len(set(radii))
    if distinct < 3:
        raise exceptions.RankDeficientFitError(distinct, 3)
    design = [(r * r, r, 1.) for r in radii]
    normal = np.array([[math.fsum(row[i] * row[j] for row in design)
                        for j in range(3)] for i in range(3)])
    rhs = np.array([math.fsum(row[i] * e for row, e in zip(design, errors))
                    for i in range(3)])
    a, b, c = np.linalg.solve(normal, rhs)
    return OrientationFit(float(a), float(b), float(c))


def fit_plane_model(records: Sequence[SweepRecord],
                    slope: float = 0.963,
                    offset: float = -18.15) -> OrientationFit:
    """Parabola in the absolute angle of a single-plane sweep."""
    errors = percent_errors(records, slope, offset)
    radii = [math.hypot(record.theta, record.phi) for record in records]
    return _fit_paraboloid(radii, errors.tolist())


def fit_orientation_model(xy: Sequence[SweepRecord],
                          zy: Sequence[SweepRecord],
                          slope: float = 0.963,
                          offset: float = -18.15) -> OrientationFit:
    """
    Paraboloid in r = sqrt(theta^2 + phi^2) pooling both planes.

    The readings are first corrected with the range line given by slope and
    offset, which defaults to the published one.

    Raises:
        RankDeficientFitError: if a plane has fewer than 3 distinct angles.
    """
    for plane in (xy, zy):
        distinct = len({(record.theta, record.phi) for record in plane})
        if distinct < 3:
            raise exceptions.RankDeficientFitError(distinct, 3)
    records = [*xy, *zy]
    return fit_plane_model(records, slope, offset)


def orientation_sigma(records: Sequence[SweepRecord]) -> float:
    """Average single-beam spread of the incidence sweep, percent."""
    percents = [record.beam_sigma / record.mean * 100 for record in records]
    return math.fsum(percents) / len(percents)


def records_to_frame(records: Sequence[SweepRecord]) -> pd.DataFrame:
    rows = [(record.commanded_true_range,
             record.theta,
             record.phi,
             frame_index,
             reading)
            for record in records
            for frame_index, reading in enumerate(record.readings)]
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))


def records_from_frame(frame: pd.DataFrame,
                       beams_per_frame: int = 64,
                       sensor_id: int = 0) -> list[SweepRecord]:
    """Group the frame rows back into records, keeping their first order."""
    missing = set(SWEEP_COLUMNS) - set(frame.columns)
    if missing:
        raise exceptions.SweepEnvelopeError('table',
                                            f'missing columns {missing}')
    records: list[SweepRecord] = []
    grouped = frame.sort_values('frame_index', kind='stable').groupby(
        ['true_range_mm', 'theta_deg', 'phi_deg'], sort=False
    )
    for (true_range, theta, phi), group in grouped:
        records.append(SweepRecord(float(true_range),
                                   float(theta),
                                   float(phi),
                                   group['mean_reading_mm'].to_numpy(),
                                   beams_per_frame=beams_per_frame,
                                   sensor_id=sensor_id))
    return records


def save_records(records: Sequence[SweepRecord],
                 path: data_types.PathLike) -> None:
    records_to_frame(records).to_csv(path, index=False)
    return


def load_records(path: data_types.PathLike,
                 beams_per_frame: int = 64) -> list[SweepRecord]:
    frame = pd.read_csv(path, float_precision='round_trip')
    return records_from_frame(frame, beams_per_frame)


@dataclasses.dataclass(frozen=True)
class CharacterizationConfig:
    """
    Settings of a characterization run.

    Attributes:
        frames_per_pose: frames averaged at each commanded pose.
        sensor_count: number of sensors characterized independently.
        noise_on: whether the synthesized readings are noisy.
        seed: master seed of the random streams.
        injected: the model used to synthesize the sweeps.
    """
    frames_per_pose: int = 100
    sensor_count: int = 3
    noise_on: bool = True
    seed: int = 0
    injected: sensor_model.NoiseModel = dataclasses.field(
        default_factory=sensor_model.NoiseModel
    )

    def __post_init__(self) -> None:
        if self.frames_per_pose < 2:
            raise exceptions.SweepEnvelopeError(
                'config', 'frames_per_pose must be at least 2'
            )
        if self.sensor_count < 1:
            raise exceptions.SweepEnvelopeError(
                'config', 'sensor_count must be at least 1'
            )

    @property
    def synthesis_model(self) -> sensor_model.NoiseModel:
        if self.noise_on:
            return self.injected
        return self.injected.noiseless()

    @classmethod
    def from_dict(cls,
                  entry: dict[str, Any],
                  source: str = 'characterization'
                  ) -> CharacterizationConfig:
        """
        Read frames_per_pose, sensor_count, noise (on/off), seed and the
        injected calibration keys.

        Raises:
            ConfigFileError: if a key is unknown or a value malformed.
        """
        keys = ('frames_per_pose', 'sensor_count', 'noise', 'seed',
                'injected')
        io_utils.check_keys(entry, keys, source)
        default = cls()
        try:
            return cls(int(entry.get('frames_per_pose',
                                     default.frames_per_pose)),
                       int(entry.get('sensor_count', default.sensor_count)),
                       io_utils.parse_switch(
                           entry.get('noise', default.noise_on)
                       ),
                       int(entry.get('seed', default.seed)),
                       sensor_model.NoiseModel.from_dict(
                           entry.get('injected') or {}, f'{source}: injected'
                       ))
        except (TypeError, ValueError) as err:
            if type(err).__module__ == exceptions.__name__:
                raise
            raise exceptions.ConfigFileError(source, str(err)) from err


@dataclasses.dataclass(frozen=True)
class SensorSweeps:
    sensor_id: int
    range_records: list[SweepRecord]
    xy_records: list[SweepRecord]
    zy_records: list[SweepRecord]


@dataclasses.dataclass(frozen=True, eq=False)
class FitReport:
    """
    Outcome of a characterization.

    Attributes:
        noise_model: the fitted calibration, pooling all sensors.
        line: the range line with its standard errors.
        plane_fit: parabola of the xy sweep alone.
        residuals: one row per range pose and sensor.
        mean_relative_residual: mean absolute relative residual, percent.
        max_relative_residual: max absolute relative residual, percent.
        orientation_sigma: spread of the incidence sweep, percent. It is
            reported only and does not enter the model.
        per_sensor: one row of fitted parameters per sensor.
    """
    noise_model: sensor_model.NoiseModel
    line: LineFit
    plane_fit: OrientationFit
    residuals: pd.DataFrame
    mean_relative_residual: float
    max_relative_residual: float
    orientation_sigma: float
    per_sensor: pd.DataFrame

    def spread(self) -> pd.Series:
        """Standard deviation of each parameter across sensors."""
        return self.per_sensor.drop(columns='sensor_id').std(ddof=0)

    def summary(self, injected: Optional[sensor_model.NoiseModel] = None
                ) -> str:
        fitted = self.noise_model
        a, b, c = fitted.orientation_coeffs
        lines = [f'slope {fitted.range_slope:.6f} '
                 f'(+/- {self.line.slope_ci:.6f})',
                 f'offset {fitted.range_offset:.4f} mm '
                 f'(+/- {self.line.offset_ci:.4f})',
                 f'orientation a {a:.6g} b {b:.6g} c {c:.6g}',
                 f'relative residual mean {self.mean_relative_residual:.3f}%'
                 f' max {self.max_relative_residual:.3f}%']
        if injected is not None:
            ia, ib, ic = injected.orientation_coeffs
            lines.append(f'injected slope {injected.range_slope:.6f} '
                         f'offset {injected.range_offset:.4f} mm '
                         f'a {ia:.6g} b {ib:.6g} c {ic:.6g}')
        return '\n'.join(lines)


def generate_sweeps(config: CharacterizationConfig,
                    sensor_id: int) -> SensorSweeps:
    streams = seeding.StreamFactory(config.seed)
    model = config.synthesis_model
    frames = config.frames_per_pose
    return SensorSweeps(
        sensor_id,
        generate_range_sweep(model,
                             streams('range', sensor_id),
                             frames_per_pose=frames,
                             sensor_id=sensor_id),
        generate_orientation_sweep(model,
                                   data_types.Plane.XY,
                                   streams('xy', sensor_id),
                                   frames_per_pose=frames,
                                   sensor_id=sensor_id),
        generate_orientation_sweep(model,
                                   data_types.Plane.ZY,
                                   streams('zy', sensor_id),
                                   frames_per_pose=frames,
                                   sensor_id=sensor_id),
    )


def _residual_frame(records: Sequence[SweepRecord],
                    slope: float,
                    offset: float) -> pd.DataFrame:
    true = np.array([record.commanded_true_range for record in records])
    mean = np.array([record.mean for record in records])
    corrected = slope * mean + offset
    return pd.DataFrame({
        'sensor_id': [record.sensor_id for record in records],
        'true_range_mm': true,
        'mean_reading_mm': mean,
        'corrected_mm': corrected,
        'residual_mm': corrected - true,
        'relative_residual_pct': (corrected - true) / true * 100,
    })


def fit_sweeps(sweeps: Sequence[SensorSweeps]) -> FitReport:
    """Fit each sensor alone and all of them pooled."""
    per_sensor: list[dict[str, float]] = []
    for sweep in sweeps:
        line = fit_range_line(sweep.range_records)
        orientation = fit_orientation_model(sweep.xy_records,
                                            sweep.zy_records,
                                            line.slope,
                                            line.offset)
        per_sensor.append({'sensor_id': sweep.sensor_id,
                           'range_slope': line.slope,
                           'range_offset_mm': line.offset,
                           'orient_a': orientation.a,
                           'orient_b': orientation.b,
                           'orient_c': orientation.c})
    range_records = [r for sweep in sweeps for r in sweep.range_records]
    xy_records = [r for sweep in sweeps for r in sweep.xy_records]
    zy_records = [r for sweep in sweeps for r in sweep.zy_records]
    line = fit_range_line(range_records)
    sigma_table = fit_sigma_table(range_records)
    orientation = fit_orientation_model(xy_records,
                                        zy_records,
                                        line.slope,
                                        line.offset)
    plane_fit = fit_plane_model(xy_records, line.slope, line.offset)
    noise_model = sensor_model.NoiseModel(line.slope,
                                          line.offset,
                                          tuple(orientation),
                                          sigma_table)
    residuals = _residual_frame(range_records, line.slope, line.offset)
    relative = residuals['relative_residual_pct'].abs()
    report = FitReport(noise_model,
                       line,
                       plane_fit,
                       residuals,
                       float(relative.mean()),
                       float(relative.max()),
                       orientation_sigma(xy_records + zy_records),
                       pd.DataFrame(per_sensor))
    logger.log(INFO_LEVELS.calibration,
               'Fitted slope %(slope).6f, offset %(offset).4f mm.',
               {'slope': line.slope, 'offset': line.offset})
    return report


def run_characterization(config: CharacterizationConfig
                         ) -> tuple[FitReport, list[SensorSweeps]]:
    """
    Generate the sweeps of every sensor and fit them.

    Each sensor draws from its own streams derived from the config seed, so
    adding sensors does not change the data of the first ones.
    """
    sweeps = [generate_sweeps(config, sensor_id)
              for sensor_id in range(config.sensor_count)]
    return fit_sweeps(sweeps), sweeps
