"""
Multizone time-of-flight sensor: beam layout, calibration curves, forward
simulation of readings and the measurement likelihoods.

Ranges are in meters in the geometric layer and in millimeters whenever a
calibration constant is involved. The conversion happens here.
"""

from __future__ import annotations

import dataclasses
import math
import pathlib
from typing import Any, Final, Optional
import numpy as np
import numpy.typing as npt
import torch

from tof_mcl import data_types
from tof_mcl import exceptions
from tof_mcl import geometry
from tof_mcl import io_utils

MIN_RANGE_MM: Final = 20.
MAX_RANGE_MM: Final = 4000.
CHARACTERIZED_ANGLE_DEG: Final = 25.
DEFAULT_DIAGONAL_FOV: Final = math.radians(65.)
DEFAULT_ZONES: Final = 8
CHARACTERIZED_SIGMA_TABLE: Final[data_types.SigmaTable] = (
    (20., 40.),
    (25., 1.4),
    (60., 1.2),
    (100., 0.6),
    (800., 0.6),
)
DATASHEET_SIGMA_TABLE: Final[data_types.SigmaTable] = ((20., 15.),)
_SQRT_2PI: Final = math.sqrt(2 * math.pi)
_CALIBRATION_KEYS: Final = ('range_slope',
                            'range_offset_mm',
                            'orient_a',
                            'orient_b',
                            'orient_c',
                            'sigma_table')


def _maybe_scalar(value: np.ndarray, like: data_types.FloatLike
                  ) -> data_types.FloatLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


@dataclasses.dataclass(frozen=True, eq=False)
class BeamGrid:
    """
    Beam layout of a square multizone sensor.

    Attributes:
        diagonal_fov: field of view along the diagonal (rad).
        zones_per_axis: number of zones along each side.
        per_axis_fov: field of view along each side (rad).
        beam_angles: per-axis angles of the zone centers (rad), increasing.
        beam_directions: unit vectors in the sensor frame, row-major with
            the row following the elevation (row 0 at the minimum).
    """
    diagonal_fov: float
    zones_per_axis: int
    per_axis_fov: float
    beam_angles: data_types.FloatArray
    beam_directions: data_types.FloatArray

    def __len__(self) -> int:
        return len(self.beam_directions)

    @property
    def axis_cosines(self) -> data_types.FloatArray:
        """Boresight component of each beam direction."""
        return self.beam_directions[:, 2]


def build_beam_grid(diagonal_fov: float = DEFAULT_DIAGONAL_FOV,
                    zones_per_axis: int = DEFAULT_ZONES) -> BeamGrid:
    if zones_per_axis < 1:
        raise exceptions.ZoneCountError(zones_per_axis)
    if not 0 < diagonal_fov < math.pi:
        raise exceptions.FieldOfViewError(diagonal_fov)
    per_axis_fov = diagonal_fov / math.sqrt(2)
    k = np.arange(zones_per_axis)
    angles = -per_axis_fov / 2 + (k + 0.5) * per_axis_fov / zones_per_axis
    elevation, azimuth = np.meshgrid(angles, angles, indexing='ij')
    directions = np.stack([np.tan(azimuth),
                           np.tan(elevation),
                           np.ones_like(azimuth)], axis=-1).reshape(-1, 3)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    angles.flags.writeable = False
    directions.flags.writeable = False
    return BeamGrid(diagonal_fov, zones_per_axis, per_axis_fov, angles,
                    directions)


@dataclasses.dataclass(frozen=True, eq=False)
class ScanFrame:
    """
    One set of readings of a sensor.

    Attributes:
        ranges: per-beam readings (m), NaN where not valid.
        valid: whether each beam returned a reading in the operating range.
        sensor_id: index of the sensor on its mount.
        timestamp_index: frame counter.
        extrapolated: beams whose incidence is outside the characterized
            angles.
    """
    ranges: data_types.FloatArray
    valid: data_types.BoolArray
    sensor_id: int = 0
    timestamp_index: int = 0
    extrapolated: Optional[data_types.BoolArray] = None

    def __post_init__(self) -> None:
        valid = np.asarray(self.valid, dtype=bool)
        ranges = np.where(valid, np.asarray(self.ranges, dtype=np.float64),
                          np.nan)
        in_range = ((ranges[valid] >= MIN_RANGE_MM / 1000)
                    & (ranges[valid] <= MAX_RANGE_MM / 1000))
        if not in_range.all():
            bad = float(ranges[valid][~in_range][0]) * 1000
            raise exceptions.OutOfOperatingRangeError(bad,
                                                      MIN_RANGE_MM,
                                                      MAX_RANGE_MM)
        extrapolated = self.extrapolated
        if extrapolated is None:
            extrapolated = np.zeros_like(valid)
        object.__setattr__(self, 'ranges', ranges)
        object.__setattr__(self, 'valid', valid)
        object.__setattr__(self, 'extrapolated',
                           np.asarray(extrapolated, dtype=bool))

    @property
    def ranges_mm(self) -> data_types.FloatArray:
        return self.ranges * 1000


@dataclasses.dataclass(frozen=True)
class NoiseModel:
    """
    Calibrated error model of the sensor.

    Attributes:
        range_slope: slope of the line mapping mean readings to true ranges.
        range_offset: intercept of the same line (mm).
        orientation_coeffs: (a, b, c) of the percent error paraboloid in the
            incidence angles (deg).
        sigma_table: (range mm, sigma as percent of range) knots, strictly
            increasing in range.
        noise_scale: multiplier of the sigma used when synthesizing
            readings. Zero gives noiseless readings. It is not part of the
            calibration file.
    """
    range_slope: float = 0.963
    range_offset: float = -18.15
    orientation_coeffs: tuple[float, float, float] = (-1e-3, 7.78e-4, 0.06)
    sigma_table: data_types.SigmaTable = CHARACTERIZED_SIGMA_TABLE
    noise_scale: float = 1.

    def __post_init__(self) -> None:
        table = tuple((float(r), float(s)) for r, s in self.sigma_table)
        if not table:
            raise exceptions.SigmaTableError(table, 'no knots')
        ranges = [r for r, _ in table]
        if any(r2 <= r1 for r1, r2 in zip(ranges, ranges[1:])):
            raise exceptions.SigmaTableError(table,
                                             'ranges not strictly increasing')
        for _, sigma in table:
            if not sigma > 0:
                raise exceptions.NonPositiveSigmaError(sigma, 'sigma_table')
        if not self.noise_scale >= 0:
            raise exceptions.NegativeSigmaError(self.noise_scale,
                                                'noise_scale')
        coeffs = tuple(float(c) for c in self.orientation_coeffs)
        object.__setattr__(self, 'sigma_table', table)
        object.__setattr__(self, 'orientation_coeffs', coeffs)
        object.__setattr__(self, 'range_slope', float(self.range_slope))
        object.__setattr__(self, 'range_offset', float(self.range_offset))

    @classmethod
    def ideal(cls) -> NoiseModel:
        """Identity calibration that synthesizes exact readings."""
        return cls(1., 0., (0., 0., 0.), noise_scale=0.)

    def noiseless(self) -> NoiseModel:
        return dataclasses.replace(self, noise_scale=0.)

    def to_text(self) -> str:
        a, b, c = self.orientation_coeffs
        table = ', '.join(f'{r!r}:{s!r}' for r, s in self.sigma_table)
        return (f'range_slope = {self.range_slope!r}\n'
                f'range_offset_mm = {self.range_offset!r}\n'
                f'orient_a = {a!r}\n'
                f'orient_b = {b!r}\n'
                f'orient_c = {c!r}\n'
                f'sigma_table = {table}\n')

    @classmethod
    def from_text(cls, text: str, source: str = '<string>') -> NoiseModel:
        """
        Parse the key = value calibration format written by to_text.

        Raises:
            CalibrationFileError: if a key is missing, repeated or unknown,
                or if a value cannot be parsed.
        """
        entries: dict[str, str] = {}
        for line_number, line in enumerate(text.splitlines(), start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition('=')
            key = key.strip()
            if not sep:
                raise exceptions.CalibrationFileError(
                    source, f'line {line_number} is not a key = value pair'
                )
            if key not in _CALIBRATION_KEYS:
                raise exceptions.CalibrationFileError(
                    source, f'unknown key {key} at line {line_number}'
                )
            if key in entries:
                raise exceptions.CalibrationFileError(
                    source, f'repeated key {key} at line {line_number}'
                )
            entries[key] = value.strip()
        missing = [key for key in _CALIBRATION_KEYS if key not in entries]
        if missing:
            raise exceptions.CalibrationFileError(source,
                                                  f'missing keys {missing}')
        try:
            table = tuple(
                (float(pair.split(':')[0]), float(pair.split(':')[1]))
                for pair in entries['sigma_table'].split(',')
            )
            return cls(float(entries['range_slope']),
                       float(entries['range_offset_mm']),
                       (float(entries['orient_a']),
                        float(entries['orient_b']),
                        float(entries['orient_c'])),
                       table)
        except (ValueError, IndexError) as err:
            raise exceptions.CalibrationFileError(source, str(err)) from err

    def save(self, path: data_types.PathLike) -> None:
        pathlib.Path(path).write_text(self.to_text())
        return

    @classmethod
    def load(cls, path: data_types.PathLike) -> NoiseModel:
        try:
            text = pathlib.Path(path).read_text()
        except OSError as err:
            raise exceptions.CalibrationFileError(str(path), str(err)) from err
        return cls.from_text(text, str(path))

    @classmethod
    def from_dict(cls,
                  entry: dict[str, Any],
                  source: str = 'noise model') -> NoiseModel:
        """
        Build from the calibration keys, plus noise_scale.

        Missing keys keep their default. The sigma table is either a list of
        (range, sigma) pairs or the "range:sigma, ..." text of the file form.

        Raises:
            ConfigFileError: if a key is unknown or a value malformed.
        """
        io_utils.check_keys(entry, _CALIBRATION_KEYS + ('noise_scale',),
                            source)
        default = cls()
        a, b, c = default.orientation_coeffs
        table = entry.get('sigma_table', default.sigma_table)
        try:
            if isinstance(table, str):
                table = tuple((float(pair.split(':')[0]),
                               float(pair.split(':')[1]))
                              for pair in table.split(','))
            return cls(float(entry.get('range_slope', default.range_slope)),
                       float(entry.get('range_offset_mm',
                                       default.range_offset)),
                       (float(entry.get('orient_a', a)),
                        float(entry.get('orient_b', b)),
                        float(entry.get('orient_c', c))),
                       tuple((float(r), float(s)) for r, s in table),
                       float(entry.get('noise_scale', default.noise_scale)))
        except (TypeError, ValueError, IndexError) as err:
            if type(err).__module__ == exceptions.__name__:
                raise
            raise exceptions.ConfigFileError(source, str(err)) from err


def correct_range(measured_mean: data_types.FloatLike,
                  noise: NoiseModel) -> data_types.FloatLike:
    """
    Map a mean reading (mm) to the true range (mm) with the bias line.

    Readings outside the operating range give NaN.
    """
    measured = np.asarray(measured_mean, dtype=np.float64)
    in_range = (measured >= MIN_RANGE_MM) & (measured <= MAX_RANGE_MM)
    corrected = np.where(in_range,
                         noise.range_slope * measured + noise.range_offset,
                         np.nan)
    return _maybe_scalar(corrected, measured_mean)


def inverse_bias(true_range: data_types.FloatLike,
                 noise: NoiseModel) -> data_types.FloatLike:
    """Mean reading (mm) that the bias line maps to true_range (mm)."""
    true = np.asarray(true_range, dtype=np.float64)
    biased = (true - noise.range_offset) / noise.range_slope
    return _maybe_scalar(biased, true_range)


def orientation_error(theta: data_types.FloatLike,
                      phi: data_types.FloatLike,
                      noise: NoiseModel) -> data_types.FloatLike:
    """Percent range error at incidence angles theta and phi (deg)."""
    a, b, c = noise.orientation_coeffs
    squared = np.square(theta) + np.square(phi)
    error = a * squared + b * np.sqrt(squared) + c
    return _maybe_scalar(np.asarray(error), squared)


def orientation_extrapolated(theta: data_types.FloatLike,
                             phi: data_types.FloatLike
                             ) -> data_types.BoolArray | bool:
    outside = ((np.abs(theta) > CHARACTERIZED_ANGLE_DEG)
               | (np.abs(phi) > CHARACTERIZED_ANGLE_DEG))
    if np.ndim(outside) == 0:
        return bool(outside)
    return np.asarray(outside)


def apply_orientation_correction(range_mm: data_types.FloatLike,
                                 theta: data_types.FloatLike,
                                 phi: data_types.FloatLike,
                                 noise: NoiseModel) -> data_types.FloatLike:
    return range_mm / (1 + orientation_error(theta, phi, noise) / 100)


def inject_orientation_error(range_mm: data_types.FloatLike,
                             theta: data_types.FloatLike,
                             phi: data_types.FloatLike,
                             noise: NoiseModel) -> data_types.FloatLike:
    """Inverse of apply_orientation_correction."""
    return range_mm * (1 + orientation_error(theta, phi, noise) / 100)


def sigma_percent_at(range_mm: data_types.FloatLike,
                     table: data_types.SigmaTable) -> data_types.FloatLike:
    knots = np.array(table, dtype=np.float64)
    ranges = np.asarray(range_mm, dtype=np.float64)
    below = ranges < knots[0, 0]
    if below.any():
        raise exceptions.RangeBelowTableError(float(ranges[below].min()),
                                              float(knots[0, 0]))
    percent = np.interp(ranges, knots[:, 0], knots[:, 1])
    return _maybe_scalar(percent, range_mm)


def sigma_at(range_mm: data_types.FloatLike,
             noise: NoiseModel) -> data_types.FloatLike:
    """
    Standard deviation (mm) of a single reading at range_mm.

    The percent is linearly interpolated between the knots and held constant
    past the last one.

    Raises:
        RangeBelowTableError: if range_mm is below the first knot.
    """
    return sigma_percent_at(range_mm, noise.sigma_table) * range_mm / 100


@dataclasses.dataclass(frozen=True)
class LikelihoodModel:
    """
    Measurement likelihood of one of the compared methods.

    Attributes:
        variant: which likelihood is evaluated.
        noise: calibration used by the characterized model.
        ds_sigma_table: (range mm, sigma mm) knots of the datasheet gate,
            interpolated and held constant outside the knots.
        is_epsilon: half width of the ideal sensor gate (mm).
    """
    variant: data_types.Method = data_types.Method.PSM
    noise: NoiseModel = dataclasses.field(default_factory=NoiseModel)
    ds_sigma_table: data_types.SigmaTable = DATASHEET_SIGMA_TABLE
    is_epsilon: float = 1.

    def __post_init__(self) -> None:
        object.__setattr__(self, 'variant',
                           data_types.Method.parse(self.variant))
        table = tuple((float(r), float(s)) for r, s in self.ds_sigma_table)
        if not table:
            raise exceptions.SigmaTableError(table, 'no knots')
        ranges = [r for r, _ in table]
        if any(r2 <= r1 for r1, r2 in zip(ranges, ranges[1:])):
            raise exceptions.SigmaTableError(table,
                                             'ranges not strictly increasing')
        for _, sigma in table:
            if not sigma > 0:
                raise exceptions.NonPositiveSigmaError(sigma,
                                                       'ds_sigma_table')
        if not self.is_epsilon > 0:
            raise exceptions.NonPositiveSigmaError(self.is_epsilon,
                                                   'is_epsilon')
        object.__setattr__(self, 'ds_sigma_table', table)

    @classmethod
    def for_method(cls,
                   method: str | data_types.Method,
                   noise: Optional[NoiseModel] = None) -> LikelihoodModel:
        return cls(data_types.Method.parse(method), noise or NoiseModel())

    def ds_sigma(self, raw_mean: data_types.FloatLike) -> data_types.FloatLike:
        knots = np.array(self.ds_sigma_table, dtype=np.float64)
        sigma = np.interp(raw_mean, knots[:, 0], knots[:, 1])
        return _maybe_scalar(np.asarray(sigma), raw_mean)


def log_likelihood(corrected_mean: data_types.FloatLike,
                   true_range: data_types.FloatLike,
                   model: LikelihoodModel,
                   raw_mean: data_types.FloatLike) -> data_types.FloatLike:
    """
    Natural log of likelihood, -inf where the density is zero.
    """
    true = np.asarray(true_range, dtype=np.float64)
    raw = np.asarray(raw_mean, dtype=np.float64)
    match model.variant:
        case data_types.Method.PSM:
            sigma = np.asarray(sigma_at(raw, model.noise))
            residual = (np.asarray(corrected_mean) - true) / sigma
            value = -0.5 * residual ** 2 - np.log(sigma * _SQRT_2PI)
        case data_types.Method.DS:
            sigma = np.asarray(model.ds_sigma(raw))
            value = np.where(np.abs(true - raw) < sigma,
                             -np.log(sigma * _SQRT_2PI),
                             -np.inf)
        case data_types.Method.IS:
            epsilon = model.is_epsilon
            value = np.where(np.abs(true - raw) < epsilon,
                             -np.log(epsilon * _SQRT_2PI),
                             -np.inf)
        case _:
            raise exceptions.UnknownMethodError(
                str(model.variant), [m.value for m in data_types.Method]
            )
    value = np.asarray(value, dtype=np.float64)
    if value.ndim == 0:
        return float(value)
    return value


def likelihood(corrected_mean: data_types.FloatLike,
               true_range: data_types.FloatLike,
               model: LikelihoodModel,
               raw_mean: data_types.FloatLike) -> data_types.FloatLike:
    """
    Density of a measurement given the true range.

    Args:
        corrected_mean: mean reading after the calibration pipeline (mm).
            Only the characterized model uses it.
        true_range: range expected from the hypothesis (mm).
        model: the likelihood to evaluate.
        raw_mean: uncorrected mean reading (mm). It sets sigma for the
            characterized model and is gated directly by the other two.

    Returns:
        the density in 1/mm, two-valued (0 or peak) for the gated models.
    """
    return np.exp(log_likelihood(corrected_mean, true_range, model, raw_mean))


def incidence_angles(normals: np.ndarray,
                     sensor_pose: geometry.Pose3
                     ) -> tuple[data_types.FloatArray, data_types.FloatArray]:
    """
    Incidence of the surface seen by the sensor.

    Args:
        normals: surface normals (..., 3) in the world frame, facing the
            sensor.
        sensor_pose: pose of the sensor.

    Returns:
        theta, the tilt in the sensor x-z plane, and phi, the tilt in the
        sensor y-z plane, in degrees. Both are zero at normal incidence.
    """
    reversed_normal = -np.asarray(sensor_pose.inverse().rotate(normals))
    theta = np.degrees(np.arctan2(reversed_normal[..., 0],
                                  reversed_normal[..., 2]))
    phi = np.degrees(np.arctan2(reversed_normal[..., 1],
                                reversed_normal[..., 2]))
    return theta, phi


def scan_to_points(scan: ScanFrame,
                   grid: BeamGrid,
                   sensor_pose: geometry.Pose3,
                   mask: Optional[data_types.BoolArray] = None
                   ) -> data_types.FloatArray:
    """
    Point cloud of the valid beams of a scan in the parent frame.

    Readings are distances along the boresight, so each is divided by the
    axis cosine of its beam to recover the distance along the beam.
    """
    selected = scan.valid if mask is None else scan.valid & mask
    radial = scan.ranges[selected] / grid.axis_cosines[selected]
    local = radial[:, None] * grid.beam_directions[selected]
    return sensor_pose.apply(local)


def synthesize_readings(axis_true_mm: np.ndarray,
                        theta: np.ndarray,
                        phi: np.ndarray,
                        noise: NoiseModel,
                        rng: np.random.Generator
                        ) -> tuple[data_types.FloatArray,
                                   data_types.BoolArray]:
    """
    Readings (mm) a sensor returns for the given true axis distances.

    One standard normal is drawn per entry whatever the validity, so the
    random stream does not depend on the geometry.

    Returns:
        the readings, NaN when missing, and the validity mask.
    """
    axis_true_mm = np.asarray(axis_true_mm, dtype=np.float64)
    draws = rng.standard_normal(axis_true_mm.shape)
    hit = np.isfinite(axis_true_mm)
    with np.errstate(invalid='ignore'):
        oriented = inject_orientation_error(axis_true_mm, theta, phi, noise)
        biased = np.asarray(inverse_bias(oriented, noise))
        floor = np.where(hit, np.maximum(biased, MIN_RANGE_MM), MIN_RANGE_MM)
        sigma = np.asarray(sigma_at(floor, noise)) * noise.noise_scale
        readings = np.where(hit, biased + sigma * draws, np.nan)
        valid = hit & (readings >= MIN_RANGE_MM) & (readings <= MAX_RANGE_MM)
    return np.where(valid, readings, np.nan), valid


def simulate_scan(sensor_pose: geometry.Pose3,
                  surface: geometry.Surface,
                  noise: NoiseModel,
                  rng: np.random.Generator,
                  *,
                  grid: Optional[BeamGrid] = None,
                  sensor_id: int = 0,
                  timestamp_index: int = 0,
                  device: Optional[torch.device | str] = None,
                  chunk_size: Optional[int] = None) -> ScanFrame:
    """
    Simulate one frame of readings.

    The beams are cast from the sensor, the radial distances are projected
    on the boresight and the calibration model is inverted to produce what
    the sensor reports.

    Args:
        sensor_pose: pose of the sensor in the frame of the surface.
        surface: the object model, already placed.
        noise: calibration model to invert.
        rng: caller-owned random stream.
        grid: beam layout. Defaults to the 8x8 sensor.
        sensor_id: recorded in the frame.
        timestamp_index: recorded in the frame.
        device: where the mesh intersection runs.
        chunk_size: ray/triangle pairs evaluated at once.
    """
    grid = build_beam_grid() if grid is None else grid
    hits = geometry.raycast_beams(sensor_pose,
                                  grid,
                                  surface,
                                  device=device,
                                  chunk_size=chunk_size)
    axis_true_mm = hits.distances * grid.axis_cosines * 1000
    theta, phi = incidence_angles(hits.normals, sensor_pose)
    readings, valid = synthesize_readings(axis_true_mm,
                                          theta,
                                          phi,
                                          noise,
                                          rng)
    with np.errstate(invalid='ignore'):
        extrapolated = valid & orientation_extrapolated(theta, phi)
    return ScanFrame(readings / 1000,
                     valid,
                     sensor_id=sensor_id,
                     timestamp_index=timestamp_index,
                     extrapolated=extrapolated)


def _as_float_array(value: npt.ArrayLike) -> data_types.FloatArray:
    return np.asarray(value, dtype=np.float64)


def correct_readings(raw_mm: np.ndarray,
                     theta: np.ndarray,
                     phi: np.ndarray,
                     noise: NoiseModel) -> data_types.FloatArray:
    """Full correction pipeline: bias line, then incidence correction."""
    corrected = _as_float_array(correct_range(_as_float_array(raw_mm), noise))
    return _as_float_array(
        apply_orientation_correction(corrected, theta, phi, noise)
    )
