from __future__ import annotations

from typing import Any, Iterable


class NotOrthonormalError(ValueError):
    msg = ('Rotation matrix is not orthonormal with positive determinant'
           ' (max deviation {:.3e}, determinant {:.12f}).')

    def __init__(self, deviation: float, determinant: float) -> None:
        self.deviation = deviation
        self.determinant = determinant
        super().__init__(self.msg.format(deviation, determinant))


class NotUnitVectorError(ValueError):
    msg = 'Ray direction must have unit norm, got norm {}.'

    def __init__(self, norm: float) -> None:
        self.norm = norm
        super().__init__(self.msg.format(norm))


class NonPositiveExtentError(ValueError):
    msg = 'Box half-extents must be strictly positive, got {}.'

    def __init__(self, half_extents: Iterable[float]) -> None:
        self.half_extents = list(half_extents)
        super().__init__(self.msg.format(self.half_extents))


class EmptyMeshError(ValueError):
    msg = 'A triangle mesh needs at least one triangle.'

    def __init__(self) -> None:
        super().__init__(self.msg)


class TriangleIndexError(IndexError):
    msg = 'Triangle {} references vertex {} but the mesh has {} vertices.'

    def __init__(self, triangle: int, index: int, num_vertices: int) -> None:
        self.triangle = triangle
        self.index = index
        self.num_vertices = num_vertices
        super().__init__(self.msg.format(triangle, index, num_vertices))


class ObjParseError(ValueError):
    msg = 'Malformed OBJ record at line {}: {}'

    def __init__(self, line_number: int, reason: str) -> None:
        self.line_number = line_number
        self.reason = reason
        super().__init__(self.msg.format(line_number, reason))


class ZoneCountError(ValueError):
    msg = 'The number of zones per axis must be at least 1, got {}.'

    def __init__(self, zones: int) -> None:
        self.zones = zones
        super().__init__(self.msg.format(zones))


class FieldOfViewError(ValueError):
    msg = 'The diagonal field of view must lie in (0, pi) radians, got {}.'

    def __init__(self, fov: float) -> None:
        self.fov = fov
        super().__init__(self.msg.format(fov))


class OutOfOperatingRangeError(ValueError):
    msg = 'Reading {} mm is outside the operating range [{}, {}] mm.'

    def __init__(self, value: float, lower: float, upper: float) -> None:
        self.value = value
        super().__init__(self.msg.format(value, lower, upper))


class RangeBelowTableError(ValueError):
    msg = 'Range {} mm is below the first sigma table knot ({} mm).'

    def __init__(self, value: float, first_knot: float) -> None:
        self.value = value
        self.first_knot = first_knot
        super().__init__(self.msg.format(value, first_knot))


class SigmaTableError(ValueError):
    msg = 'Invalid sigma table {}: {}.'

    def __init__(self, table: Any, reason: str) -> None:
        self.table = table
        self.reason = reason
        super().__init__(self.msg.format(table, reason))


class NonPositiveSigmaError(ValueError):
    msg = 'Standard deviation {} must be strictly positive ({}).'

    def __init__(self, sigma: float, name: str) -> None:
        self.sigma = sigma
        self.name = name
        super().__init__(self.msg.format(sigma, name))


class NegativeSigmaError(ValueError):
    msg = 'Standard deviation {} cannot be negative ({}).'

    def __init__(self, sigma: float, name: str) -> None:
        self.sigma = sigma
        self.name = name
        super().__init__(self.msg.format(sigma, name))


class SweepEnvelopeError(ValueError):
    msg = 'Sweep record {} is invalid: {}.'

    def __init__(self, record: str, reason: str) -> None:
        self.record = record
        self.reason = reason
        super().__init__(self.msg.format(record, reason))


class RankDeficientFitError(ValueError):
    msg = ('Least squares design is rank deficient: {} distinct values'
           ' for {} parameters.')

    def __init__(self, distinct: int, parameters: int) -> None:
        self.distinct = distinct
        self.parameters = parameters
        super().__init__(self.msg.format(distinct, parameters))


class CalibrationFileError(ValueError):
    msg = 'Calibration file {}: {}'

    def __init__(self, source: str, reason: str) -> None:
        self.source = source
        self.reason = reason
        super().__init__(self.msg.format(source, reason))


class SceneConfigError(ValueError):
    msg = 'Invalid scene configuration: {}'

    def __init__(self, reason: str) -> None:
        self.reason = reason
        super().__init__(self.msg.format(reason))


class ConfigFileError(ValueError):
    msg = 'Cannot use configuration {}: {}'

    def __init__(self, source: str, reason: str) -> None:
        self.source = source
        self.reason = reason
        super().__init__(self.msg.format(source, reason))


class PoseIndexError(IndexError):
    msg = 'Robot pose index {} out of range for a scene with {} poses.'

    def __init__(self, index: int, num_poses: int) -> None:
        self.index = index
        self.num_poses = num_poses
        super().__init__(self.msg.format(index, num_poses))


class ParticleCountError(ValueError):
    msg = 'The particle count must be at least 1, got {}.'

    def __init__(self, count: int) -> None:
        self.count = count
        super().__init__(self.msg.format(count))


class MissingInitCenterError(ValueError):
    msg = 'No center was given to initialize the particles.'

    def __init__(self) -> None:
        super().__init__(self.msg)


class EmptySampleError(ValueError):
    msg = 'A localization run needs at least one data sample.'

    def __init__(self) -> None:
        super().__init__(self.msg)


class InfeasibleCellError(ValueError):
    msg = ('Cell with {} sensor(s) and {} sample(s) is infeasible: the scene'
           ' has {} mount(s) and {} robot pose(s).')

    def __init__(self,
                 sensors: int,
                 samples: int,
                 mounts: int,
                 poses: int) -> None:
        self.sensors = sensors
        self.samples = samples
        super().__init__(self.msg.format(sensors, samples, mounts, poses))


class UnknownMethodError(ValueError):
    msg = 'Unknown method {}: choose among {}.'

    def __init__(self, name: str, choices: Iterable[str]) -> None:
        self.name = name
        self.choices = list(choices)
        super().__init__(self.msg.format(name, self.choices))
