"""
Rigid transforms and ray/surface intersection.

Everything here is in meters. Surfaces answer batched ray queries through
raycast_many; the single ray helpers are built on top of it.
"""

from __future__ import annotations

import abc
import dataclasses
import pathlib
from typing import Final, Iterable, NamedTuple, Optional, Sequence
import numpy as np
import torch

from tof_mcl import data_types
from tof_mcl import exceptions
from tof_mcl import protocols
from tof_mcl import raycasting
from tof_mcl.default_logging import logger

ORTHONORMAL_TOL: Final = 1e-9
UNIT_TOL: Final = 1e-9
_PARALLEL_EPS: Final = 1e-15


def _as_vector(value: Iterable[float] | np.ndarray) -> data_types.FloatArray:
    vector = np.asarray(value, dtype=np.float64).reshape(3)
    vector.flags.writeable = False
    return vector


def wrap_angle(angle: data_types.FloatLike) -> data_types.FloatLike:
    """Wrap radians to (-pi, pi], leaving angles already there untouched."""
    angle_array = np.asarray(angle, dtype=np.float64)
    in_range = (angle_array > -np.pi) & (angle_array <= np.pi)
    wrapped = np.where(in_range,
                       angle_array,
                       np.pi - np.mod(np.pi - angle_array, 2 * np.pi))
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def rotation_x(angle: float) -> data_types.FloatArray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1., 0., 0.], [0., c, -s], [0., s, c]])


def rotation_y(angle: float) -> data_types.FloatArray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0., s], [0., 1., 0.], [-s, 0., c]])


def rotation_z(angle: float) -> data_types.FloatArray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.], [s, c, 0.], [0., 0., 1.]])


@dataclasses.dataclass(frozen=True, eq=False)
class Pose3:
    """
    Rigid transform mapping points of a child frame into its parent frame.

    Attributes:
        translation: position of the child origin in the parent frame (m).
        rotation: orthonormal matrix with determinant +1.
    """
    translation: data_types.FloatArray = dataclasses.field(
        default_factory=lambda: np.zeros(3)
    )
    rotation: data_types.FloatArray = dataclasses.field(
        default_factory=lambda: np.eye(3)
    )

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        deviation = float(np.abs(rotation @ rotation.T - np.eye(3)).max())
        determinant = float(np.linalg.det(rotation))
        if deviation > ORTHONORMAL_TOL or determinant <= 0:
            raise exceptions.NotOrthonormalError(deviation, determinant)
        rotation.flags.writeable = False
        object.__setattr__(self, 'translation', _as_vector(self.translation))
        object.__setattr__(self, 'rotation', rotation)

    def __matmul__(self, other: Pose3) -> Pose3:
        return self.compose(other)

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(translation='
                f'{self.translation.tolist()}, rotation='
                f'{self.rotation.tolist()})')

    @classmethod
    def identity(cls) -> Pose3:
        return cls()

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> Pose3:
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix[:3, 3], matrix[:3, :3])

    def as_matrix(self) -> data_types.FloatArray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def compose(self, other: Pose3) -> Pose3:
        """Apply other first, then self."""
        return Pose3(self.rotation @ other.translation + self.translation,
                     self.rotation @ other.rotation)

    def inverse(self) -> Pose3:
        rotation_t = self.rotation.T
        return Pose3(-rotation_t @ self.translation, rotation_t)

    def apply(self, points: np.ndarray) -> data_types.FloatArray:
        """Map points of shape (..., 3) from the child to the parent frame."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> data_types.FloatArray:
        return np.asarray(vectors) @ self.rotation.T

    def is_close(self, other: Pose3, tol: float = 1e-9) -> bool:
        return bool(np.abs(self.translation - other.translation).max() <= tol
                    and np.abs(self.rotation - other.rotation).max() <= tol)


def compose(a: Pose3, b: Pose3) -> Pose3:
    return a.compose(b)


def look_at(eye: Iterable[float],
            target: Iterable[float],
            up: Iterable[float] = (0., 0., 1.)) -> Pose3:
    """
    Pose of a sensor at eye whose +z axis points at target.

    The sensor x axis is kept horizontal when possible. When the view is
    parallel to up, the world x axis is used as reference instead.
    """
    eye_vec = _as_vector(eye)
    forward = _as_vector(target) - eye_vec
    forward = forward / np.linalg.norm(forward)
    up_vec = _as_vector(up)
    x_axis = np.cross(forward, up_vec)
    if np.linalg.norm(x_axis) < 1e-9:
        x_axis = np.cross(forward, np.array([1., 0., 0.]))
        if np.linalg.norm(x_axis) < 1e-9:
            x_axis = np.cross(forward, np.array([0., 1., 0.]))
    x_axis = x_axis / np.linalg.norm(x_axis)
    y_axis = np.cross(forward, x_axis)
    rotation = np.column_stack([x_axis, y_axis, forward])
    return Pose3(eye_vec, rotation)


@dataclasses.dataclass(frozen=True)
class Pose2:
    """
    Planar pose of an object lying on a known support plane.

    Attributes:
        x: position along the world x axis (m).
        y: position along the world y axis (m).
        gamma: heading around the world z axis, wrapped to (-pi, pi].
    """
    x: float = 0.
    y: float = 0.
    gamma: float = 0.

    def __post_init__(self) -> None:
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        object.__setattr__(self, 'gamma', float(wrap_angle(self.gamma)))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> Pose2:
        return cls(float(values[0]), float(values[1]), float(values[2]))

    @classmethod
    def from_pose3(cls, pose: Pose3) -> Pose2:
        rotation = pose.rotation
        return cls(pose.translation[0],
                   pose.translation[1],
                   np.arctan2(rotation[1, 0], rotation[0, 0]))

    def as_array(self) -> data_types.FloatArray:
        return np.array([self.x, self.y, self.gamma])

    def to_pose3(self, height: float = 0.) -> Pose3:
        return Pose3(np.array([self.x, self.y, height]),
                     rotation_z(self.gamma))


@dataclasses.dataclass(frozen=True, eq=False)
class Ray:
    origin: data_types.FloatArray
    direction: data_types.FloatArray

    def __post_init__(self) -> None:
        direction = _as_vector(self.direction)
        norm = float(np.linalg.norm(direction))
        if abs(norm - 1) > UNIT_TOL:
            raise exceptions.NotUnitVectorError(norm)
        object.__setattr__(self, 'origin', _as_vector(self.origin))
        object.__setattr__(self, 'direction', direction)

    def at(self, distance: float) -> data_types.FloatArray:
        return self.origin + distance * self.direction


@dataclasses.dataclass(frozen=True, eq=False)
class Hit:
    """
    Outcome of a single ray query.

    Attributes:
        distance: distance along the ray (m), inf when there is no hit.
        point: intersection point, NaN when there is no hit.
        valid: whether the ray hits the surface at a non-negative distance.
        normal: unit surface normal facing the ray, NaN when there is no hit.
    """
    distance: float
    point: data_types.FloatArray
    valid: bool
    normal: data_types.FloatArray


class RayHits(NamedTuple):
    """Batched ray query result: distances (N,) and normals (N, 3)."""
    distances: data_types.FloatArray
    normals: data_types.FloatArray

    @property
    def valid(self) -> data_types.BoolArray:
        return np.isfinite(self.distances)


class Surface(metaclass=abc.ABCMeta):
    """
    Base class of the object models.

    Subclasses answer batched ray queries in the frame where they are
    defined. Normals in the result always face against the ray.
    """
    kind: data_types.SurfaceKind

    @abc.abstractmethod
    def raycast_many(self,
                     origins: np.ndarray,
                     directions: np.ndarray,
                     *,
                     device: Optional[torch.device | str] = None,
                     chunk_size: Optional[int] = None) -> RayHits:
        ...

    @abc.abstractmethod
    def to_mesh(self) -> TriangleMesh:
        ...

    @abc.abstractmethod
    def transformed(self, pose: Pose3) -> Surface:
        ...

    def bounds(self) -> tuple[data_types.FloatArray, data_types.FloatArray]:
        vertices = self.to_mesh().vertices
        return vertices.min(axis=0), vertices.max(axis=0)


def _slab(origins: np.ndarray,
          directions: np.ndarray,
          half_extents: np.ndarray) -> RayHits:
    """Slab test against the box [-half_extents, half_extents]."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    parallel = np.abs(directions) < _PARALLEL_EPS
    outside_slab = np.abs(origins) > half_extents
    safe_dir = np.where(parallel, 1., directions)
    t_low = (-half_extents - origins) / safe_dir
    t_high = (half_extents - origins) / safe_dir
    t_enter = np.where(parallel, -np.inf, np.minimum(t_low, t_high))
    t_exit = np.where(parallel, np.inf, np.maximum(t_low, t_high))
    enter_axis = t_enter.argmax(axis=1)
    exit_axis = t_exit.argmin(axis=1)
    rows = np.arange(len(origins))
    near = t_enter[rows, enter_axis]
    far = t_exit[rows, exit_axis]
    hit = (near <= far) & (far >= 0) & ~(parallel & outside_slab).any(axis=1)
    inside = near < 0
    distances = np.where(hit, np.where(inside, far, near), np.inf)
    axis = np.where(inside, exit_axis, enter_axis)
    normals = np.full(origins.shape, np.nan)
    normals[hit] = 0.
    hit_rows = rows[hit]
    normals[hit_rows, axis[hit]] = -np.sign(directions[hit_rows, axis[hit]])
    return RayHits(distances, normals)


class Box(Surface):
    """
    Axis-aligned box.

    Args:
        center: box center (m).
        half_extents: strictly positive half sizes along x, y and z (m).
    """
    kind = data_types.SurfaceKind.BOX

    def __init__(self,
                 center: Iterable[float],
                 half_extents: Iterable[float]) -> None:
        self.center = _as_vector(center)
        self.half_extents = _as_vector(half_extents)
        if not (self.half_extents > 0).all():
            raise exceptions.NonPositiveExtentError(self.half_extents)

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(center={self.center.tolist()}, '
                f'half_extents={self.half_extents.tolist()})')

    def raycast_many(self,
                     origins: np.ndarray,
                     directions: np.ndarray,
                     *,
                     device: Optional[torch.device | str] = None,
                     chunk_size: Optional[int] = None) -> RayHits:
        return _slab(np.asarray(origins) - self.center,
                     directions,
                     self.half_extents)

    def to_mesh(self) -> TriangleMesh:
        return box_mesh(self.half_extents).transformed(
            Pose3(self.center, np.eye(3))
        )

    def transformed(self, pose: Pose3) -> OrientedBox:
        return OrientedBox(pose @ Pose3(self.center), self.half_extents)

    def bounds(self) -> tuple[data_types.FloatArray, data_types.FloatArray]:
        return self.center - self.half_extents, self.center + self.half_extents


class OrientedBox(Surface):
    """
    Box placed by a rigid transform.

    Args:
        pose: pose of the box center and axes.
        half_extents: strictly positive half sizes along the box axes (m).
    """
    kind = data_types.SurfaceKind.ORIENTED_BOX

    def __init__(self, pose: Pose3, half_extents: Iterable[float]) -> None:
        self.pose = pose
        self.half_extents = _as_vector(half_extents)
        if not (self.half_extents > 0).all():
            raise exceptions.NonPositiveExtentError(self.half_extents)

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(pose={self.pose!r}, '
                f'half_extents={self.half_extents.tolist()})')

    def raycast_many(self,
                     origins: np.ndarray,
                     directions: np.ndarray,
                     *,
                     device: Optional[torch.device | str] = None,
                     chunk_size: Optional[int] = None) -> RayHits:
        inverse = self.pose.inverse()
        local = _slab(inverse.apply(origins),
                      inverse.rotate(directions),
                      self.half_extents)
        return RayHits(local.distances, self.pose.rotate(local.normals))

    def to_mesh(self) -> TriangleMesh:
        return box_mesh(self.half_extents).transformed(self.pose)

    def transformed(self, pose: Pose3) -> OrientedBox:
        return OrientedBox(pose @ self.pose, self.half_extents)


class TriangleMesh(Surface):
    """
    Indexed triangle mesh.

    Args:
        vertices: array of shape (V, 3) in meters.
        triangles: integer array of shape (T, 3), 0-based vertex indices.

    Raises:
        EmptyMeshError: if there is no triangle.
        TriangleIndexError: if an index does not reference a vertex.
    """
    kind = data_types.SurfaceKind.MESH

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray) -> None:
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if not len(self.triangles):
            raise exceptions.EmptyMeshError()
        out_of_range = ((self.triangles < 0)
                        | (self.triangles >= len(self.vertices)))
        if out_of_range.any():
            triangle, corner = np.argwhere(out_of_range)[0]
            raise exceptions.TriangleIndexError(
                int(triangle),
                int(self.triangles[triangle, corner]),
                len(self.vertices),
            )
        self.vertices.flags.writeable = False
        self.triangles.flags.writeable = False
        corners = self.vertices[self.triangles]
        self.face_normals = np.cross(corners[:, 1] - corners[:, 0],
                                     corners[:, 2] - corners[:, 0])

    def __repr__(self) -> str:
        return (f'{self.__class__.__name__}(vertices={len(self.vertices)}, '
                f'triangles={len(self.triangles)})')

    def __len__(self) -> int:
        return len(self.triangles)

    def raycast_many(self,
                     origins: np.ndarray,
                     directions: np.ndarray,
                     *,
                     device: Optional[torch.device | str] = None,
                     chunk_size: Optional[int] = None) -> RayHits:
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        distances, index = raycasting.intersect_triangles(
            origins,
            directions,
            self.vertices,
            self.triangles,
            device=device,
            chunk_size=chunk_size,
        )
        normals = np.full(origins.shape, np.nan)
        hit = index >= 0
        face = self.face_normals[index[hit]]
        face = face / np.linalg.norm(face, axis=1, keepdims=True)
        facing = np.einsum('ij,ij->i', face, directions[hit]) > 0
        normals[hit] = np.where(facing[:, None], -face, face)
        return RayHits(distances, normals)

    def to_mesh(self) -> TriangleMesh:
        return self

    def transformed(self, pose: Pose3) -> TriangleMesh:
        return TriangleMesh(pose.apply(self.vertices), self.triangles)

    @classmethod
    def merge(cls, meshes: Iterable[TriangleMesh]) -> TriangleMesh:
        vertices: list[np.ndarray] = []
        triangles: list[np.ndarray] = []
        offset = 0
        for mesh in meshes:
            vertices.append(mesh.vertices)
            triangles.append(mesh.triangles + offset)
            offset += len(mesh.vertices)
        if not triangles:
            raise exceptions.EmptyMeshError()
        return cls(np.concatenate(vertices), np.concatenate(triangles))


def box_mesh(half_extents: Iterable[float]) -> TriangleMesh:
    """Box centered at the origin split into 12 outward-wound triangles."""
    hx, hy, hz = _as_vector(half_extents)
    if min(hx, hy, hz) <= 0:
        raise exceptions.NonPositiveExtentError([hx, hy, hz])
    signs = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                      [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]])
    vertices = signs * np.array([hx, hy, hz])
    triangles = np.array([[0, 2, 1], [0, 3, 2],
                          [4, 5, 6], [4, 6, 7],
                          [0, 1, 5], [0, 5, 4],
                          [2, 3, 7], [2, 7, 6],
                          [1, 2, 6], [1, 6, 5],
                          [3, 0, 4], [3, 4, 7]])
    return TriangleMesh(vertices, triangles)


def parse_obj(text: str) -> TriangleMesh:
    """
    Read the v and f records of a Wavefront OBJ text.

    Face corners written as i/t/n keep the vertex index only. Other records
    are ignored.

    Raises:
        ObjParseError: on a malformed v or f record, with its line number.
    """
    vertices: list[list[float]] = []
    triangles: list[list[int]] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        fields = line.split('#', 1)[0].split()
        if not fields:
            continue
        record, values = fields[0], fields[1:]
        if record == 'v':
            if len(values) not in (3, 4):
                raise exceptions.ObjParseError(line_number,
                                               'expected 3 coordinates')
            try:
                vertices.append([float(value) for value in values[:3]])
            except ValueError:
                raise exceptions.ObjParseError(
                    line_number, 'non-numeric coordinate'
                ) from None
        elif record == 'f':
            if len(values) != 3:
                raise exceptions.ObjParseError(line_number,
                                               'only triangles are supported')
            try:
                indices = [int(value.split('/')[0]) for value in values]
            except ValueError:
                raise exceptions.ObjParseError(
                    line_number, 'non-integer vertex index'
                ) from None
            if min(indices) < 1 or max(indices) > len(vertices):
                raise exceptions.ObjParseError(
                    line_number, 'vertex index out of range'
                )
            triangles.append([index - 1 for index in indices])
    if not triangles:
        raise exceptions.EmptyMeshError()
    return TriangleMesh(np.array(vertices), np.array(triangles))


def load_obj(path: data_types.PathLike) -> TriangleMesh:
    mesh = parse_obj(pathlib.Path(path).read_text())
    logger.debug('Loaded %(path)s: %(triangles)d triangles.',
                 {'path': path, 'triangles': len(mesh)})
    return mesh


def save_obj(mesh: TriangleMesh, path: data_types.PathLike) -> None:
    lines = [f'v {x!r} {y!r} {z!r}' for x, y, z in mesh.vertices.tolist()]
    lines += [f'f {i + 1} {j + 1} {k + 1}'
              for i, j, k in mesh.triangles.tolist()]
    pathlib.Path(path).write_text('\n'.join(lines) + '\n')
    return


def raycast(ray: Ray, surface: Surface) -> Hit:
    result = surface.raycast_many(ray.origin[None], ray.direction[None])
    distance = float(result.distances[0])
    if not np.isfinite(distance):
        return Hit(np.inf, np.full(3, np.nan), False, np.full(3, np.nan))
    return Hit(distance, ray.at(distance), True, result.normals[0])


def raycast_beams(sensor_pose: Pose3,
                  grid: protocols.BeamGridProtocol,
                  surface: Surface,
                  *,
                  device: Optional[torch.device | str] = None,
                  chunk_size: Optional[int] = None) -> RayHits:
    """Batched version of raycast_scene returning arrays."""
    directions = sensor_pose.rotate(grid.beam_directions)
    origins = np.broadcast_to(sensor_pose.translation, directions.shape)
    return surface.raycast_many(origins,
                                directions,
                                device=device,
                                chunk_size=chunk_size)


def raycast_scene(sensor_pose: Pose3,
                  grid: protocols.BeamGridProtocol,
                  surface: Surface,
                  object_pose: Optional[Pose3] = None) -> list[Hit]:
    """
    Cast every beam of the grid from the sensor.

    Args:
        sensor_pose: pose of the sensor in the world frame.
        grid: beam directions in the sensor frame, row-major.
        surface: the object model.
        object_pose: where the surface is placed. Defaults to the identity.

    Returns:
        one Hit per beam in the grid order, expressed in the world frame.
    """
    if object_pose is not None:
        surface = surface.transformed(object_pose)
    result = raycast_beams(sensor_pose, grid, surface)
    directions = sensor_pose.rotate(grid.beam_directions)
    hits: list[Hit] = []
    for distance, normal, direction in zip(result.distances,
                                           result.normals,
                                           directions):
        if np.isfinite(distance):
            point = sensor_pose.translation + distance * direction
            hits.append(Hit(float(distance), point, True, normal))
        else:
            hits.append(Hit(np.inf,
                            np.full(3, np.nan),
                            False,
                            np.full(3, np.nan)))
    return hits
