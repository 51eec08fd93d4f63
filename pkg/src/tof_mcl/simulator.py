"""
Scenes and data samples.

A scene holds the object model in its own frame, where the object truly
lies, the sensors mounted on the end effector and the end effector poses the
robot visits. A data sample gathers the frames of every sensor at one of
those poses, with the beams that survive the crop rule.
"""

from __future__ import annotations

import dataclasses
import math
import pathlib
from typing import Any, Final, Iterable, Optional, Sequence
import numpy as np
import pandas as pd
import torch
import yaml  # type: ignore

from tof_mcl import data_types
from tof_mcl import exceptions
from tof_mcl import geometry
from tof_mcl import sensor_model
from tof_mcl.default_logging import logger

CRATE_SIZE: Final = (0.6, 0.4, 0.3)
CRATE_WALL: Final = 0.01
CRATE_CUTOFF_MM: Final = 600.
CRATE_TRUTH: Final = geometry.Pose2(0.55, 0., math.radians(10.))
STATUE_TRUTH: Final = geometry.Pose2(0.5, 0.05, math.radians(-20.))
PRISM_MARGIN: Final = 0.03
SAMPLE_COLUMNS: Final = ('pose_index',
                         'sensor_id',
                         'beam_index',
                         'range_mm',
                         'accepted',
                         'frame_index')


@dataclasses.dataclass(frozen=True, eq=False)
class Crop:
    """
    Rejection rule applied to the readings of a data sample.

    Both rules may be active, a beam must then pass both.

    Attributes:
        max_range_mm: readings above it are rejected.
        lower: lower corner of the accepted world volume (m).
        upper: upper corner of the accepted world volume (m).
    """
    max_range_mm: Optional[float] = None
    lower: Optional[data_types.FloatArray] = None
    upper: Optional[data_types.FloatArray] = None

    def __post_init__(self) -> None:
        if self.max_range_mm is not None:
            if not self.max_range_mm > sensor_model.MIN_RANGE_MM:
                raise exceptions.SceneConfigError(
                    f'cutoff {self.max_range_mm} mm must exceed '
                    f'{sensor_model.MIN_RANGE_MM} mm'
                )
        if (self.lower is None) != (self.upper is None):
            raise exceptions.SceneConfigError(
                'the crop volume needs both corners'
            )
        if self.lower is not None and self.upper is not None:
            lower = np.asarray(self.lower, dtype=np.float64).reshape(3)
            upper = np.asarray(self.upper, dtype=np.float64).reshape(3)
            if not (lower < upper).all():
                raise exceptions.SceneConfigError(
                    f'crop corners {lower.tolist()} and {upper.tolist()} '
                    f'do not bound a volume'
                )
            object.__setattr__(self, 'lower', lower)
            object.__setattr__(self, 'upper', upper)

    @classmethod
    def around(cls,
               surface: geometry.Surface,
               margin: float = PRISM_MARGIN) -> Crop:
        lower, upper = surface.bounds()
        return cls(lower=lower - margin, upper=upper + margin)

    def accept(self,
               scan: sensor_model.ScanFrame,
               grid: sensor_model.BeamGrid,
               sensor_pose: geometry.Pose3) -> data_types.BoolArray:
        accepted = scan.valid.copy()
        if self.max_range_mm is not None:
            accepted &= scan.ranges_mm <= self.max_range_mm
        if self.lower is not None and self.upper is not None:
            points = np.full((len(accepted), 3), np.nan)
            points[scan.valid] = sensor_model.scan_to_points(scan,
                                                             grid,
                                                             sensor_pose)
            with np.errstate(invalid='ignore'):
                inside = ((points >= self.lower)
                          & (points <= self.upper)).all(axis=1)
            accepted &= inside
        return accepted

    def to_dict(self) -> dict[str, Any]:
        crop: dict[str, Any] = {}
        if self.max_range_mm is not None:
            crop['max_range_mm'] = self.max_range_mm
        if self.lower is not None and self.upper is not None:
            crop['lower'] = self.lower.tolist()
            crop['upper'] = self.upper.tolist()
        return crop


@dataclasses.dataclass(frozen=True, eq=False)
class Scene:
    """
    Object, ground truth and robot viewpoints of a localization task.

    Attributes:
        surface: the object model in the object frame.
        object_truth: where the object lies on the support plane.
        sensor_mounts: pose of each sensor in the end effector frame.
        robot_poses: end effector poses in the world frame.
        crop: rejection rule of the readings.
        support_height: height of the support plane (m).
        name: label used in logs and outputs.
    """
    surface: geometry.Surface
    object_truth: geometry.Pose2
    sensor_mounts: tuple[geometry.Pose3, ...]
    robot_poses: tuple[geometry.Pose3, ...]
    crop: Crop = dataclasses.field(default_factory=Crop)
    support_height: float = 0.
    name: str = 'scene'

    def __post_init__(self) -> None:
        object.__setattr__(self, 'sensor_mounts', tuple(self.sensor_mounts))
        object.__setattr__(self, 'robot_poses', tuple(self.robot_poses))
        if not self.sensor_mounts:
            raise exceptions.SceneConfigError('no sensor mount')
        if not self.robot_poses:
            raise exceptions.SceneConfigError('no robot pose')

    @property
    def num_mounts(self) -> int:
        return len(self.sensor_mounts)

    @property
    def num_poses(self) -> int:
        return len(self.robot_poses)

    def object_pose(self, hypothesis: Optional[geometry.Pose2] = None
                    ) -> geometry.Pose3:
        planar = self.object_truth if hypothesis is None else hypothesis
        return planar.to_pose3(self.support_height)

    def placed_surface(self, hypothesis: Optional[geometry.Pose2] = None
                       ) -> geometry.Surface:
        return self.surface.transformed(self.object_pose(hypothesis))

    def sensor_pose(self, pose_index: int, mount_index: int
                    ) -> geometry.Pose3:
        if not 0 <= pose_index < self.num_poses:
            raise exceptions.PoseIndexError(pose_index, self.num_poses)
        return self.robot_poses[pose_index] @ self.sensor_mounts[mount_index]


@dataclasses.dataclass(frozen=True, eq=False)
class DataSample:
    """
    Readings of all sensors at one robot pose.

    Attributes:
        robot_pose_index: index of the robot pose in the scene.
        frames: one frame per sensor, in mount order.
        accepted: beams of each frame kept after the crop rule.
        sensor_poses: world pose of each sensor when the frame was taken.
    """
    robot_pose_index: int
    frames: tuple[sensor_model.ScanFrame, ...]
    accepted: tuple[data_types.BoolArray, ...]
    sensor_poses: tuple[geometry.Pose3, ...]

    @property
    def accepted_count(self) -> int:
        return int(sum(mask.sum() for mask in self.accepted))

    def restricted(self, sensors: int) -> DataSample:
        """The same sample keeping only the first sensors."""
        return DataSample(self.robot_pose_index,
                          self.frames[:sensors],
                          self.accepted[:sensors],
                          self.sensor_poses[:sensors])


def collect_sample(scene: Scene,
                   pose_index: int,
                   noise: sensor_model.NoiseModel,
                   rng: np.random.Generator,
                   *,
                   grid: Optional[sensor_model.BeamGrid] = None,
                   frame_index: int = 0,
                   device: Optional[torch.device | str] = None,
                   chunk_size: Optional[int] = None) -> DataSample:
    """
    Simulate every mounted sensor at one robot pose and apply the crop.

    Raises:
        PoseIndexError: if pose_index does not address a robot pose.
    """
    if not 0 <= pose_index < scene.num_poses:
        raise exceptions.PoseIndexError(pose_index, scene.num_poses)
    grid = sensor_model.build_beam_grid() if grid is None else grid
    surface = scene.placed_surface()
    frames: list[sensor_model.ScanFrame] = []
    accepted: list[data_types.BoolArray] = []
    sensor_poses: list[geometry.Pose3] = []
    for mount_index in range(scene.num_mounts):
        sensor_pose = scene.sensor_pose(pose_index, mount_index)
        frame = sensor_model.simulate_scan(sensor_pose,
                                           surface,
                                           noise,
                                           rng,
                                           grid=grid,
                                           sensor_id=mount_index,
                                           timestamp_index=frame_index,
                                           device=device,
                                           chunk_size=chunk_size)
        frames.append(frame)
        accepted.append(scene.crop.accept(frame, grid, sensor_pose))
        sensor_poses.append(sensor_pose)
    extrapolated = sum(int((frame.extrapolated & mask).sum())
                       for frame, mask in zip(frames, accepted))
    if extrapolated:
        logger.warning('Pose %(pose)d: %(count)d accepted beams beyond the '
                       'characterized incidence.',
                       {'pose': pose_index, 'count': extrapolated})
    return DataSample(pose_index,
                      tuple(frames),
                      tuple(accepted),
                      tuple(sensor_poses))


def collect_samples(scene: Scene,
                    noise: sensor_model.NoiseModel,
                    rng: np.random.Generator,
                    *,
                    pose_indices: Optional[Iterable[int]] = None,
                    frames_per_sample: int = 1,
                    grid: Optional[sensor_model.BeamGrid] = None,
                    device: Optional[torch.device | str] = None,
                    chunk_size: Optional[int] = None) -> list[DataSample]:
    """Samples of the given poses, each acquired frames_per_sample times."""
    if pose_indices is None:
        pose_indices = range(scene.num_poses)
    return [collect_sample(scene,
                           pose_index,
                           noise,
                           rng,
                           grid=grid,
                           frame_index=frame_index,
                           device=device,
                           chunk_size=chunk_size)
            for pose_index in pose_indices
            for frame_index in range(frames_per_sample)]


def samples_to_frame(samples: Sequence[DataSample]) -> pd.DataFrame:
    """One row per beam of every frame, ranges in mm."""
    tables: list[pd.DataFrame] = []
    for sample in samples:
        for frame, mask in zip(sample.frames, sample.accepted):
            beams = len(frame.ranges)
            tables.append(pd.DataFrame({
                'pose_index': np.full(beams, sample.robot_pose_index),
                'sensor_id': np.full(beams, frame.sensor_id),
                'beam_index': np.arange(beams),
                'range_mm': frame.ranges_mm,
                'accepted': mask,
                'frame_index': np.full(beams, frame.timestamp_index),
            }))
    if not tables:
        return pd.DataFrame(columns=list(SAMPLE_COLUMNS))
    return pd.concat(tables, ignore_index=True)


def make_sensor_ring(count: int = 4,
                     radius: float = 0.05,
                     tilt_deg: float = 15.) -> tuple[geometry.Pose3, ...]:
    """
    Sensors at equal spacing on a ring around the end effector axis.

    Each sensor looks along the end effector z axis tilted outward by
    tilt_deg.
    """
    if count < 1:
        raise exceptions.SceneConfigError('a ring needs at least one sensor')
    mounts: list[geometry.Pose3] = []
    for k in range(count):
        azimuth = 2 * math.pi * k / count
        rotation = (geometry.rotation_z(azimuth)
                    @ geometry.rotation_y(math.radians(tilt_deg)))
        translation = (radius * math.cos(azimuth),
                       radius * math.sin(azimuth),
                       0.)
        mounts.append(geometry.Pose3(np.array(translation), rotation))
    return tuple(mounts)


def make_crate_mesh(size: Sequence[float] = CRATE_SIZE,
                    wall: float = CRATE_WALL) -> geometry.TriangleMesh:
    """
    Open-top crate made of a floor and four walls.

    The origin is at the center of the outer bottom face.
    """
    length, width, height = (float(value) for value in size)
    half_wall = wall / 2
    identity = np.eye(3)
    panels = [
        ((0., 0., half_wall),
         (length / 2, width / 2, half_wall)),
        ((length / 2 - half_wall, 0., height / 2),
         (half_wall, width / 2, height / 2)),
        ((-length / 2 + half_wall, 0., height / 2),
         (half_wall, width / 2, height / 2)),
        ((0., width / 2 - half_wall, height / 2),
         (length / 2 - wall, half_wall, height / 2)),
        ((0., -width / 2 + half_wall, height / 2),
         (length / 2 - wall, half_wall, height / 2)),
    ]
    return geometry.TriangleMesh.merge(
        geometry.OrientedBox(geometry.Pose3(np.array(center), identity),
                             half_extents).to_mesh()
        for center, half_extents in panels
    )


def _ellipsoid(center: Sequence[float],
               radii: Sequence[float],
               n_lon: int,
               n_lat: int) -> geometry.TriangleMesh:
    vertices = [(0., 0., 1.)]
    for i in range(1, n_lat):
        polar = math.pi * i / n_lat
        for j in range(n_lon):
            azimuth = 2 * math.pi * j / n_lon
            vertices.append((math.sin(polar) * math.cos(azimuth),
                             math.sin(polar) * math.sin(azimuth),
                             math.cos(polar)))
    vertices.append((0., 0., -1.))
    south = len(vertices) - 1
    triangles: list[tuple[int, int, int]] = []
    for j in range(n_lon):
        triangles.append((0, 1 + j, 1 + (j + 1) % n_lon))
    for i in range(n_lat - 2):
        ring = 1 + i * n_lon
        below = ring + n_lon
        for j in range(n_lon):
            k = (j + 1) % n_lon
            triangles.append((ring + j, below + j, below + k))
            triangles.append((ring + j, below + k, ring + k))
    last = 1 + (n_lat - 2) * n_lon
    for j in range(n_lon):
        triangles.append((last + j, south, last + (j + 1) % n_lon))
    scaled = np.array(vertices) * np.asarray(radii) + np.asarray(center)
    return geometry.TriangleMesh(scaled, np.array(triangles))


def _cylinder(start: Sequence[float],
              end: Sequence[float],
              radius: float,
              segments: int = 8) -> geometry.TriangleMesh:
    start_vec = np.asarray(start, dtype=np.float64)
    end_vec = np.asarray(end, dtype=np.float64)
    axis = end_vec - start_vec
    frame = geometry.look_at(start_vec, end_vec, up=(1., 0., 0.))
    angles = 2 * np.pi * np.arange(segments) / segments
    circle = np.stack([radius * np.cos(angles),
                       radius * np.sin(angles),
                       np.zeros(segments)], axis=1)
    length = float(np.linalg.norm(axis))
    top = circle + np.array([0., 0., length])
    local = np.vstack([circle, top, [[0., 0., 0.], [0., 0., length]]])
    bottom_center, top_center = 2 * segments, 2 * segments + 1
    triangles: list[tuple[int, int, int]] = []
    for j in range(segments):
        k = (j + 1) % segments
        triangles.append((j, k, segments + k))
        triangles.append((j, segments + k, segments + j))
        triangles.append((bottom_center, k, j))
        triangles.append((top_center, segments + j, segments + k))
    return geometry.TriangleMesh(frame.apply(local), np.array(triangles))


def make_statue_mesh() -> geometry.TriangleMesh:
    """
    Four-legged animal figure of a few hundred triangles.

    The origin lies on the ground between the legs and the head points
    along +x.
    """
    parts = [_ellipsoid((0., 0., 0.17), (0.12, 0.05, 0.06), 16, 8)]
    for x in (-0.08, 0.08):
        for y in (-0.03, 0.03):
            parts.append(_cylinder((x, y, 0.), (x, y, 0.13), 0.012))
    parts.append(_cylinder((0.1, 0., 0.2), (0.15, 0., 0.3), 0.02))
    parts.append(_ellipsoid((0.17, 0., 0.31), (0.05, 0.025, 0.03), 8, 6))
    return geometry.TriangleMesh.merge(parts)


def sample_inside_viewpoints(count: int,
                             rng: np.random.Generator,
                             object_pose: geometry.Pose3,
                             *,
                             inner_half_size: Sequence[float] = (0.29, 0.19),
                             standoff_range: Sequence[float] = (0., 0.1),
                             lateral_range: float = 0.08,
                             eye_height_range: Sequence[float] = (0.16, 0.22),
                             target_height_range: Sequence[float] = (0.1,
                                                                     0.16),
                             aim: Optional[geometry.Pose3] = None
                             ) -> tuple[geometry.Pose3, ...]:
    """
    End effector poses inside an open container, each facing an inner wall.

    The faced walls follow the order +x, +y, -x, -y of the object frame, so
    any two consecutive poses see walls with perpendicular normals. The eye
    stands back from the center by a standoff and the target lies on the
    wall, both shifted sideways by up to lateral_range.

    Args:
        count: number of poses.
        rng: generator of the draw.
        object_pose: pose of the container in the world.
        inner_half_size: half extents (m) of the inner walls along x and y.
        standoff_range: distance (m) of the eye from the center, away from
            the faced wall.
        lateral_range: sideways shift (m) of the eye and of the target.
        eye_height_range: height (m) of the eye above the object origin.
        target_height_range: height (m) of the target on the wall.
        aim: mount whose boresight hits the target. Defaults to the end
            effector axis.
    """
    aim_inverse = (geometry.Pose3() if aim is None else aim).inverse()
    poses: list[geometry.Pose3] = []
    for index in range(count):
        axis = index % 2
        sign = 1. if index % 4 < 2 else -1.
        normal = np.zeros(3)
        normal[axis] = sign
        sideways = np.zeros(3)
        sideways[1 - axis] = 1.
        eye = (-rng.uniform(*standoff_range) * normal
               + rng.uniform(-lateral_range, lateral_range) * sideways)
        eye[2] = rng.uniform(*eye_height_range)
        target = (inner_half_size[axis] * normal
                  + rng.uniform(-lateral_range, lateral_range) * sideways)
        target[2] = rng.uniform(*target_height_range)
        view = geometry.look_at(eye, target, up=(0., 0., 1.))
        poses.append(object_pose @ view @ aim_inverse)
    return tuple(poses)


def sample_orbit_viewpoints(count: int,
                            rng: np.random.Generator,
                            target: Sequence[float],
                            *,
                            radius_range: Sequence[float] = (0.3, 0.4),
                            height_range: Sequence[float] = (0.15, 0.3),
                            facing_azimuth: Optional[float] = None,
                            half_spread_deg: float = 90.
                            ) -> tuple[geometry.Pose3, ...]:
    """
    End effector poses on an orbit around the target, looking at it.

    The azimuth is drawn within half_spread_deg of facing_azimuth, which
    defaults to the direction from the target to the world origin where the
    robot stands.
    """
    target_vec = np.asarray(target, dtype=np.float64)
    if facing_azimuth is None:
        facing_azimuth = math.atan2(-target_vec[1], -target_vec[0])
    spread = math.radians(half_spread_deg)
    poses: list[geometry.Pose3] = []
    for _ in range(count):
        radius = rng.uniform(*radius_range)
        azimuth = facing_azimuth + rng.uniform(-spread, spread)
        eye = np.array([target_vec[0] + radius * math.cos(azimuth),
                        target_vec[1] + radius * math.sin(azimuth),
                        rng.uniform(*height_range)])
        poses.append(geometry.look_at(eye, target_vec))
    return tuple(poses)


def make_crate_scene(truth: geometry.Pose2 = CRATE_TRUTH,
                     *,
                     size: Sequence[float] = CRATE_SIZE,
                     wall: float = CRATE_WALL,
                     sensor_mounts: Optional[Sequence[geometry.Pose3]] = None,
                     robot_poses: Optional[Sequence[geometry.Pose3]] = None,
                     num_poses: int = 10,
                     seed: int = 0,
                     cutoff_mm: float = CRATE_CUTOFF_MM) -> Scene:
    """
    Crate task: the sensors look inside an open crate.

    Readings beyond cutoff_mm fall outside the crate and are rejected. When
    not given, the viewpoints are drawn with seed so that the first sensor
    faces the inner walls in turn.
    """
    mounts = make_sensor_ring() if sensor_mounts is None else sensor_mounts
    if robot_poses is None:
        inner = (size[0] / 2 - wall, size[1] / 2 - wall)
        aim = mounts[0] if mounts else None
        robot_poses = sample_inside_viewpoints(num_poses,
                                               np.random.default_rng(seed),
                                               truth.to_pose3(),
                                               inner_half_size=inner,
                                               aim=aim)
    return Scene(make_crate_mesh(size, wall),
                 truth,
                 tuple(mounts),
                 tuple(robot_poses),
                 Crop(max_range_mm=cutoff_mm),
                 name='crate')


def make_mesh_scene(mesh: data_types.PathLike | geometry.Surface,
                    truth: geometry.Pose2 = STATUE_TRUTH,
                    *,
                    sensor_mounts: Optional[Sequence[geometry.Pose3]] = None,
                    robot_poses: Optional[Sequence[geometry.Pose3]] = None,
                    num_poses: int = 6,
                    seed: int = 0,
                    margin: float = PRISM_MARGIN,
                    name: Optional[str] = None) -> Scene:
    """
    Free-standing object seen from an orbit.

    Args:
        mesh: OBJ file of the object, or an already built surface.
        truth: where the object lies.
        sensor_mounts: defaults to the 4-sensor ring.
        robot_poses: defaults to num_poses orbit viewpoints drawn with seed.
        num_poses: number of viewpoints drawn when none are given.
        seed: seed of the viewpoint draw.
        margin: the crop keeps the bounding box of the placed object grown
            by this margin (m).
        name: label of the scene. Defaults to the file stem.
    """
    if isinstance(mesh, geometry.Surface):
        surface = mesh
        label = name or 'mesh'
    else:
        surface = geometry.load_obj(mesh)
        label = name or pathlib.Path(mesh).stem
    mounts = make_sensor_ring() if sensor_mounts is None else sensor_mounts
    placed = surface.transformed(truth.to_pose3())
    if robot_poses is None:
        lower, upper = placed.bounds()
        robot_poses = sample_orbit_viewpoints(num_poses,
                                              np.random.default_rng(seed),
                                              (lower + upper) / 2)
    return Scene(surface,
                 truth,
                 tuple(mounts),
                 tuple(robot_poses),
                 Crop.around(placed, margin),
                 name=label)


def make_statue_scene(truth: geometry.Pose2 = STATUE_TRUTH,
                      **kwargs: Any) -> Scene:
    return make_mesh_scene(make_statue_mesh(), truth, name='statue', **kwargs)


PRESETS: Final = {'crate': make_crate_scene, 'statue': make_statue_scene}


def _pose3_to_dict(pose: geometry.Pose3) -> dict[str, Any]:
    return {'translation': pose.translation.tolist(),
            'rotation': pose.rotation.tolist()}


def _pose3_from_dict(entry: dict[str, Any]) -> geometry.Pose3:
    if 'eye' in entry:
        return geometry.look_at(entry['eye'], entry['target'])
    return geometry.Pose3(np.array(entry['translation']),
                          np.array(entry.get('rotation', np.eye(3))))


def _surface_to_dict(surface: geometry.Surface) -> dict[str, Any]:
    kind = surface.kind.value
    if isinstance(surface, geometry.Box):
        return {'kind': kind,
                'center': surface.center.tolist(),
                'half_extents': surface.half_extents.tolist()}
    if isinstance(surface, geometry.OrientedBox):
        return {'kind': kind,
                **_pose3_to_dict(surface.pose),
                'half_extents': surface.half_extents.tolist()}
    mesh = surface.to_mesh()
    return {'kind': data_types.SurfaceKind.MESH.value,
            'vertices': mesh.vertices.tolist(),
            'triangles': mesh.triangles.tolist()}


def _surface_from_dict(entry: dict[str, Any],
                       base_dir: pathlib.Path) -> geometry.Surface:
    kind = entry.get('kind')
    match kind:
        case 'box':
            return geometry.Box(entry['center'], entry['half_extents'])
        case 'oriented_box':
            return geometry.OrientedBox(_pose3_from_dict(entry),
                                        entry['half_extents'])
        case 'mesh' if 'path' in entry:
            return geometry.load_obj(base_dir / entry['path'])
        case 'mesh':
            return geometry.TriangleMesh(np.array(entry['vertices']),
                                         np.array(entry['triangles']))
        case 'crate':
            return make_crate_mesh(entry.get('size', CRATE_SIZE),
                                   entry.get('wall', CRATE_WALL))
        case 'statue':
            return make_statue_mesh()
    raise exceptions.SceneConfigError(f'unknown surface kind {kind}')


def pose2_from_dict(entry: dict[str, Any]) -> geometry.Pose2:
    if 'gamma' in entry:
        gamma = float(entry['gamma'])
    else:
        gamma = math.radians(entry.get('gamma_deg', 0.))
    return geometry.Pose2(entry['x'], entry['y'], gamma)


def scene_from_dict(config: dict[str, Any],
                    base_dir: data_types.PathLike = '.') -> Scene:
    """
    Build a scene from its dictionary form.

    Mounts may be given as a list of poses or as {"ring": {...}} with the
    arguments of make_sensor_ring. Robot poses may be a list of poses (or of
    {"eye", "target"} pairs) or {"sample": {"kind": "inside" | "orbit",
    "count": n, "seed": s}}. Inside viewpoints aim the first mount at the
    inner walls, found from the surface bounds less the wall thickness unless
    inner_half_size is given. The crop accepts max_range_mm, the lower and
    upper corners, or a margin around the placed object.

    Raises:
        SceneConfigError: if a field is missing or malformed.
    """
    try:
        surface = _surface_from_dict(config['surface'],
                                     pathlib.Path(base_dir))
        truth = pose2_from_dict(config['object_truth'])
        support_height = float(config.get('support_height', 0.))
        object_pose = truth.to_pose3(support_height)
        placed = surface.transformed(object_pose)
        mounts_entry = config.get('sensor_mounts', {'ring': {}})
        if isinstance(mounts_entry, dict):
            mounts = make_sensor_ring(**mounts_entry.get('ring', {}))
        else:
            mounts = tuple(_pose3_from_dict(m) for m in mounts_entry)
        poses_entry = config['robot_poses']
        if isinstance(poses_entry, dict):
            sample = dict(poses_entry['sample'])
            kind = sample.pop('kind', 'inside')
            count = int(sample.pop('count', 6))
            rng = np.random.default_rng(int(sample.pop('seed', 0)))
            if kind == 'inside':
                if 'inner_half_size' not in sample:
                    _, upper = surface.bounds()
                    wall = float(config['surface'].get('wall', CRATE_WALL))
                    sample['inner_half_size'] = (upper[0] - wall,
                                                 upper[1] - wall)
                poses = sample_inside_viewpoints(count, rng, object_pose,
                                                 aim=mounts[0],
                                                 **sample)
            elif kind == 'orbit':
                lower, upper = placed.bounds()
                poses = sample_orbit_viewpoints(count, rng,
                                                (lower + upper) / 2,
                                                **sample)
            else:
                raise exceptions.SceneConfigError(
                    f'unknown viewpoint distribution {kind}'
                )
        else:
            poses = tuple(_pose3_from_dict(p) for p in poses_entry)
        crop_entry = dict(config.get('crop', {}))
        if 'margin' in crop_entry:
            crop = Crop.around(placed, float(crop_entry['margin']))
        else:
            crop = Crop(crop_entry.get('max_range_mm'),
                        crop_entry.get('lower'),
                        crop_entry.get('upper'))
    except (KeyError, TypeError, ValueError) as err:
        if type(err).__module__ == exceptions.__name__:
            raise
        raise exceptions.SceneConfigError(f'{type(err).__name__}: {err}'
                                          ) from err
    return Scene(surface,
                 truth,
                 mounts,
                 poses,
                 crop,
                 support_height,
                 str(config.get('name', 'scene')))


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    """Explicit dictionary form, every pose written out."""
    truth = scene.object_truth
    return {'name': scene.name,
            'surface': _surface_to_dict(scene.surface),
            'object_truth': {'x': truth.x, 'y': truth.y, 'gamma': truth.gamma},
            'support_height': scene.support_height,
            'sensor_mounts': [_pose3_to_dict(m) for m in scene.sensor_mounts],
            'robot_poses': [_pose3_to_dict(p) for p in scene.robot_poses],
            'crop': scene.crop.to_dict()}


def load_scene(path: data_types.PathLike) -> Scene:
    """Read a scene file, YAML or JSON."""
    path = pathlib.Path(path)
    try:
        config = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as err:
        raise exceptions.SceneConfigError(f'{path}: {err}') from err
    if not isinstance(config, dict):
        raise exceptions.SceneConfigError(f'{path}: not a mapping')
    return scene_from_dict(config, path.parent)


def save_scene(scene: Scene, path: data_types.PathLike) -> None:
    with pathlib.Path(path).open('w') as scene_file:
        yaml.safe_dump(scene_to_dict(scene), scene_file, sort_keys=False)
    return
