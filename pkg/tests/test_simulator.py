import math

import numpy as np
import pytest

from tof_mcl import exceptions
from tof_mcl import geometry
from tof_mcl import sensor_model
from tof_mcl import simulator
from tof_mcl.sensor_model import NoiseModel
from tof_mcl.simulator import Crop


@pytest.fixture(scope='module')
def crate() -> simulator.Scene:
    return simulator.make_crate_scene()


def wall_scene(crop: Crop = Crop()) -> simulator.Scene:
    wall = geometry.Box((0., 0., 0.31), (1., 1., 0.01))
    return simulator.Scene(wall,
                           geometry.Pose2(),
                           (geometry.Pose3(),),
                           (geometry.Pose3(),),
                           crop)


def test_sensor_ring():
    mounts = simulator.make_sensor_ring(count=4, radius=0.05, tilt_deg=15.)
    assert len(mounts) == 4
    for mount in mounts:
        assert np.linalg.norm(mount.translation) == pytest.approx(0.05)
        assert mount.rotation[2, 2] == pytest.approx(math.cos(math.radians(
            15.
        )))
        outward = mount.rotation[:2, 2] @ mount.translation[:2]
        assert outward > 0
    with pytest.raises(exceptions.SceneConfigError):
        simulator.make_sensor_ring(count=0)


def test_crate_mesh_bounds():
    lower, upper = simulator.make_crate_mesh().bounds()
    np.testing.assert_allclose(lower, [-0.3, -0.2, 0.], atol=1e-12)
    np.testing.assert_allclose(upper, [0.3, 0.2, 0.3], atol=1e-12)


def test_statue_mesh_size():
    mesh = simulator.make_statue_mesh()
    assert 100 < len(mesh) < 1000
    lower, upper = mesh.bounds()
    assert lower[2] == pytest.approx(0., abs=1e-9)
    assert upper[0] > 0.15


def test_crate_scene(crate):
    assert crate.name == 'crate'
    assert crate.num_mounts == 4
    assert crate.num_poses == 10
    assert crate.crop.max_range_mm == simulator.CRATE_CUTOFF_MM
    assert crate.object_truth == simulator.CRATE_TRUTH
    again = simulator.make_crate_scene()
    for left, right in zip(crate.robot_poses, again.robot_poses):
        assert left.is_close(right, tol=0.)


@pytest.mark.parametrize('seed', range(5))
def test_crate_viewpoints_face_the_walls(seed):
    scene = simulator.make_crate_scene(num_poses=8, seed=seed)
    grid = sensor_model.build_beam_grid()
    to_object = scene.object_pose().inverse()
    inner = (0.29, 0.19)
    for index in range(scene.num_poses):
        sensor_pose = scene.sensor_pose(index, 0)
        hits = geometry.raycast_beams(sensor_pose, grid,
                                      scene.placed_surface())
        in_range = hits.valid & (1000 * hits.distances
                                 <= simulator.CRATE_CUTOFF_MM)
        directions = sensor_pose.rotate(grid.beam_directions)
        points = (sensor_pose.translation
                  + hits.distances[in_range, None] * directions[in_range])
        local = to_object.apply(points)
        axis = index % 2
        sign = 1. if index % 4 < 2 else -1.
        on_wall = np.abs(sign * local[:, axis] - inner[axis]) < 1e-6
        assert on_wall.sum() >= 16


def test_sensor_pose(crate):
    pose = crate.sensor_pose(2, 1)
    expected = crate.robot_poses[2] @ crate.sensor_mounts[1]
    assert pose.is_close(expected)
    with pytest.raises(exceptions.PoseIndexError):
        crate.sensor_pose(crate.num_poses, 0)


def test_collect_sample_in_crate(crate):
    rng = np.random.default_rng(0)
    sample = simulator.collect_sample(crate, 0, NoiseModel(), rng)
    assert sample.robot_pose_index == 0
    assert len(sample.frames) == 4
    assert [frame.sensor_id for frame in sample.frames] == [0, 1, 2, 3]
    assert sample.accepted_count > 0
    for frame, mask in zip(sample.frames, sample.accepted):
        assert (frame.ranges_mm[mask] <= simulator.CRATE_CUTOFF_MM).all()
        assert not (mask & ~frame.valid).any()
    smaller = sample.restricted(2)
    assert len(smaller.frames) == 2
    assert smaller.accepted_count <= sample.accepted_count
    with pytest.raises(exceptions.PoseIndexError):
        simulator.collect_sample(crate, -1, NoiseModel(), rng)


def test_collection_is_reproducible(crate):
    first = simulator.collect_samples(crate, NoiseModel(),
                                      np.random.default_rng(4),
                                      pose_indices=[0, 1])
    second = simulator.collect_samples(crate, NoiseModel(),
                                       np.random.default_rng(4),
                                       pose_indices=[0, 1])
    for left, right in zip(first, second):
        for frame_left, frame_right in zip(left.frames, right.frames):
            np.testing.assert_array_equal(frame_left.ranges,
                                          frame_right.ranges)


def test_frames_per_sample(crate):
    samples = simulator.collect_samples(crate, NoiseModel(),
                                        np.random.default_rng(0),
                                        pose_indices=[3, 5],
                                        frames_per_sample=2)
    assert [s.robot_pose_index for s in samples] == [3, 3, 5, 5]
    assert [s.frames[0].timestamp_index for s in samples] == [0, 1, 0, 1]
    table = simulator.samples_to_frame(samples)
    assert list(table.columns) == list(simulator.SAMPLE_COLUMNS)
    assert len(table) == 4 * 4 * 64
    assert set(table['frame_index']) == {0, 1}
    assert simulator.samples_to_frame([]).empty


def test_crop_cutoff():
    rng = np.random.default_rng(0)
    noise = NoiseModel.ideal()
    near = simulator.collect_sample(wall_scene(Crop(max_range_mm=350.)), 0,
                                    noise, rng)
    far = simulator.collect_sample(wall_scene(Crop(max_range_mm=250.)), 0,
                                   noise, rng)
    assert near.accepted[0].all()
    assert not far.accepted[0].any()


def test_crop_volume():
    rng = np.random.default_rng(0)
    noise = NoiseModel.ideal()
    inside = Crop(lower=(-1., -1., 0.25), upper=(1., 1., 0.35))
    outside = Crop(lower=(-1., -1., 0.4), upper=(1., 1., 0.5))
    both = Crop(250., lower=(-1., -1., 0.25), upper=(1., 1., 0.35))
    results = [simulator.collect_sample(wall_scene(crop), 0, noise, rng)
               for crop in (inside, outside, both)]
    assert results[0].accepted[0].all()
    assert not results[1].accepted[0].any()
    assert not results[2].accepted[0].any()


def test_crop_validation():
    with pytest.raises(exceptions.SceneConfigError):
        Crop(max_range_mm=10.)
    with pytest.raises(exceptions.SceneConfigError):
        Crop(lower=(0., 0., 0.))
    with pytest.raises(exceptions.SceneConfigError):
        Crop(lower=(0., 0., 0.), upper=(1., 0., 1.))


def test_scene_validation():
    wall = geometry.Box((0., 0., 0.31), (1., 1., 0.01))
    with pytest.raises(exceptions.SceneConfigError):
        simulator.Scene(wall, geometry.Pose2(), (), (geometry.Pose3(),))
    with pytest.raises(exceptions.SceneConfigError):
        simulator.Scene(wall, geometry.Pose2(), (geometry.Pose3(),), ())


def test_statue_scene():
    scene = simulator.make_statue_scene()
    assert scene.name == 'statue'
    assert scene.crop.lower is not None
    lower, upper = scene.placed_surface().bounds()
    np.testing.assert_allclose(scene.crop.lower,
                               lower - simulator.PRISM_MARGIN)
    np.testing.assert_allclose(scene.crop.upper,
                               upper + simulator.PRISM_MARGIN)
    rng = np.random.default_rng(0)
    sample = simulator.collect_sample(scene, 0, NoiseModel(), rng)
    assert sample.accepted_count > 0


def test_scene_file_round_trip(tmp_path, crate):
    path = tmp_path / 'crate.yml'
    simulator.save_scene(crate, path)
    loaded = simulator.load_scene(path)
    assert loaded.name == crate.name
    assert loaded.object_truth == crate.object_truth
    assert loaded.crop.max_range_mm == crate.crop.max_range_mm
    for left, right in zip(crate.robot_poses, loaded.robot_poses):
        assert left.is_close(right, tol=0.)
    first = simulator.collect_sample(crate, 0, NoiseModel(),
                                     np.random.default_rng(1))
    second = simulator.collect_sample(loaded, 0, NoiseModel(),
                                      np.random.default_rng(1))
    for left, right in zip(first.frames, second.frames):
        np.testing.assert_array_equal(left.ranges, right.ranges)


def test_scene_from_json_file(tmp_path):
    path = tmp_path / 'box.json'
    path.write_text(
        '{"name": "block",'
        ' "surface": {"kind": "box", "center": [0, 0, 0.05],'
        ' "half_extents": [0.1, 0.1, 0.05]},'
        ' "object_truth": {"x": 0.4, "y": 0, "gamma_deg": 30},'
        ' "robot_poses": {"sample": {"kind": "orbit", "count": 3}},'
        ' "crop": {"margin": 0.02}}'
    )
    scene = simulator.load_scene(path)
    assert scene.name == 'block'
    assert scene.num_poses == 3
    assert scene.num_mounts == 4
    assert scene.object_truth.gamma == pytest.approx(math.radians(30.))
    assert scene.crop.lower is not None


def test_scene_config_errors(tmp_path):
    base = {'surface': {'kind': 'crate'},
            'object_truth': {'x': 0.5, 'y': 0.},
            'robot_poses': [{'eye': [0.5, 0., 0.25],
                             'target': [0.6, 0., 0.]}]}
    scene = simulator.scene_from_dict(base)
    assert scene.num_poses == 1
    with pytest.raises(exceptions.SceneConfigError):
        simulator.scene_from_dict({**base, 'surface': {'kind': 'sphere'}})
    with pytest.raises(exceptions.SceneConfigError):
        simulator.scene_from_dict({key: value for key, value in base.items()
                                   if key != 'robot_poses'})
    with pytest.raises(exceptions.SceneConfigError):
        simulator.scene_from_dict({**base, 'robot_poses': {
            'sample': {'kind': 'spiral'}
        }})
    with pytest.raises(exceptions.NonPositiveExtentError):
        simulator.scene_from_dict({**base, 'surface': {
            'kind': 'box', 'center': [0, 0, 0], 'half_extents': [0, 1, 1]
        }})
    bad_file = tmp_path / 'scene.yml'
    bad_file.write_text('- just\n- a list\n')
    with pytest.raises(exceptions.SceneConfigError):
        simulator.load_scene(bad_file)
    with pytest.raises(exceptions.SceneConfigError):
        simulator.load_scene(tmp_path / 'missing.yml')


def test_noiseless_sample_matches_geometry():
    rng = np.random.default_rng(0)
    scene = wall_scene()
    sample = simulator.collect_sample(scene, 0, NoiseModel.ideal(), rng)
    grid = sensor_model.build_beam_grid()
    points = sensor_model.scan_to_points(sample.frames[0], grid,
                                         sample.sensor_poses[0])
    np.testing.assert_allclose(points[:, 2], 0.3, atol=1e-12)
