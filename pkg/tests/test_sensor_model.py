import math

import numpy as np
import pytest

from tof_mcl import exceptions
from tof_mcl import geometry
from tof_mcl import sensor_model
from tof_mcl.data_types import Method
from tof_mcl.sensor_model import LikelihoodModel
from tof_mcl.sensor_model import NoiseModel

TOL = 1e-9


@pytest.fixture
def noise() -> NoiseModel:
    return NoiseModel()


def test_default_grid():
    grid = sensor_model.build_beam_grid()
    assert len(grid) == 64
    assert math.degrees(grid.per_axis_fov) == pytest.approx(45.962, abs=1e-3)
    assert math.degrees(grid.beam_angles[0]) == pytest.approx(-20.108,
                                                              abs=1e-3)
    assert math.degrees(grid.beam_angles[4]) == pytest.approx(2.873,
                                                              abs=1e-3)
    np.testing.assert_allclose(np.linalg.norm(grid.beam_directions, axis=1),
                               1., atol=1e-12)
    directions = grid.beam_directions.reshape(8, 8, 3)
    mirrored_rows = directions[::-1] * [1, -1, 1]
    mirrored_cols = directions[:, ::-1] * [-1, 1, 1]
    np.testing.assert_allclose(mirrored_rows, directions, atol=1e-12)
    np.testing.assert_allclose(mirrored_cols, directions, atol=1e-12)
    total = grid.beam_directions.sum(axis=0)
    np.testing.assert_allclose(total[:2], 0., atol=1e-12)


def test_row_follows_elevation():
    grid = sensor_model.build_beam_grid()
    directions = grid.beam_directions.reshape(8, 8, 3)
    assert directions[0, 0, 1] < 0
    assert directions[7, 0, 1] > 0
    assert directions[0, 0, 0] < directions[0, 7, 0]


def test_single_zone_grid():
    grid = sensor_model.build_beam_grid(zones_per_axis=1)
    np.testing.assert_allclose(grid.beam_directions, [[0., 0., 1.]])


def test_grid_errors():
    with pytest.raises(exceptions.ZoneCountError):
        sensor_model.build_beam_grid(zones_per_axis=0)
    with pytest.raises(exceptions.FieldOfViewError):
        sensor_model.build_beam_grid(diagonal_fov=math.pi)


@pytest.mark.parametrize('measured, expected', [(100., 78.15),
                                                (500., 463.35)])
def test_correct_range(noise, measured, expected):
    assert sensor_model.correct_range(measured, noise) == pytest.approx(
        expected, abs=TOL
    )


def test_correct_range_outside_operating_range(noise):
    assert math.isnan(sensor_model.correct_range(10., noise))
    assert math.isnan(sensor_model.correct_range(4001., noise))
    values = sensor_model.correct_range(np.array([10., 100.]), noise)
    assert math.isnan(values[0])
    assert values[1] == pytest.approx(78.15)


def test_correct_range_is_affine(noise):
    first, second, weight = 120., 730., 0.3
    mixed = sensor_model.correct_range(weight * first
                                       + (1 - weight) * second, noise)
    expected = (weight * sensor_model.correct_range(first, noise)
                + (1 - weight) * sensor_model.correct_range(second, noise))
    assert mixed == pytest.approx(expected, abs=TOL)


def test_inverse_bias_round_trip(noise):
    for true_range in (30., 463.35, 790.):
        biased = sensor_model.inverse_bias(true_range, noise)
        assert sensor_model.correct_range(biased, noise) == pytest.approx(
            true_range, abs=TOL
        )
    assert sensor_model.inverse_bias(463.35, noise) == pytest.approx(500.)


@pytest.mark.parametrize('theta, phi, expected', [(0., 0., 0.06),
                                                  (10., 0., -0.03222),
                                                  (3., 4., 0.03889),
                                                  (25., 0., -0.54555)])
def test_orientation_error(noise, theta, phi, expected):
    error = sensor_model.orientation_error(theta, phi, noise)
    assert error == pytest.approx(expected, abs=1e-9)


def test_orientation_error_depends_on_radius_only(noise):
    first = sensor_model.orientation_error(3., 4., noise)
    second = sensor_model.orientation_error(0., 5., noise)
    assert first == second
    assert sensor_model.orientation_extrapolated(26., 0.)
    assert not sensor_model.orientation_extrapolated(25., -25.)


def test_apply_orientation_correction(noise):
    corrected = sensor_model.apply_orientation_correction(200., 0., 0., noise)
    assert corrected == pytest.approx(200 / 1.0006, abs=TOL)
    assert corrected == pytest.approx(199.880, abs=1e-3)
    flat = NoiseModel(orientation_coeffs=(0., 0., 0.))
    assert sensor_model.apply_orientation_correction(200., 7., 3.,
                                                     flat) == 200.
    injected = sensor_model.inject_orientation_error(corrected, 0., 0.,
                                                     noise)
    assert injected == pytest.approx(200., abs=TOL)


@pytest.mark.parametrize('range_mm, expected', [(20., 8.),
                                                (25., 0.35),
                                                (60., 0.72),
                                                (100., 0.6),
                                                (400., 2.4),
                                                (800., 4.8),
                                                (2000., 12.)])
def test_sigma_at(noise, range_mm, expected):
    assert sensor_model.sigma_at(range_mm, noise) == pytest.approx(
        expected, abs=TOL
    )


def test_sigma_interpolation(noise):
    percent = sensor_model.sigma_percent_at(40., noise.sigma_table)
    assert percent == pytest.approx(1.4 - 0.2 * 15 / 35, abs=TOL)
    assert sensor_model.sigma_at(40., noise) == pytest.approx(0.5257,
                                                              abs=1e-4)
    ranges = np.linspace(20., 100., 81)
    percents = sensor_model.sigma_percent_at(ranges, noise.sigma_table)
    assert (np.diff(percents) <= 0).all()


def test_sigma_below_table(noise):
    with pytest.raises(exceptions.RangeBelowTableError):
        sensor_model.sigma_at(19., noise)


def test_noise_model_validation():
    with pytest.raises(exceptions.SigmaTableError):
        NoiseModel(sigma_table=((20., 1.), (20., 2.)))
    with pytest.raises(exceptions.SigmaTableError):
        NoiseModel(sigma_table=())
    with pytest.raises(exceptions.NonPositiveSigmaError):
        NoiseModel(sigma_table=((20., 0.),))
    with pytest.raises(exceptions.NonPositiveSigmaError):
        LikelihoodModel(Method.DS, ds_sigma_table=((20., -1.),))
    with pytest.raises(exceptions.NonPositiveSigmaError):
        LikelihoodModel(Method.IS, is_epsilon=0.)


def test_calibration_file_round_trip(tmp_path):
    model = NoiseModel(0.9631234567891, -18.1498765432, (-1.01e-3, 8e-4,
                                                          0.0612),
                       ((20., 39.5), (25., 1.41), (60., 1.19),
                        (100., 0.61), (800., 0.59)))
    path = tmp_path / 'calibration.txt'
    model.save(path)
    assert NoiseModel.load(path) == model


@pytest.mark.parametrize('text', [
    'range_slope = 1\n',
    'range_slope = 1\nrange_slope = 1\n',
    'unknown = 1\n',
    NoiseModel().to_text().replace('orient_a = -0.001', 'orient_a = x'),
])
def test_calibration_file_errors(text):
    with pytest.raises(exceptions.CalibrationFileError):
        NoiseModel.from_text(text)


def test_missing_calibration_file(tmp_path):
    with pytest.raises(exceptions.CalibrationFileError):
        NoiseModel.load(tmp_path / 'missing.txt')


def test_noise_model_from_dict():
    model = NoiseModel.from_dict({'range_slope': 1.,
                                  'sigma_table': '20:1, 100:0.5',
                                  'noise_scale': 0})
    assert model.range_slope == 1.
    assert model.range_offset == NoiseModel().range_offset
    assert model.sigma_table == ((20., 1.), (100., 0.5))
    assert model.noise_scale == 0.
    with pytest.raises(exceptions.ConfigFileError):
        NoiseModel.from_dict({'slope': 1.})
    with pytest.raises(exceptions.ConfigFileError):
        NoiseModel.from_dict({'range_slope': 'steep'})


def test_psm_likelihood(noise):
    model = LikelihoodModel(Method.PSM, noise)
    peak = sensor_model.likelihood(400., 400., model, 400.)
    assert peak == pytest.approx(1 / (2.4 * math.sqrt(2 * math.pi)),
                                 abs=1e-12)
    assert peak == pytest.approx(0.16623, abs=1e-5)
    left = sensor_model.likelihood(397., 400., model, 400.)
    right = sensor_model.likelihood(403., 400., model, 400.)
    assert left == pytest.approx(right, rel=1e-12)
    assert left < peak


def test_gated_likelihoods():
    ds = LikelihoodModel(Method.DS)
    assert sensor_model.likelihood(0., 520., ds, 500.) == 0.
    assert sensor_model.likelihood(0., 510., ds, 500.) == pytest.approx(
        1 / (15 * math.sqrt(2 * math.pi))
    )
    ideal = LikelihoodModel(Method.IS)
    assert sensor_model.likelihood(0., 500.5, ideal, 500.) > 0
    residuals = np.linspace(-30., 30., 121)
    for model in (ds, ideal):
        values = sensor_model.likelihood(np.zeros_like(residuals),
                                         500. + residuals, model,
                                         np.full_like(residuals, 500.))
        assert len(np.unique(values)) == 2
        assert values.min() == 0.


def test_ds_sigma_table_interpolates():
    model = LikelihoodModel(Method.DS,
                            ds_sigma_table=((20., 15.), (200., 25.)))
    assert model.ds_sigma(10.) == 15.
    assert model.ds_sigma(110.) == pytest.approx(20.)
    assert model.ds_sigma(1000.) == 25.


def test_unknown_method():
    with pytest.raises(exceptions.UnknownMethodError) as info:
        LikelihoodModel.for_method('kalman')
    assert isinstance(info.value, ValueError)
    assert str(info.value) == ("Unknown method kalman: choose among "
                               "['psm', 'ds', 'is'].")
    assert LikelihoodModel.for_method('PSM').variant is Method.PSM


def test_incidence_angles():
    pose = geometry.Pose3.identity()
    theta, phi = sensor_model.incidence_angles(np.array([0., 0., -1.]), pose)
    assert theta == 0. and phi == 0.
    angle = math.radians(10.)
    tilted = np.array([-math.sin(angle), 0., -math.cos(angle)])
    theta, phi = sensor_model.incidence_angles(tilted, pose)
    assert theta == pytest.approx(10.)
    assert phi == pytest.approx(0.)


def plane_in_front(distance: float) -> geometry.Box:
    return geometry.Box((0., 0., distance + 0.01), (10., 10., 0.01))


def test_identity_noise_reads_axis_distance():
    rng = np.random.default_rng(0)
    scan = sensor_model.simulate_scan(geometry.Pose3.identity(),
                                      plane_in_front(0.3),
                                      NoiseModel.ideal(),
                                      rng)
    assert scan.valid.all()
    np.testing.assert_allclose(scan.ranges, 0.3, atol=1e-12)


def test_noiseless_default_reading(noise):
    rng = np.random.default_rng(0)
    flat = NoiseModel(orientation_coeffs=(0., 0., 0.), noise_scale=0.)
    scan = sensor_model.simulate_scan(geometry.Pose3.identity(),
                                      plane_in_front(0.46335),
                                      flat,
                                      rng)
    np.testing.assert_allclose(scan.ranges_mm, 500., atol=1e-6)


def test_correction_pipeline_recovers_truth(noise):
    rng = np.random.default_rng(1)
    sensor_pose = geometry.Pose3(rotation=geometry.rotation_y(
        math.radians(12.)
    ))
    grid = sensor_model.build_beam_grid()
    surface = plane_in_front(0.35)
    scan = sensor_model.simulate_scan(sensor_pose, surface,
                                      noise.noiseless(), rng, grid=grid)
    hits = geometry.raycast_beams(sensor_pose, grid, surface)
    theta, phi = sensor_model.incidence_angles(hits.normals, sensor_pose)
    corrected = sensor_model.correct_readings(scan.ranges_mm, theta, phi,
                                              noise)
    truth = hits.distances * grid.axis_cosines * 1000
    np.testing.assert_allclose(corrected, truth, rtol=0, atol=1e-6)


def test_reading_spread_follows_sigma(noise):
    rng = np.random.default_rng(2)
    flat = NoiseModel(orientation_coeffs=(0., 0., 0.))
    biased = sensor_model.inverse_bias(400., flat)
    readings = np.concatenate([
        sensor_model.simulate_scan(geometry.Pose3.identity(),
                                   plane_in_front(0.4), flat,
                                   rng).ranges_mm
        for _ in range(100)
    ])
    expected = sensor_model.sigma_at(biased, flat)
    assert 2.1 <= readings.std(ddof=1) <= 2.7
    assert readings.std(ddof=1) == pytest.approx(expected, rel=0.1)


def test_nothing_in_view():
    rng = np.random.default_rng(0)
    scan = sensor_model.simulate_scan(geometry.Pose3.identity(),
                                      geometry.Box((0., 0., -1.),
                                                   (1., 1., 0.1)),
                                      NoiseModel(), rng)
    assert not scan.valid.any()
    assert np.isnan(scan.ranges).all()


def test_scan_frame_rejects_out_of_range():
    with pytest.raises(exceptions.OutOfOperatingRangeError):
        sensor_model.ScanFrame(np.array([0.01]), np.array([True]))
    frame = sensor_model.ScanFrame(np.array([0.01]), np.array([False]))
    assert np.isnan(frame.ranges).all()


def test_scan_to_points():
    grid = sensor_model.build_beam_grid()
    rng = np.random.default_rng(0)
    sensor_pose = geometry.Pose3((0.1, 0.2, 0.))
    scan = sensor_model.simulate_scan(sensor_pose, plane_in_front(0.3),
                                      NoiseModel.ideal(), rng, grid=grid)
    points = sensor_model.scan_to_points(scan, grid, sensor_pose)
    assert points.shape == (64, 3)
    np.testing.assert_allclose(points[:, 2], 0.3, atol=1e-12)
    mask = np.zeros(64, dtype=bool)
    mask[:5] = True
    assert len(sensor_model.scan_to_points(scan, grid, sensor_pose,
                                           mask)) == 5
