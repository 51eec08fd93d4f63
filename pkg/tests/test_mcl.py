import dataclasses
import math

import numpy as np
import pandas as pd
import pytest

from tof_mcl import exceptions
from tof_mcl import geometry
from tof_mcl import mcl
from tof_mcl import protocols
from tof_mcl import simulator
from tof_mcl.data_types import Estimator
from tof_mcl.data_types import MeasurementMode
from tof_mcl.data_types import Method
from tof_mcl.mcl import FilterConfig
from tof_mcl.mcl import ParticleSet
from tof_mcl.sensor_model import LikelihoodModel
from tof_mcl.sensor_model import NoiseModel

TRUTH = geometry.Pose2(0.5, 0., 0.)


@pytest.fixture(scope='module')
def block_scene() -> simulator.Scene:
    """A block seen from above by a single sensor, 300 mm from its top."""
    block = geometry.Box((0., 0., 0.05), (0.1, 0.1, 0.05))
    viewpoint = geometry.look_at((0.5, 0., 0.4), (0.5, 0., 0.))
    return simulator.Scene(block,
                           TRUTH,
                           (geometry.Pose3(),),
                           (viewpoint,),
                           name='block')


@pytest.fixture(scope='module')
def exact_sample(block_scene) -> simulator.DataSample:
    rng = np.random.default_rng(0)
    return simulator.collect_sample(block_scene, 0, NoiseModel.ideal(), rng)


def candidate_set() -> ParticleSet:
    poses = np.array([[0.5, 0., 0.],
                      [0.55, 0., 0.],
                      [0.5, 0., 0.6]])
    return ParticleSet(poses, np.full(3, 1 / 3))


def test_config_validation():
    with pytest.raises(exceptions.ParticleCountError):
        FilterConfig(particle_count=0)
    with pytest.raises(exceptions.NegativeSigmaError):
        FilterConfig(init_sigma_pos=-0.1)
    with pytest.raises(exceptions.NegativeSigmaError):
        FilterConfig(roughening_sigma=(0.002, -1.))
    config = FilterConfig(measurement_mode='per-beam', estimator='best')
    assert config.measurement_mode is MeasurementMode.PER_BEAM
    assert config.estimator is Estimator.BEST
    with pytest.raises(ValueError):
        FilterConfig(resampler='multinomial')


def test_config_from_dict():
    config = FilterConfig.from_dict({
        'particle_count': 200,
        'init_center': {'x': 0.5, 'y': 0.1, 'gamma_deg': 90},
        'roughening_sigma': [0.001, 0.1],
    })
    assert config.particle_count == 200
    assert config.init_center == geometry.Pose2(0.5, 0.1, math.pi / 2)
    assert config.roughening_sigma == (0.001, 0.1)
    with pytest.raises(exceptions.ConfigFileError):
        FilterConfig.from_dict({'particles': 10})
    with pytest.raises(exceptions.ConfigFileError):
        FilterConfig.from_dict({'init_center': {'y': 0.}})
    with pytest.raises(exceptions.ParticleCountError):
        FilterConfig.from_dict({'particle_count': 0})


def test_init_particles():
    with pytest.raises(exceptions.MissingInitCenterError):
        mcl.init_particles(FilterConfig(), np.random.default_rng(0))
    config = FilterConfig(particle_count=5000, init_center=TRUTH)
    ps = mcl.init_particles(config, np.random.default_rng(0))
    assert len(ps) == 5000
    np.testing.assert_allclose(ps.weights, 1 / 5000)
    np.testing.assert_allclose(ps.poses[:, :2].mean(axis=0), [0.5, 0.],
                               atol=0.01)
    np.testing.assert_allclose(ps.poses[:, :2].std(axis=0), 0.15, rtol=0.05)
    assert np.degrees(ps.poses[:, 2].std()) == pytest.approx(6., rel=0.05)
    assert ps.effective_sample_size == pytest.approx(5000)


def test_systematic_indices():
    rng = np.random.default_rng(0)
    uniform = np.full(5, 0.2)
    np.testing.assert_array_equal(mcl.systematic_indices(uniform, rng),
                                  np.arange(5))
    one_hot = np.array([0., 0., 1., 0.])
    np.testing.assert_array_equal(mcl.systematic_indices(one_hot, rng),
                                  [2, 2, 2, 2])
    indices = mcl.systematic_indices(np.array([0.5, 0.25, 0.25]), rng)
    assert len(indices) == 3
    assert (np.diff(indices) >= 0).all()
    assert 0 in indices


def test_resample_without_roughening():
    config = FilterConfig(particle_count=3, roughening_sigma=(0., 0.))
    ps = ParticleSet(candidate_set().poses, np.array([0., 1., 0.]))
    resampled = mcl.resample(ps, config, np.random.default_rng(0))
    np.testing.assert_array_equal(resampled.poses,
                                  np.repeat(ps.poses[1:2], 3, axis=0))
    np.testing.assert_allclose(resampled.weights, 1 / 3)


def test_estimators():
    poses = np.array([[0., 0., math.pi - 0.1],
                      [2., 0., -math.pi + 0.1]])
    ps = ParticleSet(poses, np.array([0.5, 0.5]))
    mean = mcl.estimate(ps)
    assert mean.x == pytest.approx(1.)
    assert abs(mean.gamma) == pytest.approx(math.pi)
    best = mcl.estimate(ParticleSet(poses, np.array([0.2, 0.8])), 'best')
    assert best == geometry.Pose2(2., 0., -math.pi + 0.1)


def test_pose_error_wraps_heading():
    true = geometry.Pose2(0., 0., math.radians(179.))
    est = geometry.Pose2(0.3, 0.4, math.radians(-179.))
    e_x, e_gamma = mcl.pose_error(true, est)
    assert e_x == pytest.approx(0.5)
    assert e_gamma == pytest.approx(2.)


def test_predicted_readings(block_scene, exact_sample):
    mask = exact_sample.accepted[0]
    assert mask.sum() == 36
    predictions = mcl.predict_beams(candidate_set().poses,
                                    exact_sample,
                                    block_scene,
                                    mcl.sensor_model.build_beam_grid())
    assert len(predictions) == 1
    axis_mm = predictions[0].axis_mm
    assert axis_mm.shape == (3, 36)
    np.testing.assert_allclose(axis_mm[0], 300., atol=1e-9)
    assert (axis_mm[1] == mcl.MISS_RANGE_MM).any()
    assert (axis_mm[2] == mcl.MISS_RANGE_MM).any()
    np.testing.assert_allclose(predictions[0].theta[0], 0., atol=1e-9)


@pytest.mark.parametrize('mode', list(MeasurementMode))
@pytest.mark.parametrize('method', list(Method))
def test_truth_gets_the_weight(block_scene, exact_sample, method, mode):
    model = LikelihoodModel(method, NoiseModel.ideal())
    result = mcl.update_weights(candidate_set(), exact_sample, block_scene,
                                model, mode=mode)
    assert not result.degenerate and not result.skipped
    weights = result.particles.weights
    assert weights.sum() == pytest.approx(1.)
    assert weights.argmax() == 0
    if method is not Method.PSM:
        np.testing.assert_array_equal(weights, [1., 0., 0.])


def test_degenerate_update(block_scene, exact_sample):
    far = ParticleSet(np.array([[2., 0., 0.], [-2., 1., 0.]]),
                      np.array([0.9, 0.1]))
    model = LikelihoodModel(Method.DS, NoiseModel.ideal())
    result = mcl.update_weights(far, exact_sample, block_scene, model)
    assert result.degenerate
    np.testing.assert_allclose(result.particles.weights, 0.5)
    psm = LikelihoodModel(Method.PSM, NoiseModel.ideal())
    assert not mcl.update_weights(far, exact_sample, block_scene,
                                  psm).degenerate


def test_sample_without_beams_is_skipped(block_scene, exact_sample):
    empty = simulator.DataSample(
        exact_sample.robot_pose_index,
        exact_sample.frames,
        tuple(np.zeros_like(mask) for mask in exact_sample.accepted),
        exact_sample.sensor_poses,
    )
    ps = candidate_set()
    result = mcl.update_weights(ps, empty, block_scene,
                                LikelihoodModel(Method.PSM))
    assert result.skipped
    assert result.particles is ps


def test_particle_filter_trace_and_hooks(block_scene, exact_sample):
    config = FilterConfig(particle_count=50, init_center=TRUTH,
                          init_sigma_pos=0.01, init_sigma_ang=1.)
    particle_filter = mcl.ParticleFilter(block_scene,
                                         LikelihoodModel(Method.PSM),
                                         config,
                                         np.random.default_rng(1))
    assert isinstance(particle_filter, protocols.FilterProtocol)
    calls: list[str] = []
    particle_filter.add_pre_step_hook(lambda pf: calls.append('pre'))
    particle_filter.add_post_step_hook(lambda pf: calls.append('post'))
    particle_filter.run([exact_sample] * 3)
    assert calls == ['pre', 'post'] * 3
    trace = particle_filter.trace
    assert list(trace.columns) == list(mcl.TRACE_COLUMNS)
    assert trace['step'].tolist() == [0, 1, 2, 3]
    assert trace['effective_sample_size'].iloc[0] == pytest.approx(50.)
    assert not trace['degenerate_flag'].any()
    assert particle_filter.error().e_x < 0.02


def test_run_localization(block_scene, exact_sample):
    with pytest.raises(exceptions.EmptySampleError):
        mcl.run_localization(block_scene, [], LikelihoodModel(Method.PSM),
                             FilterConfig(), np.random.default_rng(0))
    config = FilterConfig(particle_count=40)
    first = mcl.run_localization(block_scene, [exact_sample],
                                 LikelihoodModel(Method.PSM), config,
                                 np.random.default_rng(3))
    second = mcl.run_localization(block_scene, [exact_sample],
                                  LikelihoodModel(Method.PSM), config,
                                  np.random.default_rng(3))
    assert first.estimate == second.estimate
    assert first.error == mcl.pose_error(TRUTH, first.estimate)
    assert len(first.trace) == 2


def test_ideal_gate_degenerates_on_noisy_data():
    scene = simulator.make_crate_scene(num_poses=3)
    rng = np.random.default_rng(0)
    samples = simulator.collect_samples(scene, NoiseModel(), rng)
    config = FilterConfig(particle_count=100,
                          init_center=scene.object_truth)
    particle_filter = mcl.ParticleFilter(scene,
                                         LikelihoodModel(Method.IS),
                                         config,
                                         np.random.default_rng(1))
    particle_filter.run(samples)
    assert particle_filter.degenerate_steps > 0
    assert particle_filter.trace['degenerate_flag'].sum() == (
        particle_filter.degenerate_steps
    )


@pytest.fixture(scope='module')
def crate_scene() -> simulator.Scene:
    return simulator.make_crate_scene(num_poses=2)


def test_systematic_resampling_is_unbiased():
    weights = np.array([0.03, 0.22, 0.05, 0.31, 0.08, 0.11, 0.13, 0.07])
    expected = 8 * weights
    rng = np.random.default_rng(0)
    counts = np.array([np.bincount(mcl.systematic_indices(weights, rng),
                                   minlength=8)
                       for _ in range(1000)])
    assert (counts >= np.floor(expected)).all()
    assert (counts <= np.ceil(expected)).all()
    bound = 3 * counts.std(axis=0).clip(min=0.5) / math.sqrt(1000)
    assert (np.abs(counts.mean(axis=0) - expected) < bound).all()


def test_update_ignores_weight_scale(block_scene, exact_sample):
    model = LikelihoodModel(Method.PSM)
    ps = candidate_set()
    scaled = ParticleSet(ps.poses, ps.weights * 5)
    first = mcl.update_weights(ps, exact_sample, block_scene, model)
    second = mcl.update_weights(scaled, exact_sample, block_scene, model)
    np.testing.assert_allclose(first.particles.weights,
                               second.particles.weights,
                               rtol=1e-12)


def test_truth_wins_on_a_fine_grid(crate_scene):
    truth = crate_scene.object_truth
    sample = simulator.collect_sample(crate_scene, 0, NoiseModel.ideal(),
                                      np.random.default_rng(0))
    steps = np.arange(-10, 11)
    dx, dy, dg = np.meshgrid(steps * 1e-3, steps * 1e-3,
                             np.radians(steps * 0.1), indexing='ij')
    poses = np.stack([truth.x + dx.ravel(),
                      truth.y + dy.ravel(),
                      truth.gamma + dg.ravel()], axis=1)
    truth_index = int(np.flatnonzero((dx.ravel() == 0)
                                     & (dy.ravel() == 0)
                                     & (dg.ravel() == 0))[0])
    ps = ParticleSet(poses, np.full(len(poses), 1 / len(poses)))
    model = LikelihoodModel(Method.PSM, NoiseModel.ideal())
    result = mcl.update_weights(ps, sample, crate_scene, model,
                                mode=MeasurementMode.PER_BEAM)
    weights = result.particles.weights
    assert weights[truth_index] == weights.max()
    assert weights.sum() == pytest.approx(1., abs=1e-12)


def test_modes_agree_on_a_single_beam(crate_scene):
    sample = simulator.collect_sample(crate_scene, 0, NoiseModel(),
                                      np.random.default_rng(2))
    masks = [np.zeros_like(mask) for mask in sample.accepted]
    for mask, accepted in zip(masks, sample.accepted):
        if accepted.any():
            mask[np.flatnonzero(accepted)[0]] = True
            break
    single = simulator.DataSample(sample.robot_pose_index, sample.frames,
                                  tuple(masks), sample.sensor_poses)
    config = FilterConfig(particle_count=50,
                          init_center=crate_scene.object_truth)
    ps = mcl.init_particles(config, np.random.default_rng(3))
    model = LikelihoodModel(Method.PSM)
    averaged = mcl.update_weights(ps, single, crate_scene, model,
                                  mode=MeasurementMode.AVERAGED)
    per_beam = mcl.update_weights(ps, single, crate_scene, model,
                                  mode=MeasurementMode.PER_BEAM)
    np.testing.assert_allclose(averaged.particles.weights,
                               per_beam.particles.weights,
                               rtol=1e-12)


def test_runs_are_deterministic(crate_scene):
    samples = simulator.collect_samples(crate_scene, NoiseModel(),
                                        np.random.default_rng(5))
    config = FilterConfig(particle_count=50)
    sums: list[float] = []

    def record_sum(particle_filter: mcl.ParticleFilter) -> None:
        sums.append(float(particle_filter.posterior.weights.sum()))

    traces = []
    for _ in range(2):
        particle_filter = mcl.ParticleFilter(
            crate_scene,
            LikelihoodModel(Method.PSM),
            dataclasses.replace(config,
                                init_center=crate_scene.object_truth),
            np.random.default_rng(6),
        )
        particle_filter.add_post_step_hook(record_sum)
        particle_filter.run(samples)
        traces.append(particle_filter.trace)
    pd.testing.assert_frame_equal(traces[0], traces[1])
    np.testing.assert_allclose(sums, 1., atol=1e-12)
    assert len(sums) == 2 * len(samples)
