"""
Monte Carlo localization of a static object on a known support plane.

The belief over the planar object pose is a weighted particle set. Each data
sample reweights the particles with the measurement likelihood of the chosen
method, then the set is resampled and slightly roughened, as the object does
not move and there is no prediction step.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, Callable, Final, Generator, NamedTuple, Optional
from typing import Self, Sequence
import numpy as np
import pandas as pd
import torch

from tof_mcl import data_types
from tof_mcl import exceptions
from tof_mcl import geometry
from tof_mcl import io_utils
from tof_mcl import protocols
from tof_mcl import sensor_model
from tof_mcl import simulator
from tof_mcl import default_logging
from tof_mcl.default_logging import logger

MISS_RANGE_MM: Final = sensor_model.MAX_RANGE_MM
TRACE_COLUMNS: Final = ('step',
                        'e_x_m',
                        'e_gamma_deg',
                        'effective_sample_size',
                        'degenerate_flag')


@dataclasses.dataclass(frozen=True)
class FilterConfig:
    """
    Settings of the particle filter.

    Attributes:
        particle_count: number of particles M.
        init_center: mean of the initial Gaussian. When None, a run draws it
            around the truth with init_offset_sigma.
        init_sigma_pos: standard deviation of the initial positions (m).
        init_sigma_ang: standard deviation of the initial headings (deg).
        roughening_sigma: noise added after resampling (m, deg).
        resampler: resampling scheme.
        measurement_mode: compare mean readings or every beam.
        estimator: weighted mean or best particle.
        init_offset_sigma: spread of the initial center around the truth (m).
        chunk_size: ray/triangle pairs evaluated at once.
        device: where the mesh intersection runs.
    """
    particle_count: int = 500
    init_center: Optional[geometry.Pose2] = None
    init_sigma_pos: float = 0.15
    init_sigma_ang: float = 6.
    roughening_sigma: tuple[float, float] = (0.002, 0.2)
    resampler: data_types.Resampler = data_types.Resampler.SYSTEMATIC
    measurement_mode: data_types.MeasurementMode = (
        data_types.MeasurementMode.AVERAGED
    )
    estimator: data_types.Estimator = data_types.Estimator.MEAN
    init_offset_sigma: float = 0.05
    chunk_size: Optional[int] = None
    device: Optional[str] = None

    def __post_init__(self) -> None:
        if self.particle_count < 1:
            raise exceptions.ParticleCountError(self.particle_count)
        sigmas = {'init_sigma_pos': self.init_sigma_pos,
                  'init_sigma_ang': self.init_sigma_ang,
                  'roughening_sigma_pos': self.roughening_sigma[0],
                  'roughening_sigma_ang': self.roughening_sigma[1],
                  'init_offset_sigma': self.init_offset_sigma}
        for name, sigma in sigmas.items():
            if not sigma >= 0:
                raise exceptions.NegativeSigmaError(sigma, name)
        object.__setattr__(self, 'roughening_sigma',
                           tuple(float(s) for s in self.roughening_sigma))
        object.__setattr__(self, 'resampler',
                           data_types.Resampler(self.resampler))
        object.__setattr__(self, 'measurement_mode',
                           data_types.MeasurementMode(self.measurement_mode))
        object.__setattr__(self, 'estimator',
                           data_types.Estimator(self.estimator))

    @classmethod
    def from_dict(cls,
                  entry: dict[str, Any],
                  source: str = 'filter') -> FilterConfig:
        """
        Override the defaults with the given fields.

        The initial center is a mapping with x, y and gamma (rad) or
        gamma_deg.

        Raises:
            ConfigFileError: if a key is unknown or a value malformed.
        """
        names = [field.name for field in dataclasses.fields(cls)]
        io_utils.check_keys(entry, names, source)
        settings = dict(entry)
        try:
            if settings.get('init_center') is not None:
                settings['init_center'] = simulator.pose2_from_dict(
                    settings['init_center']
                )
            if 'roughening_sigma' in settings:
                settings['roughening_sigma'] = tuple(
                    settings['roughening_sigma']
                )
            return cls(**settings)
        except (KeyError, TypeError, ValueError) as err:
            if type(err).__module__ == exceptions.__name__:
                raise
            raise exceptions.ConfigFileError(source, str(err)) from err


@dataclasses.dataclass(frozen=True, eq=False)
class ParticleSet:
    """
    Weighted planar pose hypotheses.

    Attributes:
        poses: array of shape (M, 3) with columns x, y and gamma.
        weights: array of shape (M,) summing to one.
    """
    poses: data_types.FloatArray
    weights: data_types.FloatArray

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def particles(self) -> list[geometry.Pose2]:
        return [geometry.Pose2(x, y, gamma) for x, y, gamma in self.poses]

    @property
    def effective_sample_size(self) -> float:
        return float(1 / np.square(self.weights).sum())


class PoseError(NamedTuple):
    e_x: float
    e_gamma: float


class UpdateResult(NamedTuple):
    particles: ParticleSet
    degenerate: bool
    skipped: bool


class LocalizationResult(NamedTuple):
    estimate: geometry.Pose2
    error: PoseError
    trace: pd.DataFrame


def _wrap(angles: np.ndarray) -> data_types.FloatArray:
    return np.asarray(geometry.wrap_angle(angles))


def init_particles(config: FilterConfig,
                   rng: np.random.Generator) -> ParticleSet:
    """
    Draw the particles from a Gaussian around config.init_center.

    Raises:
        MissingInitCenterError: if the config has no center.
    """
    if config.init_center is None:
        raise exceptions.MissingInitCenterError()
    count = config.particle_count
    scale = np.array([config.init_sigma_pos,
                      config.init_sigma_pos,
                      math.radians(config.init_sigma_ang)])
    draws = rng.standard_normal((count, 3))
    poses = config.init_center.as_array() + draws * scale
    poses[:, 2] = _wrap(poses[:, 2])
    return ParticleSet(poses, np.full(count, 1 / count))


class BeamPrediction(NamedTuple):
    """
    Expected readings of the accepted beams of one sensor.

    Arrays have shape (M, B) for M particles and B accepted beams.
    """
    raw_mm: data_types.FloatArray
    axis_mm: data_types.FloatArray
    theta: data_types.FloatArray
    phi: data_types.FloatArray


def predict_beams(poses: np.ndarray,
                  sample: simulator.DataSample,
                  scene: simulator.Scene,
                  grid: sensor_model.BeamGrid,
                  *,
                  device: Optional[torch.device | str] = None,
                  chunk_size: Optional[int] = None) -> list[BeamPrediction]:
    """
    Cast the accepted beams of every sensor for every hypothesis.

    Rays are moved into the object frame of each particle, so the object
    model is never copied. Beams that miss the object predict the maximum
    range.

    Returns:
        one prediction per sensor with at least one accepted beam.
    """
    num_particles = len(poses)
    cos_g = np.cos(poses[:, 2])[:, None]
    sin_g = np.sin(poses[:, 2])[:, None]
    origins: list[np.ndarray] = []
    directions: list[np.ndarray] = []
    layout: list[tuple[sensor_model.ScanFrame,
                       data_types.BoolArray,
                       geometry.Pose3]] = []
    for frame, mask, sensor_pose in zip(sample.frames,
                                        sample.accepted,
                                        sample.sensor_poses):
        if not mask.any():
            continue
        world_dirs = sensor_pose.rotate(grid.beam_directions[mask])
        dx = sensor_pose.translation[0] - poses[:, 0]
        dy = sensor_pose.translation[1] - poses[:, 1]
        height = sensor_pose.translation[2] - scene.support_height
        local_origin = np.stack([cos_g[:, 0] * dx + sin_g[:, 0] * dy,
                                 -sin_g[:, 0] * dx + cos_g[:, 0] * dy,
                                 np.full(num_particles, height)], axis=-1)
        local_dirs = np.stack([
            cos_g * world_dirs[:, 0] + sin_g * world_dirs[:, 1],
            -sin_g * world_dirs[:, 0] + cos_g * world_dirs[:, 1],
            np.broadcast_to(world_dirs[:, 2],
                            (num_particles, len(world_dirs))),
        ], axis=-1)
        origins.append(np.broadcast_to(local_origin[:, None, :],
                                       local_dirs.shape).reshape(-1, 3))
        directions.append(local_dirs.reshape(-1, 3))
        layout.append((frame, mask, sensor_pose))
    if not layout:
        return []
    hits = scene.surface.raycast_many(np.concatenate(origins),
                                      np.concatenate(directions),
                                      device=device,
                                      chunk_size=chunk_size)
    predictions: list[BeamPrediction] = []
    start = 0
    for frame, mask, sensor_pose in layout:
        beams = int(mask.sum())
        stop = start + num_particles * beams
        distances = hits.distances[start:stop].reshape(num_particles, beams)
        normals = hits.normals[start:stop].reshape(num_particles, beams, 3)
        start = stop
        axis_mm = distances * grid.axis_cosines[mask] * 1000
        axis_mm = np.where(np.isfinite(axis_mm), axis_mm, MISS_RANGE_MM)
        world_normals = np.stack([
            cos_g * normals[..., 0] - sin_g * normals[..., 1],
            sin_g * normals[..., 0] + cos_g * normals[..., 1],
            normals[..., 2],
        ], axis=-1)
        theta, phi = sensor_model.incidence_angles(world_normals, sensor_pose)
        raw_mm = np.broadcast_to(frame.ranges_mm[mask], axis_mm.shape)
        predictions.append(BeamPrediction(raw_mm,
                                          axis_mm,
                                          np.nan_to_num(theta),
                                          np.nan_to_num(phi)))
    return predictions


def measurement_log_likelihood(prediction: BeamPrediction,
                               model: sensor_model.LikelihoodModel,
                               mode: data_types.MeasurementMode
                               ) -> data_types.FloatArray:
    """
    Log likelihood of one sensor for every particle.

    In averaged mode the mean reading is compared with the mean expected
    range, and the corrected mean averages the beams corrected with the
    incidence each particle predicts. In per-beam mode every beam is an
    independent measurement.
    """
    raw = prediction.raw_mm
    corrected = sensor_model.correct_readings(raw,
                                              prediction.theta,
                                              prediction.phi,
                                              model.noise)
    if mode is data_types.MeasurementMode.AVERAGED:
        raw_mean = raw[0].mean()
        log_lik = sensor_model.log_likelihood(corrected.mean(axis=1),
                                              prediction.axis_mm.mean(axis=1),
                                              model,
                                              np.full(len(raw), raw_mean))
        return np.asarray(log_lik)
    per_beam = sensor_model.log_likelihood(corrected,
                                           prediction.axis_mm,
                                           model,
                                           raw)
    return np.asarray(per_beam).sum(axis=1)


def update_weights(ps: ParticleSet,
                   sample: simulator.DataSample,
                   scene: simulator.Scene,
                   model: sensor_model.LikelihoodModel,
                   *,
                   mode: data_types.MeasurementMode = (
                       data_types.MeasurementMode.AVERAGED
                   ),
                   grid: Optional[sensor_model.BeamGrid] = None,
                   device: Optional[torch.device | str] = None,
                   chunk_size: Optional[int] = None) -> UpdateResult:
    """
    Reweight the particles with one data sample.

    The sensors are independent, so their log likelihoods add up. The
    update runs in the log domain and is normalized by its maximum.

    Returns:
        the updated set. If every particle gets zero weight, the weights are
        reset to uniform and the update is flagged degenerate. A sample with
        no accepted beam leaves the set unchanged and is flagged skipped.
    """
    grid = sensor_model.build_beam_grid() if grid is None else grid
    mode = data_types.MeasurementMode(mode)
    predictions = predict_beams(ps.poses,
                                sample,
                                scene,
                                grid,
                                device=device,
                                chunk_size=chunk_size)
    if not predictions:
        logger.warning('Sample at pose %(pose)d has no accepted beam: '
                       'weights left unchanged.',
                       {'pose': sample.robot_pose_index})
        return UpdateResult(ps, False, True)
    log_lik = np.zeros(len(ps))
    for prediction in predictions:
        log_lik += measurement_log_likelihood(prediction, model, mode)
    with np.errstate(divide='ignore'):
        log_weights = np.log(ps.weights) + log_lik
    best = log_weights.max()
    if not np.isfinite(best):
        logger.debug('Every particle has zero likelihood: uniform reset.')
        uniform = np.full(len(ps), 1 / len(ps))
        return UpdateResult(ParticleSet(ps.poses, uniform), True, False)
    weights = np.exp(log_weights - best)
    weights /= weights.sum()
    return UpdateResult(ParticleSet(ps.poses, weights), False, False)


def systematic_indices(weights: np.ndarray,
                       rng: np.random.Generator) -> data_types.IntArray:
    """Indices drawn by low variance resampling with one uniform offset."""
    count = len(weights)
    positions = (rng.random() + np.arange(count)) / count
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.
    indices = np.searchsorted(cumulative, positions, side='right')
    return np.minimum(indices, count - 1)


def resample(ps: ParticleSet,
             config: FilterConfig,
             rng: np.random.Generator) -> ParticleSet:
    """
    Systematic resampling followed by Gaussian roughening.

    The roughening noise is drawn even when its sigma is zero, so the random
    stream does not depend on the configuration.
    """
    count = config.particle_count
    indices = systematic_indices(ps.weights, rng)
    sigma_pos, sigma_ang = config.roughening_sigma
    scale = np.array([sigma_pos, sigma_pos, math.radians(sigma_ang)])
    poses = ps.poses[indices] + rng.standard_normal((len(indices), 3)) * scale
    poses[:, 2] = _wrap(poses[:, 2])
    return ParticleSet(poses, np.full(count, 1 / count))


def estimate(ps: ParticleSet,
             estimator: data_types.Estimator = data_types.Estimator.MEAN
             ) -> geometry.Pose2:
    """Weighted mean with a circular mean of the heading, or best particle."""
    if data_types.Estimator(estimator) is data_types.Estimator.BEST:
        return geometry.Pose2.from_array(ps.poses[ps.weights.argmax()])
    weights = ps.weights
    x = float(weights @ ps.poses[:, 0])
    y = float(weights @ ps.poses[:, 1])
    gamma = math.atan2(float(weights @ np.sin(ps.poses[:, 2])),
                       float(weights @ np.cos(ps.poses[:, 2])))
    return geometry.Pose2(x, y, gamma)


def pose_error(true: geometry.Pose2, est: geometry.Pose2) -> PoseError:
    """Translation error (m) and absolute heading error (deg)."""
    e_x = math.hypot(est.x - true.x, est.y - true.y)
    e_gamma = abs(geometry.wrap_angle(est.gamma - true.gamma))
    return PoseError(e_x, math.degrees(e_gamma))


class ParticleFilter(protocols.FilterProtocol):
    """
    Particle filter driven by data samples.

    Args:
        scene: the task, providing the object model and the truth.
        model: the measurement likelihood.
        config: the filter settings. Its init_center must be set.
        rng: the random stream of the run.
        grid: beam layout of the sensors.

    Attributes:
        particles: the current set.
        trace: one row per step, with step 0 for the initial set.
        pre_step_hooks: called with the filter before each step.
        post_step_hooks: called with the filter after each step.
    """

    def __init__(self,
                 scene: simulator.Scene,
                 model: sensor_model.LikelihoodModel,
                 config: FilterConfig,
                 rng: np.random.Generator,
                 grid: Optional[sensor_model.BeamGrid] = None) -> None:
        self.scene = scene
        self.model = model
        self.config = config
        self.rng = rng
        self.grid = sensor_model.build_beam_grid() if grid is None else grid
        self.particles = init_particles(config, rng)
        self.posterior = self.particles
        self.steps = 0
        self.degenerate_steps = 0
        self.pre_step_hooks: list[Callable[[Self], None]] = []
        self.post_step_hooks: list[Callable[[Self], None]] = []
        self._rows: list[tuple[int, float, float, float, bool]] = []
        self._record(self.particles.effective_sample_size, False)

    @property
    def trace(self) -> pd.DataFrame:
        return pd.DataFrame(self._rows, columns=list(TRACE_COLUMNS))

    def add_pre_step_hook(self, hook: Callable[[Self], None]) -> None:
        self.pre_step_hooks.append(hook)
        return

    def add_post_step_hook(self, hook: Callable[[Self], None]) -> None:
        self.post_step_hooks.append(hook)
        return

    def estimate(self) -> geometry.Pose2:
        """Point estimate of the last reweighted set."""
        return estimate(self.posterior, self.config.estimator)

    def error(self) -> PoseError:
        return pose_error(self.scene.object_truth, self.estimate())

    def step(self, sample: simulator.DataSample) -> None:
        for hook in self.pre_step_hooks:
            hook(self)
        result = update_weights(self.particles,
                                sample,
                                self.scene,
                                self.model,
                                mode=self.config.measurement_mode,
                                grid=self.grid,
                                device=self.config.device,
                                chunk_size=self.config.chunk_size)
        self.posterior = result.particles
        self.steps += 1
        self.degenerate_steps += result.degenerate
        self._record(self.posterior.effective_sample_size, result.degenerate)
        self.particles = resample(self.posterior, self.config, self.rng)
        for hook in self.post_step_hooks:
            hook(self)
        return

    def _record(self, ess: float, degenerate: bool) -> None:
        e_x, e_gamma = self.error()
        self._rows.append((self.steps, e_x, e_gamma, ess, degenerate))
        return

    def log_steps(self, samples: Sequence[simulator.DataSample]
                  ) -> Generator[simulator.DataSample, None, None]:
        logger.log(default_logging.INFO_LEVELS.trial,
                   'Localizing the %(scene)s with %(method)s.',
                   {'scene': self.scene.name,
                    'method': self.model.variant.value.upper()})
        for sample in samples:
            yield sample
            e_x, e_gamma = self.error()
            logger.log(default_logging.INFO_LEVELS.step,
                       'Step %(step)4d: e_x %(e_x).4f m, '
                       'e_gamma %(e_g).3f deg',
                       {'step': self.steps, 'e_x': e_x, 'e_g': e_gamma})
        if self.degenerate_steps:
            logger.warning('%(count)d of %(steps)d updates were degenerate.',
                           {'count': self.degenerate_steps,
                            'steps': self.steps})
        return

    def run(self, samples: Sequence[simulator.DataSample]) -> None:
        for sample in self.log_steps(samples):
            self.step(sample)
        return


def draw_init_center(truth: geometry.Pose2,
                     config: FilterConfig,
                     rng: np.random.Generator) -> geometry.Pose2:
    """Initial center at a Gaussian position offset from the truth."""
    offset = rng.standard_normal(2) * config.init_offset_sigma
    return geometry.Pose2(truth.x + offset[0], truth.y + offset[1],
                          truth.gamma)


def run_localization(scene: simulator.Scene,
                     samples: Sequence[simulator.DataSample],
                     model: sensor_model.LikelihoodModel,
                     config: FilterConfig,
                     rng: np.random.Generator,
                     *,
                     grid: Optional[sensor_model.BeamGrid] = None
                     ) -> LocalizationResult:
    """
    Initialize the particles and process every sample in order.

    Raises:
        EmptySampleError: if no sample is given.
    """
    if not samples:
        raise exceptions.EmptySampleError()
    if config.init_center is None:
        center = draw_init_center(scene.object_truth, config, rng)
        config = dataclasses.replace(config, init_center=center)
    particle_filter = ParticleFilter(scene, model, config, rng, grid)
    particle_filter.run(samples)
    final = particle_filter.estimate()
    return LocalizationResult(final,
                              pose_error(scene.object_truth, final),
                              particle_filter.trace)
