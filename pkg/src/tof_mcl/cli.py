"""
Command line entry point: characterize, localize and benchmark.

Every command writes its outputs in <out>/<experiment name>/ next to the
config.yml and metadata.yml of the run. Input errors end the command with
exit code 2 and a message on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Any, Optional, Sequence

from tof_mcl import benchmark
from tof_mcl import characterize
from tof_mcl import data_types
from tof_mcl import exceptions
from tof_mcl import io_utils
from tof_mcl import mcl
from tof_mcl import seeding
from tof_mcl import sensor_model
from tof_mcl import simulator
from tof_mcl import tracking
from tof_mcl.default_logging import logger

EXIT_OK = 0
EXIT_INPUT_ERROR = 2


def _noise_switch(value: str) -> bool:
    try:
        return io_utils.parse_switch(value)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None,
                        help='master seed of the random streams')
    common.add_argument('--out', default='experiments',
                        help='parent directory of the outputs')
    modes = [mode.value for mode in data_types.MeasurementMode]
    parser = argparse.ArgumentParser(
        prog='tof-mcl',
        description='Characterize a multizone ToF sensor and benchmark '
                    'object localization with it.',
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    char = subparsers.add_parser('characterize',
                                 parents=[common],
                                 help='synthesize sweeps and fit them')
    char.add_argument('--config', default=None,
                      help='YAML characterization config')
    char.add_argument('--noise', type=_noise_switch, default=None,
                      help='on or off')
    char.add_argument('--frames', type=int, default=None,
                      help='frames per commanded pose')

    loc = subparsers.add_parser('localize',
                                parents=[common],
                                help='run one localization')
    loc.add_argument('--config', default='crate',
                     help='scene file or preset (crate, statue)')
    loc.add_argument('--method', default='psm', help='psm, ds or is')
    loc.add_argument('--sensors', type=int, default=1)
    loc.add_argument('--samples', type=int, default=6)
    loc.add_argument('--mode', default=None, choices=modes)
    loc.add_argument('--estimator', default=None,
                     choices=[est.value for est in data_types.Estimator])
    loc.add_argument('--noise', type=_noise_switch, default=True,
                     help='on or off')
    loc.add_argument('--frames', type=int, default=1,
                     help='frames acquired at each robot pose')
    loc.add_argument('--calibration', default=None,
                     help='calibration file used by the likelihood')
    loc.add_argument('--filter', default=None,
                     help='YAML file of filter settings')

    bench = subparsers.add_parser('benchmark',
                                  parents=[common],
                                  help='run the sensors x samples grid')
    bench.add_argument('--config', default='crate-samples',
                       help='YAML benchmark spec or preset '
                            '(crate-samples, crate-sensors, statue-grid)')
    bench.add_argument('--mode', default=None, choices=modes)
    bench.add_argument('--noise', type=_noise_switch, default=None,
                       help='on or off')
    bench.add_argument('--trials', type=int, default=None)
    bench.add_argument('--workers', type=int, default=None)
    return parser


def cmd_characterize(args: argparse.Namespace) -> int:
    entry = {} if args.config is None else io_utils.load_yaml(args.config)
    config = characterize.CharacterizationConfig.from_dict(
        entry, args.config or 'characterization'
    )
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides['seed'] = args.seed
    if args.noise is not None:
        overrides['noise_on'] = args.noise
    if args.frames is not None:
        overrides['frames_per_pose'] = args.frames
    config = dataclasses.replace(config, **overrides)
    name = f'characterize_seed{config.seed}'
    paths = io_utils.PathManager(args.out, name)
    with tracking.Experiment(name, config=entry | overrides) as exp:
        tracking.add_metadata(exp, {'characterization': config})
        report, sweeps = characterize.run_characterization(config)
        report.noise_model.save(paths.calibration)
        report.residuals.to_csv(paths.residuals, index=False)
        records = [record for sweep in sweeps
                   for record in (sweep.range_records
                                  + sweep.xy_records
                                  + sweep.zy_records)]
        characterize.save_records(records, paths.sweeps)
        tracking.add_metadata(exp, {'fitted': report.noise_model,
                                    'per_sensor': report.per_sensor,
                                    'spread': report.spread()})
        exp.dump(paths)
    print(report.summary(config.injected))
    return EXIT_OK


def cmd_localize(args: argparse.Namespace) -> int:
    method = data_types.Method.parse(args.method)
    scene = benchmark.resolve_scene(args.config)
    benchmark.check_cell(scene, args.sensors, args.samples)
    if args.frames < 1:
        raise exceptions.ConfigFileError('--frames', 'must be at least 1')
    filter_entry = {}
    if args.filter is not None:
        filter_entry = io_utils.load_yaml(args.filter)
    config = mcl.FilterConfig.from_dict(filter_entry, args.filter or 'filter')
    if args.mode is not None:
        config = dataclasses.replace(config, measurement_mode=args.mode)
    if args.estimator is not None:
        config = dataclasses.replace(config, estimator=args.estimator)
    if args.calibration is None:
        noise = sensor_model.NoiseModel()
    else:
        noise = sensor_model.NoiseModel.load(args.calibration)
    seed = 0 if args.seed is None else args.seed
    streams = seeding.StreamFactory(seed)
    name = f'localize_{scene.name}_{method.value}_seed{seed}'
    run_config = {'scene': str(args.config),
                  'method': method.value,
                  'sensors': args.sensors,
                  'samples': args.samples,
                  'seed': seed,
                  'frames': args.frames,
                  'noise': args.noise,
                  'filter': filter_entry}
    paths = io_utils.PathManager(args.out, name)
    with tracking.Experiment(name, config=run_config) as exp:
        tracking.add_metadata(exp, {'filter': config, 'calibration': noise})
        data = benchmark.collect_data(scene,
                                      args.samples,
                                      streams,
                                      noise_on=args.noise,
                                      frames_per_sample=args.frames,
                                      config=config)
        result = benchmark.run_trial(scene, data, method, noise, config,
                                     streams, args.sensors, args.samples,
                                     trial=0)
        samples = benchmark.cell_samples(data, args.sensors, args.samples)
        result.trace.to_csv(paths.trace, index=False)
        simulator.samples_to_frame(samples).to_csv(paths.samples,
                                                   index=False)
        tracking.add_metadata(exp, {'estimate': result.estimate})
        exp.dump(paths)
    print(f'{method.value.upper()} {result.error.e_x:.6f} '
          f'{result.error.e_gamma:.4f} {len(samples)}')
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    spec = benchmark.BenchmarkSpec.load(args.config)
    overrides: dict[str, Any] = {}
    for key in ('seed', 'trials', 'workers'):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.noise is not None:
        overrides['noise_on'] = args.noise
    run_config = {'config': str(args.config)} | overrides
    if args.mode is not None:
        overrides['filter'] = dataclasses.replace(spec.filter,
                                                  measurement_mode=args.mode)
        run_config['mode'] = args.mode
    spec = dataclasses.replace(spec, **overrides)
    scene = benchmark.resolve_scene(spec.scene)
    spec.check_feasible(scene)
    name = f'benchmark_{scene.name}_seed{spec.seed}'
    paths = io_utils.PathManager(args.out, name)
    with tracking.Experiment(name, config=run_config) as exp:
        tracking.add_metadata(exp, {'benchmark': spec})
        table = benchmark.run_benchmark(spec, scene)
        benchmark.save_outputs(table, paths)
        exp.dump(paths)
    return EXIT_OK


COMMANDS = {'characterize': cmd_characterize,
            'localize': cmd_localize,
            'benchmark': cmd_benchmark}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:
        return int(exit_request.code or 0)
    try:
        return COMMANDS[args.command](args)
    except Exception as err:
        if type(err).__module__ != exceptions.__name__:
            raise
        logger.debug('Command %(command)s failed.',
                     {'command': args.command}, exc_info=True)
        print(f'tof-mcl {args.command}: {err}', file=sys.stderr)
        return EXIT_INPUT_ERROR
