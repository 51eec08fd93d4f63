import pandas as pd
import pytest

from tof_mcl import cli
from tof_mcl import sensor_model
from tof_mcl import tracking


@pytest.fixture
def filter_file(tmp_path):
    path = tmp_path / 'filter.yml'
    path.write_text('particle_count: 30\n')
    return path


def last_line(capsys) -> str:
    return capsys.readouterr().out.strip().splitlines()[-1]


@pytest.mark.parametrize('argv', [[], ['bogus'], ['localize', '--sensors',
                                                  'two']])
def test_usage_errors(argv):
    assert cli.main(argv) == cli.EXIT_INPUT_ERROR


def test_help():
    assert cli.main(['--help']) == cli.EXIT_OK


@pytest.mark.parametrize('argv, message', [
    (['localize', '--method', 'kalman'], 'kalman'),
    (['localize', '--sensors', '5'], 'sensor'),
    (['localize', '--calibration', 'missing.txt'], 'missing.txt'),
    (['localize', '--config', 'nowhere.yml'], 'nowhere.yml'),
    (['benchmark', '--config', 'crate-samples', '--workers', '0'], 'workers'),
])
def test_input_errors(tmp_path, capsys, argv, message):
    code = cli.main(argv + ['--out', str(tmp_path)])
    assert code == cli.EXIT_INPUT_ERROR
    err = capsys.readouterr().err
    assert err.startswith(f'tof-mcl {argv[0]}: ')
    assert message in err


def test_unknown_method_message(tmp_path, capsys):
    code = cli.main(['localize', '--method', 'kalman', '--out', str(tmp_path)])
    assert code == cli.EXIT_INPUT_ERROR
    err = capsys.readouterr().err
    assert err.startswith('tof-mcl localize: Unknown method kalman:')


def test_localize(tmp_path, capsys, filter_file):
    code = cli.main(['localize', '--samples', '2', '--seed', '3',
                     '--filter', str(filter_file), '--out', str(tmp_path)])
    assert code == cli.EXIT_OK
    method, e_x, e_gamma, samples = last_line(capsys).split()
    assert method == 'PSM'
    assert float(e_x) >= 0 and float(e_gamma) >= 0
    assert samples == '2'
    folder = tmp_path / 'localize_crate_psm_seed3'
    trace = pd.read_csv(folder / 'trace.csv')
    assert len(trace) == 3
    readings = pd.read_csv(folder / 'samples.csv')
    assert set(readings['pose_index']) == {0, 1}
    assert set(readings['sensor_id']) == {0}
    assert (folder / 'config.yml').exists()
    assert (folder / 'metadata.yml').exists()
    assert tracking.Experiment.active_environment is None


def test_localize_matches_benchmark_cell(tmp_path, capsys, filter_file):
    cli.main(['localize', '--method', 'ds', '--samples', '2', '--seed', '4',
              '--filter', str(filter_file), '--out', str(tmp_path)])
    _, e_x, e_gamma, _ = last_line(capsys).split()
    spec = tmp_path / 'spec.yml'
    spec.write_text('scene: crate\n'
                    'methods: [ds]\n'
                    'cells: [[1, 2]]\n'
                    'trials: 1\n'
                    'filter:\n'
                    '  particle_count: 30\n')
    code = cli.main(['benchmark', '--config', str(spec), '--seed', '4',
                     '--out', str(tmp_path)])
    assert code == cli.EXIT_OK
    results = pd.read_csv(tmp_path / 'benchmark_crate_seed4' / 'results.csv')
    assert len(results) == 1
    row = results.iloc[0]
    assert row['status'] == 'ok'
    assert row['ex_mean'] == pytest.approx(float(e_x), abs=1e-6)
    assert row['eg_mean'] == pytest.approx(float(e_gamma), abs=1e-4)
    assert row['ex_std'] == 0.
    text = (tmp_path / 'benchmark_crate_seed4' / 'results.txt').read_text(
        encoding='utf-8'
    )
    assert '1 ToF / 2 samples' in text


def test_characterize(tmp_path, capsys):
    config = tmp_path / 'characterization.yml'
    config.write_text('sensor_count: 1\n'
                      'frames_per_pose: 2\n'
                      'noise: off\n')
    code = cli.main(['characterize', '--config', str(config),
                     '--seed', '2', '--out', str(tmp_path)])
    assert code == cli.EXIT_OK
    assert 'slope' in capsys.readouterr().out
    folder = tmp_path / 'characterize_seed2'
    fitted = sensor_model.NoiseModel.load(folder / 'calibration.txt')
    assert fitted.range_slope == pytest.approx(0.963, abs=1e-9)
    residuals = pd.read_csv(folder / 'residuals.csv')
    assert len(residuals) == 97
    sweeps = pd.read_csv(folder / 'sweeps.csv')
    assert len(sweeps) == (97 + 2 * 11) * 2


def test_characterize_bad_config(tmp_path, capsys):
    config = tmp_path / 'characterization.yml'
    config.write_text('sensors: 1\n')
    code = cli.main(['characterize', '--config', str(config),
                     '--out', str(tmp_path)])
    assert code == cli.EXIT_INPUT_ERROR
    assert 'sensors' in capsys.readouterr().err
