"""Init file for tof_mcl module."""

__all__ = [
    'BeamGrid',
    'BenchmarkSpec',
    'Experiment',
    'FilterConfig',
    'LikelihoodModel',
    'Method',
    'NoiseModel',
    'ParticleFilter',
    'Pose2',
    'Pose3',
    'ResultTable',
    'Scene',
    'TriangleMesh',
    'run_benchmark',
    'run_characterization',
    'run_localization',
]

from tof_mcl.benchmark import BenchmarkSpec
from tof_mcl.benchmark import ResultTable
from tof_mcl.benchmark import run_benchmark
from tof_mcl.characterize import run_characterization
from tof_mcl.data_types import Method
from tof_mcl.geometry import Pose2
from tof_mcl.geometry import Pose3
from tof_mcl.geometry import TriangleMesh
from tof_mcl.mcl import FilterConfig
from tof_mcl.mcl import ParticleFilter
from tof_mcl.mcl import run_localization
from tof_mcl.sensor_model import BeamGrid
from tof_mcl.sensor_model import LikelihoodModel
from tof_mcl.sensor_model import NoiseModel
from tof_mcl.simulator import Scene
from tof_mcl.tracking import Experiment
