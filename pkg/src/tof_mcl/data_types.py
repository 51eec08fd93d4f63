import enum
from typing import TypeAlias
import pathlib
import numpy as np
import numpy.typing as npt

from tof_mcl import exceptions


class Method(enum.Enum):
    PSM = 'psm'
    DS = 'ds'
    IS = 'is'

    @classmethod
    def parse(cls, name: 'str | Method') -> 'Method':
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise exceptions.UnknownMethodError(
                str(name), [member.value for member in cls]
            ) from None


class MeasurementMode(enum.Enum):
    AVERAGED = 'averaged'
    PER_BEAM = 'per-beam'


class Estimator(enum.Enum):
    MEAN = 'mean'
    BEST = 'best'


class Resampler(enum.Enum):
    SYSTEMATIC = 'systematic'


class SurfaceKind(enum.Enum):
    BOX = 'box'
    ORIENTED_BOX = 'oriented_box'
    MESH = 'mesh'


class Plane(enum.Enum):
    XY = 'xy'
    ZY = 'zy'


FloatArray: TypeAlias = npt.NDArray[np.float64]
BoolArray: TypeAlias = npt.NDArray[np.bool_]
IntArray: TypeAlias = npt.NDArray[np.int64]
FloatLike: TypeAlias = float | FloatArray
SigmaTable: TypeAlias = tuple[tuple[float, float], ...]
PathLike: TypeAlias = str | pathlib.Path
