from typing import Protocol, Callable, Any, runtime_checkable
import numpy as np

from tof_mcl import data_types


@runtime_checkable
class BeamGridProtocol(Protocol):
    """
    Fixed beam directions of a multizone sensor, in the sensor frame.
    """
    zones_per_axis: int
    beam_directions: data_types.FloatArray


class GeneratorFactory(Protocol):
    """
    Protocol of the callable returning independent random streams.
    """

    def __call__(self, *keys: Any) -> np.random.Generator:
        ...


@runtime_checkable
class FilterProtocol(Protocol):
    """
    Protocol of a particle filter that the localization loop can drive.
    """
    pre_step_hooks: list[Callable[['FilterProtocol'], None]]
    post_step_hooks: list[Callable[['FilterProtocol'], None]]

    def step(self, sample: Any) -> None:
        ...

    def estimate(self) -> Any:
        ...
