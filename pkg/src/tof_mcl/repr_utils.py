"""Readable, YAML-friendly representations of run settings."""

import dataclasses
import enum
from typing import Any, Iterable

import yaml  # type: ignore
import numpy as np
import pandas as pd
import torch

from tof_mcl import geometry

PRECISION = 3


class LiteralStr(str):
    """Multi-line text dumped as a YAML block."""


class MetadataDumper(yaml.SafeDumper):
    """Safe dumper writing LiteralStr as blocks and None as empty."""


def _represent_literal(dumper: yaml.SafeDumper, data: LiteralStr):
    return dumper.represent_scalar('tag:yaml.org,2002:str', str(data),
                                   style='|')


def _represent_none(dumper: yaml.SafeDumper, _: None):
    return dumper.represent_scalar('tag:yaml.org,2002:null', '')


MetadataDumper.add_representer(LiteralStr, _represent_literal)
MetadataDumper.add_representer(type(None), _represent_none)


def has_own_repr(obj: Any) -> bool:
    return not repr(obj).endswith(hex(id(obj)) + '>')


def limit_size(container: Iterable, max_size: int) -> list:
    """
    First and last elements of a container, an ellipsis in between.

    Containers without a length are read up to max_size elements.
    """
    if hasattr(container, '__len__'):
        listed = list(container)
        if len(listed) > max_size:
            half = max_size // 2
            listed = listed[:half] + ['...'] + listed[-half:]
        return listed
    listed = []
    iter_container = iter(container)
    for _ in range(max_size):
        try:
            listed.append(next(iter_container))
        except StopIteration:
            break
    else:
        listed.append('...')
    return listed


def _array_repr(array: np.ndarray, max_size: int) -> LiteralStr:
    with np.printoptions(precision=PRECISION,
                         suppress=True,
                         threshold=max_size,
                         edgeitems=max_size // 2):
        return LiteralStr(array)


def _table_repr(table: pd.DataFrame | pd.Series | pd.Index,
                max_size: int) -> LiteralStr:
    with pd.option_context('display.precision', PRECISION,
                           'display.max_rows', max_size,
                           'display.max_columns', max_size):
        return LiteralStr(table)


def _pose3_repr(pose: geometry.Pose3) -> dict[str, Any]:
    translation = np.round(pose.translation, 6).tolist()
    return {'class': 'Pose3',
            'translation': translation,
            'rotation': _array_repr(pose.rotation, 9)}


def _surface_repr(surface: geometry.Surface) -> dict[str, Any]:
    lower, upper = surface.bounds()
    return {'class': type(surface).__name__,
            'kind': surface.kind.value,
            'triangles': len(surface.to_mesh()),
            'lower': np.round(lower, 6).tolist(),
            'upper': np.round(upper, 6).tolist()}


def struc_repr(struc: Any, *, max_size: int = 10) -> Any:
    """
    Readable representation of a run setting, for the metadata dump.

    Numbers and strings are kept, arrays and tables become literal strings,
    enums become their values and dataclasses a mapping of their fields.
    Poses and surfaces are summarized. Containers are shortened to max_size
    elements.

    Args:
        struc: the object to represent.
        max_size: limits the size of containers and arrays.

    Returns:
        a representation containing only strings, numbers and containers.
    """
    # numpy scalars may subclass the builtins, which the safe dumper rejects
    if isinstance(struc, np.generic):
        return struc.item()

    if struc is None or isinstance(struc, (bool, int, float, str)):
        return struc

    if isinstance(struc, enum.Enum):
        return struc.value

    if isinstance(struc, (type, type(lambda: ...))):
        return struc.__name__

    if isinstance(struc, geometry.Pose3):
        return _pose3_repr(struc)

    if isinstance(struc, geometry.Surface):
        return _surface_repr(struc)

    if isinstance(struc, (pd.DataFrame, pd.Series, pd.Index)):
        return _table_repr(struc, max_size)

    if isinstance(struc, torch.Tensor):
        struc = struc.detach().cpu().numpy()

    if isinstance(struc, np.ndarray):
        return _array_repr(struc, max_size)

    if dataclasses.is_dataclass(struc) and not isinstance(struc, type):
        fields = {field.name: struc_repr(getattr(struc, field.name),
                                         max_size=max_size)
                  for field in dataclasses.fields(struc)
                  if not field.name.startswith('_')}
        return {'class': type(struc).__name__} | fields

    if isinstance(struc, dict):
        return {str(key): struc_repr(struc[key], max_size=max_size)
                for key in limit_size(struc, max_size=max_size)
                if key != '...'}

    if hasattr(struc, '__iter__'):
        return [struc_repr(item, max_size=max_size)
                for item in limit_size(struc, max_size=max_size)]

    attributes = dict(getattr(struc, '__dict__', {}))
    attributes |= {name: getattr(struc, name)
                   for name in getattr(struc, '__slots__', ())}
    represented = {name: struc_repr(value, max_size=max_size)
                   for name, value in attributes.items()
                   if not name.startswith('_') and value is not struc}
    if represented:
        return {'class': type(struc).__name__} | represented

    return repr(struc) if has_own_repr(struc) else type(struc).__name__
