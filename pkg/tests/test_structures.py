import copy
import math

import pytest

from tof_mcl.structures import ErrorAggregate


def test_single_value():
    aggregate = ErrorAggregate(e_x=0.25)
    assert aggregate.reduce() == {'e_x': 0.25}
    assert aggregate.std() == {'e_x': 0.}


def test_merge_matches_population_statistics():
    values = [0.1, 0.4, 0.2, 0.7, 0.3]
    aggregate = ErrorAggregate()
    for value in values:
        aggregate += {'e_x': value, 'e_gamma': 10 * value}
    mean = sum(values) / len(values)
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    assert aggregate.counts['e_x'] == len(values)
    assert aggregate.reduce()['e_x'] == pytest.approx(mean)
    assert aggregate.std()['e_x'] == pytest.approx(std)
    assert aggregate.std()['e_gamma'] == pytest.approx(10 * std)


def test_add_does_not_modify_operands():
    first = ErrorAggregate([('e_x', 1.)])
    second = ErrorAggregate(e_x=3.)
    total = first + second
    assert total.reduce() == {'e_x': 2.}
    assert total.std() == {'e_x': 1.}
    assert first == ErrorAggregate(e_x=1.)
    assert second == ErrorAggregate(e_x=3.)


def test_copy():
    aggregate = ErrorAggregate(e_x=1.)
    copied = copy.copy(aggregate)
    copied += {'e_x': 2.}
    assert aggregate.counts['e_x'] == 1
    assert copied.counts['e_x'] == 2
    assert aggregate != copied
    assert aggregate != {'e_x': 1.}
