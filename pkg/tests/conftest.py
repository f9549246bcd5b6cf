from __future__ import annotations

import numpy as np
import pytest

from regpoint import find_regular_chain
from signals import Control
from systems import get_builtin


def _anchor(entry):
    return find_regular_chain(entry.system, entry.default_t1, entry.x1_star, hints=entry.anchor_hints)


@pytest.fixture
def example11_log():
    return get_builtin("example11-log")


@pytest.fixture
def dblint():
    return get_builtin("dblint")


@pytest.fixture
def example11():
    return get_builtin("example11")


@pytest.fixture
def chain3():
    return get_builtin("chain3")


@pytest.fixture
def dblint_anchor(dblint):
    return _anchor(dblint)


@pytest.fixture
def example11_anchor(example11):
    return _anchor(example11)


@pytest.fixture
def example11_log_anchor(example11_log):
    return _anchor(example11_log)


@pytest.fixture
def chain3_anchor(chain3):
    return _anchor(chain3)


@pytest.fixture
def zero_control():
    return Control.hold(0.0, 1.0, [0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(0)
