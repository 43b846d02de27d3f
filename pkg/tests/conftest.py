import math
import os

import pytest

from mellowgen import GmParams, RewardTable, SequenceSpace
from mellowgen.tasks import read_reward_table

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


@pytest.fixture
def two_terminal():
    """Two completed objects with rewards [0, log 2]: the solved
    proportional-sampling target is [1/3, 2/3]."""
    space = SequenceSpace(("a", "b"), 1, 1)
    reward = RewardTable({"a": 0.0, "b": math.log(2.0)}, beta=1.0)
    return space, reward


@pytest.fixture
def gfn_params():
    return GmParams(q=0.0, alpha=0.0, omega=1.0, beta=1.0)


@pytest.fixture(scope="session")
def dna8_table():
    path = os.path.join(FIXTURES, "dna8_scores.tsv")
    return read_reward_table(path)
