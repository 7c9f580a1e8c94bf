import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.data import ClassWeights, SoftLabelMatrix  # noqa: E402
from src.synth import ScenarioConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def blobs():
    """Three well separated Gaussian blobs in 2-D, 100 rows each, one-hot labels."""
    gen = np.random.default_rng(7)
    centers = np.array([[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0]])
    labels = np.repeat(np.arange(3), 100)
    X = centers[labels] + gen.normal(scale=0.7, size=(300, 2))
    Y = SoftLabelMatrix.one_hot(labels, 3)
    return X, Y, ClassWeights.uniform(3), labels


@pytest.fixture
def tiny_scenario_config():
    return ScenarioConfig(n_train_participants=3, n_test_participants=1, sequence_seconds=120, n_activities=6,
                          n_rooms=3, seed=5)
