import numpy as np
import pytest

from featalign import advtrain, datagen
from featalign.features import load_expanded


@pytest.fixture(scope="session")
def matrix():
    return load_expanded()


@pytest.fixture(scope="session")
def small_split(matrix):
    """A small CS3a train/val/test split with its layout."""
    cs = matrix.class_set("CS3a")
    layout = datagen.feature_layout(matrix, cs, seed=0)
    train, val, test = datagen.generate_dataset(matrix, cs, 60, 0.2, 0, layout=layout)
    return cs, layout, train, val, test


@pytest.fixture(scope="session")
def small_model(small_split):
    _, _, train, _, _ = small_split
    return advtrain.train_classifier(train, advtrain.TrainConfig(epochs=5), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from helpers import CRITERIA_LINES

    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
