from pathlib import Path
from typing import Optional

import pytest

from tempoforge.config import get_settings
from tests.helpers import synthetic_digits, write_idx


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance runs on real MNIST")


@pytest.fixture(autouse=True)
def quiet_settings(monkeypatch):
    # No progress bars or log files from tests
    settings = get_settings()
    monkeypatch.setattr(settings, "progress", False)
    monkeypatch.setattr(settings, "log_file", None)
    monkeypatch.setattr(settings, "workers", 1)
    monkeypatch.setattr(settings, "data_dir", None)
    yield settings


@pytest.fixture
def mnist_dir(tmp_path):
    directory = tmp_path / "mnist"
    directory.mkdir()
    train_images, train_labels = synthetic_digits(30, seed=1)
    test_images, test_labels = synthetic_digits(10, seed=2)
    write_idx(directory, "train", train_images, train_labels)
    write_idx(directory, "t10k", test_images, test_labels)
    return directory
