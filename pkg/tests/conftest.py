import logging

import numpy as np
import pytest

from noise_adapter.circuits import generate_suite
from noise_adapter.dataset import build_dataset, encode_samples, fit_scaler, split_train_val
from noise_adapter.device import preset
from noise_adapter.seeding import derive_rng
from noise_adapter.train import TrainConfig, train_source

SHOTS = 2048


@pytest.fixture(autouse=True)
def reset_package_logger():
    '''CLI tests attach handlers and stop propagation; undo that so caplog works everywhere'''
    yield
    logger = logging.getLogger("noise_adapter")
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers = []
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


@pytest.fixture(scope="session")
def suite():
    return generate_suite(42)


@pytest.fixture(scope="session")
def raw_source(suite):
    return build_dataset(suite, preset("SourceA"), SHOTS, derive_rng(42, "shots-SourceA"))


@pytest.fixture(scope="session")
def raw_target(suite):
    return build_dataset(suite, preset("TargetB"), SHOTS, derive_rng(42, "shots-TargetB"))


@pytest.fixture(scope="session")
def split(raw_source):
    return split_train_val(len(raw_source), 42)


@pytest.fixture(scope="session")
def scaler(raw_source, split):
    return fit_scaler([raw_source[i] for i in split.train_idx])


@pytest.fixture(scope="session")
def source(raw_source, scaler):
    return encode_samples(raw_source, scaler)


@pytest.fixture(scope="session")
def target(raw_target, scaler):
    return encode_samples(raw_target, scaler)


@pytest.fixture(scope="session")
def source_train(source, split):
    return [source[i] for i in split.train_idx]


@pytest.fixture(scope="session")
def source_val(source, split):
    return [source[i] for i in split.val_idx]


@pytest.fixture(scope="session")
def quick_train_config():
    return TrainConfig(max_epochs=30, early_stop_patience=10)


@pytest.fixture(scope="session")
def trained(source, split, quick_train_config):
    '''(best params, train log) from a short source run; tests must not mutate the params'''
    return train_source(source, split, quick_train_config, seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_CONFIG_YAML = """\
shots: 256
train:
  max_epochs: 4
  early_stop_patience: 2
adapt:
  k_values: [5]
  seeds: [0, 1]
  replay_size: 8
  compare_without_replay: false
"""


@pytest.fixture
def small_config_file(tmp_path, monkeypatch):
    '''A fast protocol config; runs are created under tmp_path/runs'''
    monkeypatch.setenv("NOISE_ADAPTER_RUNS_ROOT", str(tmp_path / "runs"))
    monkeypatch.delenv("LOG_LEVEL", raising=False)
    path = tmp_path / "small.yaml"
    path.write_text(SMALL_CONFIG_YAML, encoding="utf-8")
    return path
