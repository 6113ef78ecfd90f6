"""
Shared fixtures: isolated settings, small pipeline configs and tiny corpora.
"""

import os
import sys

import numpy as np
import pytest
import torch

# Add parent directory to path to import project modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from datasets import synthesize_corpus  # noqa: E402
from models import (  # noqa: E402
    AudioBuffer,
    ClassifierConfig,
    EncoderConfig,
    FrontendConfig,
    LossConfig,
    OptimizerConfig,
    PipelineConfig
)
from settings import get_settings  # noqa: E402

SMALL_CLIP_SECONDS = 0.5
SMALL_FRAMES = (8000 - 400) // 160 + 1


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point the run registry and default output at the test's tmp dir"""
    monkeypatch.setenv("SPIKEFRONT_DATABASE_PATH", str(tmp_path / "registry.db"))
    monkeypatch.setenv("SPIKEFRONT_OUT_DIR", str(tmp_path / "out"))
    monkeypatch.setenv("SPIKEFRONT_THREADS", "1")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
    torch.use_deterministic_algorithms(False)


@pytest.fixture
def small_pipeline_config():
    """8 Gabor filters, IHC-LIF encoder with lateral terms, 2-class readout"""
    return PipelineConfig(
        frontend=FrontendConfig(n_filters=8),
        encoder=EncoderConfig(),
        classifier=ClassifierConfig(layer_sizes=[8], n_classes=2)
    )


@pytest.fixture
def small_loss_config():
    return LossConfig(lambda_=1.0, target_sr=0.1)


@pytest.fixture
def small_optimizer_config():
    return OptimizerConfig(learning_rate=1e-2, batch_size=2, epochs=1)


@pytest.fixture
def small_train_set():
    """2 classes x 2 utterances of 0.5 s"""
    return synthesize_corpus(n_classes=2, per_class=2, seed=1, duration=SMALL_CLIP_SECONDS)


@pytest.fixture
def small_test_set():
    return synthesize_corpus(n_classes=2, per_class=1, seed=2, duration=SMALL_CLIP_SECONDS)


@pytest.fixture
def noise_buffer():
    rng = np.random.default_rng(7)
    return AudioBuffer(samples=rng.normal(0.0, 0.1, size=12000), sample_rate=16000)
