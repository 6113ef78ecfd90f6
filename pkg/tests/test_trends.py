"""
Desk-scale trend checks on the 10-class synthetic corpus.
Each takes minutes on a laptop CPU; run with `pytest -m slow`.
"""

import numpy as np
import pytest

from components.pipeline import SpikingPipeline
from datasets import synthesize_corpus
from evaluation import evaluate, snr_sweep, train_and_evaluate
from models import (
    AblationSpec,
    AudioBuffer,
    ClassifierConfig,
    FeatureKind,
    LossConfig,
    NeuronKind,
    OptimizerConfig,
    PipelineConfig
)
from training import Trainer

SEEDS = [0, 1, 2]


@pytest.fixture(scope="module")
def corpus():
    train = synthesize_corpus(n_classes=10, per_class=40, seed=1)
    test = synthesize_corpus(n_classes=10, per_class=10, seed=2)
    return train, test


@pytest.fixture(scope="module")
def base_config():
    return PipelineConfig(classifier=ClassifierConfig(layer_sizes=[128], n_classes=10))


@pytest.fixture(scope="module")
def optimizer_config():
    return OptimizerConfig(learning_rate=1e-3, batch_size=16, epochs=10)


def _babble(seed: int) -> AudioBuffer:
    """Utterances of every class summed into one long noise source"""
    other = synthesize_corpus(n_classes=10, per_class=4, seed=seed)
    samples = other.waveforms.sum(dim=0).numpy()
    return AudioBuffer(samples=np.tile(samples, 4), sample_rate=other.sample_rate)


@pytest.mark.slow
class TestTrends:
    """Directional results the model is expected to reproduce"""

    def test_rate_penalty_lowers_firing(self, corpus, base_config, optimizer_config):
        """L_SR cuts the firing rate by >= 30% for <= 3 points of accuracy in most seeds"""
        train, test = corpus
        loss = LossConfig(lambda_=1.0, target_sr=0.1)
        wins = 0
        for seed in SEEDS:
            plain = train_and_evaluate(
                AblationSpec(neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True),
                seed, base_config, loss, optimizer_config, train, test
            ).result
            penalized = train_and_evaluate(
                AblationSpec(neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True, use_lsr=True),
                seed, base_config, loss, optimizer_config, train, test
            ).result
            if (penalized.firing_rate <= 0.7 * plain.firing_rate
                    and plain.accuracy - penalized.accuracy <= 0.03):
                wins += 1
        assert wins >= 2

    def test_learnable_features_match_fbank(self, corpus, base_config, optimizer_config):
        train, test = corpus
        loss = LossConfig(lambda_=0.0)
        wins = 0
        for seed in SEEDS:
            fbank = train_and_evaluate(
                AblationSpec(feature=FeatureKind.FBANK, neuron=NeuronKind.LIF),
                seed, base_config, loss, optimizer_config, train, test
            ).result
            learnable = train_and_evaluate(
                AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.LIF),
                seed, base_config, loss, optimizer_config, train, test
            ).result
            if learnable.accuracy >= fbank.accuracy:
                wins += 1
        assert wins >= 2

    def test_lateral_terms_help_under_noise(self, corpus, base_config, optimizer_config):
        """IHC-LIF beats the same encoder without W_f and W_LI at 0 dB on identical noisy sets"""
        train, test = corpus
        loss = LossConfig(lambda_=1.0, target_sr=0.1)
        noise = _babble(seed=3)
        wins = 0
        for seed in SEEDS:
            accuracies = []
            for spec in (
                AblationSpec(neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True, use_lsr=True),
                AblationSpec(neuron=NeuronKind.IHC_LIF, use_lsr=True),
            ):
                pipeline = SpikingPipeline.from_ablation(base_config, spec, seed)
                Trainer(pipeline, loss, optimizer_config, seed).fit(train)
                clean, noisy = snr_sweep(pipeline, test, [float("inf"), 0.0], [noise], seeds=[seed])
                assert clean.accuracy == evaluate(pipeline, test).accuracy
                accuracies.append(noisy.accuracy)
            if accuracies[0] > accuracies[1]:
                wins += 1
        assert wins >= 2
