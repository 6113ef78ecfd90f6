"""
Tests for pipeline assembly, seeded streams and ablation configs.
"""

import pytest
import torch
from pydantic import ValidationError

from components.fbank import FbankFrontend
from components.frontend import LearnableFrontend
from components.neurons import IhcLifLayer, LifLayer, TcLifLayer
from components.pipeline import (
    CLASSIFIER_STREAM,
    ENCODER_STREAM,
    SpikingPipeline,
    apply_ablation,
    derive_generator
)
from models import AblationSpec, FeatureKind, NeuronKind
from tests.conftest import SMALL_FRAMES


def _classifier_state(pipeline):
    return {k: v.clone() for k, v in pipeline.classifier.state_dict().items()}


@pytest.mark.unit
class TestDeriveGenerator:
    """Test per-consumer random streams"""

    def test_reproducible(self):
        a = torch.rand(5, generator=derive_generator(3, ENCODER_STREAM))
        b = torch.rand(5, generator=derive_generator(3, ENCODER_STREAM))
        assert torch.equal(a, b)

    def test_streams_differ(self):
        a = torch.rand(5, generator=derive_generator(3, ENCODER_STREAM))
        b = torch.rand(5, generator=derive_generator(3, CLASSIFIER_STREAM))
        c = torch.rand(5, generator=derive_generator(4, ENCODER_STREAM))
        assert not torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_large_seed(self):
        torch.rand(1, generator=derive_generator(2 ** 64 - 1, 0))


@pytest.mark.unit
class TestApplyAblation:
    """Test ablation rows projected onto a pipeline config"""

    def test_lateral_terms_copied(self, small_pipeline_config):
        spec = AblationSpec(neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=False)
        config = apply_ablation(small_pipeline_config, spec)
        assert config.encoder.neuron is NeuronKind.IHC_LIF
        assert config.encoder.use_feedback is True
        assert config.encoder.use_inhibition is False
        assert config.frontend.n_filters == small_pipeline_config.frontend.n_filters

    def test_fbank_lif_row(self, small_pipeline_config):
        spec = AblationSpec(feature=FeatureKind.FBANK, neuron=NeuronKind.LIF)
        config = apply_ablation(small_pipeline_config, spec)
        assert config.frontend.feature is FeatureKind.FBANK
        assert config.encoder.neuron is NeuronKind.LIF
        assert not config.encoder.use_feedback and not config.encoder.use_inhibition

    def test_invalid_row_rejected(self):
        with pytest.raises(ValidationError):
            AblationSpec(neuron=NeuronKind.TC_LIF, use_ili=True)

    def test_labels(self):
        assert AblationSpec(neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True, use_lsr=True).label == (
            "learnable+ihc-lif+If+ILI+LSR"
        )
        assert AblationSpec(feature=FeatureKind.FBANK, neuron=NeuronKind.LIF).label == "fbank+lif"


@pytest.mark.unit
class TestSpikingPipeline:
    """Test the assembled front-end, encoder and classifier"""

    def test_forward_shapes(self, small_pipeline_config, small_train_set):
        pipeline = SpikingPipeline(small_pipeline_config, seed=0)
        output = pipeline(small_train_set.waveforms[:2])
        assert output.features.shape == (2, SMALL_FRAMES, 8)
        assert output.encoder_spikes.shape == (2, SMALL_FRAMES, 8)
        assert output.logits.shape == (2, 2)
        assert output.logits.dtype == torch.float64
        assert bool(((output.encoder_spikes == 0) | (output.encoder_spikes == 1)).all())

    def test_component_types(self, small_pipeline_config):
        pipeline = SpikingPipeline(small_pipeline_config, seed=0)
        assert isinstance(pipeline.frontend, LearnableFrontend)
        assert isinstance(pipeline.encoder, IhcLifLayer)
        assert pipeline.n_channels == 8

    def test_encoder_starts_near_identity(self, small_pipeline_config):
        pipeline = SpikingPipeline(small_pipeline_config, seed=0)
        weight = pipeline.encoder.weight.detach()
        assert bool((torch.diagonal(weight) > 0).all())

    def test_fbank_pipeline(self, small_pipeline_config, small_train_set):
        spec = AblationSpec(feature=FeatureKind.FBANK, neuron=NeuronKind.LIF)
        pipeline = SpikingPipeline.from_ablation(small_pipeline_config, spec, seed=0)
        assert isinstance(pipeline.frontend, FbankFrontend)
        assert isinstance(pipeline.encoder, LifLayer)
        output = pipeline(small_train_set.waveforms[:1])
        assert output.features.shape == (1, SMALL_FRAMES, 8)

    def test_classifier_identical_across_encoders(self, small_pipeline_config):
        """Encoder variants draw from their own stream"""
        states = []
        for spec in (
            AblationSpec(feature=FeatureKind.FBANK, neuron=NeuronKind.LIF),
            AblationSpec(neuron=NeuronKind.TC_LIF),
            AblationSpec(neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True),
        ):
            states.append(_classifier_state(SpikingPipeline.from_ablation(small_pipeline_config, spec, seed=5)))
        for other in states[1:]:
            for key, value in states[0].items():
                assert torch.equal(value, other[key]), key

    def test_fresh_ihc_matches_tclif(self, small_pipeline_config, small_train_set):
        """Zero lateral weights give bit-identical initial logits"""
        tc = SpikingPipeline.from_ablation(small_pipeline_config, AblationSpec(neuron=NeuronKind.TC_LIF), seed=2)
        ihc = SpikingPipeline.from_ablation(
            small_pipeline_config, AblationSpec(neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True), seed=2
        )
        assert type(tc.encoder) is TcLifLayer
        waveforms = small_train_set.waveforms[:2]
        with torch.no_grad():
            assert torch.equal(tc(waveforms).logits, ihc(waveforms).logits)

    def test_same_seed_same_pipeline(self, small_pipeline_config):
        a = SpikingPipeline(small_pipeline_config, seed=9)
        b = SpikingPipeline(small_pipeline_config, seed=9)
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(pa, pb), name

    def test_relaxed_mode_is_smooth(self, small_pipeline_config, small_train_set):
        pipeline = SpikingPipeline(small_pipeline_config, seed=0)
        pipeline.set_spiking_mode(False)
        with torch.no_grad():
            spikes = pipeline.encode(small_train_set.waveforms[:1])
        assert float(spikes.min()) >= 0.0 and float(spikes.max()) <= 1.0
        pipeline.set_spiking_mode(True)
        assert pipeline.surrogate.spiking

    def test_project_constraints(self, small_pipeline_config):
        pipeline = SpikingPipeline(small_pipeline_config, seed=0)
        with torch.no_grad():
            pipeline.encoder.w_li.fill_(-1.0)
        pipeline.project_constraints()
        assert float(pipeline.encoder.w_li.min()) == 0.0
