"""
End-to-end pipeline: front-end -> spiking encoder -> SNN classifier.
"""

import logging
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from components.classifier import SnnClassifier
from components.fbank import FbankFrontend
from components.frontend import LearnableFrontend
from components.neurons import build_layer, project_constraints
from components.surrogate import Surrogate
from models import AblationSpec, FeatureKind, PipelineConfig

logger = logging.getLogger(__name__)

# Independent random streams derived from the run seed
DATA_STREAM = 0
ENCODER_STREAM = 1
CLASSIFIER_STREAM = 2


def derive_generator(seed: int, stream: int) -> torch.Generator:
    """
    Seeded torch generator for one consumer of the run seed.
    Streams keep the classifier's initial weights identical across encoder
    variants that draw different numbers of random values.
    """
    state = np.random.SeedSequence([int(seed), stream]).generate_state(1, dtype=np.uint64)[0]
    return torch.Generator().manual_seed(int(state))


class PipelineOutput(NamedTuple):
    logits: torch.Tensor
    encoder_spikes: torch.Tensor
    features: torch.Tensor


def apply_ablation(config: PipelineConfig, spec: AblationSpec) -> PipelineConfig:
    """
    Pipeline config with the feature type, encoder neuron and lateral terms
    taken from an ablation row; everything else is kept.
    """
    data = config.model_dump(mode="json")
    data["frontend"]["feature"] = spec.feature.value
    data["encoder"]["neuron"] = spec.neuron.value
    data["encoder"]["use_feedback"] = spec.use_if
    data["encoder"]["use_inhibition"] = spec.use_ili
    return PipelineConfig.model_validate(data)


class SpikingPipeline(nn.Module):
    """
    Front-end, encoder and classifier sharing one surrogate spike function.

    The encoder has one neuron per front-end channel unless configured
    otherwise; its input weights start at the identity plus uniform noise.
    """

    def __init__(self, config: PipelineConfig, seed: int):
        super().__init__()
        self.config = config
        self.seed = int(seed)
        dtype = config.precision.dtype
        self.surrogate = Surrogate(config.encoder.surrogate)

        if config.frontend.feature is FeatureKind.LEARNABLE:
            self.frontend = LearnableFrontend(config.frontend, dtype=dtype)
        else:
            self.frontend = FbankFrontend(config.frontend, dtype=dtype)

        n_channels = config.frontend.n_filters
        n_neurons = config.encoder.n_neurons or n_channels
        self.encoder = build_layer(
            config.encoder.neuron,
            n_channels,
            n_neurons,
            beta_init=config.encoder.beta_init,
            coupling_init=config.encoder.coupling_init,
            learn_gamma=config.encoder.learn_gamma,
            use_feedback=config.encoder.use_feedback,
            use_inhibition=config.encoder.use_inhibition,
            v_th=config.encoder.v_th,
            surrogate=self.surrogate,
            binary_input=False,
            identity_init=n_neurons == n_channels,
            generator=derive_generator(seed, ENCODER_STREAM),
            dtype=dtype
        )
        self.classifier = SnnClassifier(
            config.classifier,
            n_neurons,
            surrogate=self.surrogate,
            generator=derive_generator(seed, CLASSIFIER_STREAM),
            dtype=dtype
        )
        logger.info(
            f"SpikingPipeline initialized: {config.frontend.feature.value} features, "
            f"{config.encoder.neuron.value} encoder ({n_neurons} neurons), seed {seed}"
        )

    @classmethod
    def from_ablation(cls, config: PipelineConfig, spec: AblationSpec, seed: int) -> "SpikingPipeline":
        return cls(apply_ablation(config, spec), seed)

    @property
    def dtype(self) -> torch.dtype:
        return self.config.precision.dtype

    @property
    def n_channels(self) -> int:
        return self.frontend.n_channels

    def set_spiking_mode(self, spiking: bool) -> None:
        """Exact spikes (True) or the surrogate's smooth relaxation (False)"""
        self.surrogate.set_spiking_mode(spiking)

    def project_constraints(self) -> None:
        project_constraints(self.encoder)

    def features(self, waveforms: torch.Tensor) -> torch.Tensor:
        return self.frontend(waveforms.to(self.dtype))

    def encode(self, waveforms: torch.Tensor) -> torch.Tensor:
        """Encoder spikes [batch, frames, neurons]"""
        spikes, _ = self.encoder(self.features(waveforms))
        return spikes

    def forward(self, waveforms: torch.Tensor) -> PipelineOutput:
        """
        Args:
            waveforms: [batch, samples]

        Returns:
            PipelineOutput(logits [batch, classes], encoder spikes, features)
        """
        features = self.features(waveforms)
        spikes, _ = self.encoder(features)
        logits = self.classifier(spikes)
        return PipelineOutput(logits=logits, encoder_spikes=spikes, features=features)
