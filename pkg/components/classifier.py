"""
Backend SNN classifier: spiking hidden layers and a non-spiking readout.
"""

import logging
import math
from typing import List, Optional

import torch
from torch import nn

from components.neurons import SpikingLayer, build_layer
from components.surrogate import Surrogate
from models import ClassifierConfig, SpikeTrain

logger = logging.getLogger(__name__)


class IntegratorReadout(nn.Module):
    """
    Leak-free integrator: U[t] = U[t-1] + s[t] @ w + b.
    Logits are the membrane averaged over time.
    """

    def __init__(
        self,
        in_features: int,
        n_classes: int,
        generator: Optional[torch.Generator] = None,
        dtype: torch.dtype = torch.float64
    ):
        super().__init__()
        bound = 1.0 / math.sqrt(in_features)
        self.weight = nn.Parameter(
            torch.empty(in_features, n_classes, dtype=dtype).uniform_(-bound, bound, generator=generator)
        )
        self.bias = nn.Parameter(torch.zeros(n_classes, dtype=dtype))

    def forward(self, spikes: torch.Tensor) -> torch.Tensor:
        current = spikes @ self.weight + self.bias
        membrane = torch.cumsum(current, dim=1)
        return membrane.mean(dim=1)


class SnnClassifier(nn.Module):
    """
    Feedforward or recurrent stack of LIF (or TC-LIF) layers followed by the
    integrator readout.
    """

    def __init__(
        self,
        config: ClassifierConfig,
        in_features: int,
        surrogate: Optional[Surrogate] = None,
        generator: Optional[torch.Generator] = None,
        dtype: torch.dtype = torch.float64
    ):
        super().__init__()
        self.config = config
        self.in_features = in_features
        surrogate = surrogate or Surrogate()

        layers: List[SpikingLayer] = []
        width = in_features
        for size in config.layer_sizes:
            layers.append(
                build_layer(
                    config.neuron,
                    width,
                    size,
                    beta_init=config.beta_init,
                    v_th=config.v_th,
                    surrogate=surrogate,
                    recurrent=config.recurrent,
                    generator=generator,
                    dtype=dtype
                )
            )
            width = size
        self.layers = nn.ModuleList(layers)
        self.readout = IntegratorReadout(width, config.n_classes, generator=generator, dtype=dtype)

        kind = "recurrent" if config.recurrent else "feedforward"
        logger.info(
            f"SnnClassifier initialized: {kind} {config.neuron.value} "
            f"{in_features}-{'-'.join(str(s) for s in config.layer_sizes)}-{config.n_classes}"
        )

    def forward(self, spikes: torch.Tensor) -> torch.Tensor:
        """
        Args:
            spikes: Encoder spikes [batch, time, in_features]

        Returns:
            Logits [batch, n_classes]
        """
        if spikes.dim() != 3 or spikes.shape[-1] != self.in_features:
            raise ValueError(
                f"classifier expects [batch, time, {self.in_features}] spikes, got {tuple(spikes.shape)}"
            )
        hidden = spikes
        for layer in self.layers:
            hidden, _ = layer(hidden)
        return self.readout(hidden)


def classify(classifier: SnnClassifier, spikes: SpikeTrain) -> torch.Tensor:
    """
    Logits for a single spike train.

    Args:
        classifier: Trained or freshly built classifier
        spikes: Binary [T, N_in] train

    Returns:
        Logits [n_classes]
    """
    values = spikes.spikes.to(classifier.readout.weight.dtype)
    return classifier(values.unsqueeze(0)).squeeze(0)
