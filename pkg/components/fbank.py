"""
Fixed log-mel filterbank front-end, the non-learnable baseline.
"""

import logging

import torch
import torchaudio
from torch import nn

from models import FrontendConfig

logger = logging.getLogger(__name__)


class FbankFrontend(nn.Module):
    """
    40-channel log-mel energies with 25 ms windows and a 10 ms hop.
    Framing matches the learnable front-end so both give [batch, frames, N].

    With `normalize` each utterance's channels are shifted to zero mean and
    unit variance over time before they reach the encoder.
    """

    def __init__(self, config: FrontendConfig, normalize: bool = True, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.config = config
        self.normalize = normalize
        self.mel = torchaudio.transforms.MelSpectrogram(
            sample_rate=config.sample_rate,
            n_fft=config.pool_window,
            win_length=config.pool_window,
            hop_length=config.hop,
            f_min=config.min_freq,
            f_max=config.sample_rate / 2.0 - config.max_freq_margin,
            n_mels=config.n_filters,
            power=2.0,
            center=False,
            norm=None,
            mel_scale="htk",
        ).to(dtype)
        logger.info(f"FbankFrontend initialized: {config.n_filters} mel channels")

    @property
    def n_channels(self) -> int:
        return self.config.n_filters

    def log_energies(self, waveforms: torch.Tensor) -> torch.Tensor:
        """log(max(E, floor)) of the mel energies, [batch, frames, N]"""
        if waveforms.shape[-1] < self.config.pool_window:
            raise ValueError(
                f"buffer of {waveforms.shape[-1]} samples is shorter than one window ({self.config.pool_window})"
            )
        energies = self.mel(waveforms).transpose(-1, -2)
        return torch.log(torch.clamp(energies, min=self.config.log_floor))

    def forward(self, waveforms: torch.Tensor) -> torch.Tensor:
        features = self.log_energies(waveforms)
        if not self.normalize:
            return features
        mean = features.mean(dim=-2, keepdim=True)
        std = features.std(dim=-2, keepdim=True, unbiased=False)
        return (features - mean) / (std + 1e-5)
