"""
Learnable time-frequency front-end: complex Gabor filterbank applied to the
waveform, energy pooling into frames, and per-channel energy normalization.

Center frequencies are normalized frequencies in cycles/sample.
"""

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from models import FrontendConfig, PcenForm, PcenState

logger = logging.getLogger(__name__)

# FWHM (in cycles/sample) of a Gabor filter is sqrt(2 ln 2) / (pi * sigma)
_FWHM_CONSTANT = math.sqrt(2.0 * math.log(2.0)) / math.pi


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def filter_taps(window_len: int) -> torch.Tensor:
    """Integer offsets t = -(L//2) ... L//2"""
    half = window_len // 2
    return torch.arange(-half, half + 1, dtype=torch.float64)


def gabor_impulse_response(eta, sigma, t) -> torch.Tensor:
    """
    Complex Gabor filter value(s).

    Args:
        eta: Center frequency in cycles/sample
        sigma: Gaussian width in samples (> 0)
        t: Sample offset(s)

    Returns:
        exp(i 2 pi eta t) * exp(-t^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)
    """
    eta = torch.as_tensor(eta, dtype=torch.float64)
    sigma = torch.as_tensor(sigma, dtype=torch.float64)
    t = torch.as_tensor(t, dtype=torch.float64)
    if (sigma <= 0).any():
        raise ValueError("sigma must be positive")
    envelope = torch.exp(-t ** 2 / (2.0 * sigma ** 2)) / (math.sqrt(2.0 * math.pi) * sigma)
    phase = 2.0 * math.pi * eta * t
    return torch.complex(envelope * torch.cos(phase), envelope * torch.sin(phase))


def init_mel_bank(
    n_filters: int,
    sample_rate: int,
    window_len: int,
    min_freq: float = 60.0,
    max_freq_margin: float = 100.0
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mel-spaced initialization of center frequencies and widths.

    Centers sit on an endpoint-inclusive mel grid from min_freq to
    sample_rate/2 - max_freq_margin (one filter sits at the mel midpoint).
    Each filter's frequency FWHM equals its mel band width, taken as half the
    distance between its neighbours.

    Args:
        n_filters: Number of filters
        sample_rate: Sample rate in Hz
        window_len: Filter length L in samples
        min_freq: Lowest center in Hz
        max_freq_margin: Gap between the highest center and Nyquist in Hz

    Returns:
        (eta in cycles/sample, sigma in samples), each of length n_filters
    """
    if n_filters < 1:
        raise ValueError(f"n_filters must be >= 1, got {n_filters}")
    max_freq = sample_rate / 2.0 - max_freq_margin
    if not 0 <= min_freq < max_freq:
        raise ValueError(f"empty mel range [{min_freq}, {max_freq}] Hz")

    lo, hi = hz_to_mel(min_freq), hz_to_mel(max_freq)
    if n_filters == 1:
        centers = mel_to_hz(np.array([(lo + hi) / 2.0]))
        fwhm = np.array([max_freq - min_freq])
    else:
        centers = mel_to_hz(np.linspace(lo, hi, n_filters))
        edges = np.concatenate([[centers[0]], centers, [centers[-1]]])
        fwhm = np.empty(n_filters)
        fwhm[1:-1] = (edges[3:-1] - edges[1:-3]) / 2.0
        fwhm[0] = centers[1] - centers[0]
        fwhm[-1] = centers[-1] - centers[-2]

    resolution = sample_rate / window_len
    if fwhm.min() < resolution:
        raise ValueError(
            f"{n_filters} filters are too many for the spacing: narrowest band "
            f"{fwhm.min():.1f} Hz is below the window resolution {resolution:.1f} Hz"
        )

    eta = centers / sample_rate
    sigma = _FWHM_CONSTANT / (fwhm / sample_rate)
    return eta, sigma


def apply_filterbank(
    waveforms: torch.Tensor,
    eta: torch.Tensor,
    sigma: torch.Tensor,
    window_len: int
) -> torch.Tensor:
    """
    "Same"-padded filtering of waveforms with every complex Gabor filter.

    Args:
        waveforms: [batch, samples] or [samples]
        eta: [N] center frequencies (cycles/sample)
        sigma: [N] widths (samples)
        window_len: Filter length L

    Returns:
        Complex responses [batch, samples, N] (or [samples, N])
    """
    squeeze = waveforms.dim() == 1
    if squeeze:
        waveforms = waveforms.unsqueeze(0)
    if waveforms.shape[-1] < window_len:
        raise ValueError(f"buffer of {waveforms.shape[-1]} samples is shorter than one window ({window_len})")

    t = filter_taps(window_len).to(dtype=waveforms.dtype, device=waveforms.device)
    envelope = torch.exp(-t[None, :] ** 2 / (2.0 * sigma[:, None] ** 2)) / (math.sqrt(2.0 * math.pi) * sigma[:, None])
    phase = 2.0 * math.pi * eta[:, None] * t[None, :]
    kernels = torch.cat([envelope * torch.cos(phase), envelope * torch.sin(phase)], dim=0)

    out = F.conv1d(waveforms.unsqueeze(1), kernels.unsqueeze(1), padding=window_len // 2)
    n = eta.shape[0]
    responses = torch.complex(out[:, :n], out[:, n:]).transpose(1, 2)
    return responses.squeeze(0) if squeeze else responses


def energy_pool(responses: torch.Tensor, pool_window: int, hop: int) -> torch.Tensor:
    """
    Mean squared modulus over sliding windows.

    Args:
        responses: Complex [batch, samples, N] (or [samples, N])
        pool_window: Window length in samples
        hop: Hop in samples

    Returns:
        Energies [batch, frames, N] with frames = (samples - window) // hop + 1
    """
    if pool_window < 1 or hop < 1:
        raise ValueError("pooling window and hop must be at least one sample")
    squeeze = responses.dim() == 2
    if squeeze:
        responses = responses.unsqueeze(0)
    if pool_window > responses.shape[1]:
        raise ValueError(f"pooling window {pool_window} exceeds {responses.shape[1]} samples")

    energy = responses.real ** 2 + responses.imag ** 2
    pooled = F.avg_pool1d(energy.transpose(1, 2), kernel_size=pool_window, stride=hop).transpose(1, 2)
    return pooled.squeeze(0) if squeeze else pooled


def _safe_pow(base: torch.Tensor, exponent: torch.Tensor) -> torch.Tensor:
    """base ** exponent with 0 ** r = 0 and finite gradients at base = 0"""
    positive = base > 0
    safe = torch.where(positive, base, torch.ones_like(base))
    return torch.where(positive, safe ** exponent, torch.zeros_like(base))


def pcen_forward(
    energies: torch.Tensor,
    alpha: torch.Tensor,
    delta: torch.Tensor,
    r: torch.Tensor,
    s,
    epsilon,
    smoother: Optional[Union[torch.Tensor, PcenState]] = None,
    form: PcenForm = PcenForm.INNER
) -> Tuple[torch.Tensor, PcenState]:
    """
    Per-channel energy normalization.

    M(t) = (1 - s) M(t-1) + s F(t), with M(-1) = smoother (F(0) by default)
    inner:    (F / ((eps + M)^alpha + delta))^r - delta^r
    standard: (F / (eps + M)^alpha + delta)^r - delta^r

    Args:
        energies: F >= 0, [batch, frames, N] or [frames, N]
        alpha, delta, r: [N] per-channel coefficients
        s: Smoothing rate in [0, 1]; 0 holds M at the initial smoother
        epsilon: Positive offset
        smoother: Initial M, [batch, N] or [N], bare or carried in a PcenState
        form: Placement of delta

    Returns:
        (normalized features with the shape of energies, final M as a PcenState)
    """
    if (energies < 0).any():
        raise ValueError("PCEN input has a negative entry")
    if isinstance(smoother, PcenState):
        smoother = smoother.smoother
    squeeze = energies.dim() == 2
    if squeeze:
        energies = energies.unsqueeze(0)
        if smoother is not None and smoother.dim() == 1:
            smoother = smoother.unsqueeze(0)

    m = energies[:, 0] if smoother is None else smoother
    smoothed = []
    for t in range(energies.shape[1]):
        m = (1.0 - s) * m + s * energies[:, t]
        smoothed.append(m)
    m_all = torch.stack(smoothed, dim=1)

    gain = (epsilon + m_all) ** alpha
    if form is PcenForm.INNER:
        out = _safe_pow(energies / (gain + delta), r) - delta ** r
    else:
        out = (energies / gain + delta) ** r - delta ** r

    if squeeze:
        out, m = out.squeeze(0), m.squeeze(0)
    return out, PcenState(smoother=m)


class GaborFilterbank(nn.Module):
    """
    Learnable complex Gabor filters.
    eta = 0.5 * sigmoid(eta_logit) keeps 0 < eta < 0.5 cycles/sample;
    sigma = exp(log_sigma) keeps sigma > 0.
    """

    def __init__(
        self,
        n_filters: int = 40,
        sample_rate: int = 16000,
        window_len: int = 401,
        min_freq: float = 60.0,
        max_freq_margin: float = 100.0,
        dtype: torch.dtype = torch.float64
    ):
        super().__init__()
        eta, sigma = init_mel_bank(n_filters, sample_rate, window_len, min_freq, max_freq_margin)
        self.n_filters = n_filters
        self.sample_rate = sample_rate
        self.window_len = window_len
        self.eta_logit = nn.Parameter(torch.logit(torch.as_tensor(2.0 * eta, dtype=torch.float64)).to(dtype))
        self.log_sigma = nn.Parameter(torch.log(torch.as_tensor(sigma, dtype=torch.float64)).to(dtype))

    @property
    def eta(self) -> torch.Tensor:
        return 0.5 * torch.sigmoid(self.eta_logit)

    @property
    def sigma(self) -> torch.Tensor:
        return torch.exp(self.log_sigma)

    def center_frequencies_hz(self) -> torch.Tensor:
        return self.eta.detach() * self.sample_rate

    def impulse_responses(self) -> torch.Tensor:
        """Complex filters [N, taps]"""
        t = filter_taps(self.window_len).to(self.eta_logit.dtype)
        return gabor_impulse_response(self.eta[:, None], self.sigma[:, None], t[None, :])

    def forward(self, waveforms: torch.Tensor) -> torch.Tensor:
        return apply_filterbank(waveforms, self.eta, self.sigma, self.window_len)


class Pcen(nn.Module):
    """
    Trainable PCEN with exp-reparameterized alpha, delta, r and a
    sigmoid-reparameterized smoothing rate s.
    """

    def __init__(
        self,
        n_channels: int,
        alpha: float = 0.96,
        delta: float = 0.01,
        r: float = 0.5,
        s: float = 0.04,
        epsilon: float = 1e-6,
        form: PcenForm = PcenForm.INNER,
        train_s: bool = True,
        train_epsilon: bool = False,
        dtype: torch.dtype = torch.float64
    ):
        super().__init__()
        self.form = form
        self.log_alpha = nn.Parameter(torch.full((n_channels,), math.log(alpha), dtype=dtype))
        self.log_delta = nn.Parameter(torch.full((n_channels,), math.log(delta), dtype=dtype))
        self.log_r = nn.Parameter(torch.full((n_channels,), math.log(r), dtype=dtype))

        s_logit = torch.tensor(math.log(s / (1.0 - s)), dtype=dtype)
        if train_s:
            self.s_logit = nn.Parameter(s_logit)
        else:
            self.register_buffer("s_logit", s_logit)

        log_eps = torch.tensor(math.log(epsilon), dtype=dtype)
        if train_epsilon:
            self.log_epsilon = nn.Parameter(log_eps)
        else:
            self.register_buffer("log_epsilon", log_eps)

    @property
    def alpha(self) -> torch.Tensor:
        return torch.exp(self.log_alpha)

    @property
    def delta(self) -> torch.Tensor:
        return torch.exp(self.log_delta)

    @property
    def r(self) -> torch.Tensor:
        return torch.exp(self.log_r)

    @property
    def s(self) -> torch.Tensor:
        return torch.sigmoid(self.s_logit)

    @property
    def epsilon(self) -> torch.Tensor:
        return torch.exp(self.log_epsilon)

    def forward(
        self,
        energies: torch.Tensor,
        smoother: Optional[Union[torch.Tensor, PcenState]] = None
    ) -> torch.Tensor:
        out, _ = self.stream(energies, smoother)
        return out

    def stream(
        self,
        energies: torch.Tensor,
        state: Optional[Union[torch.Tensor, PcenState]] = None
    ) -> Tuple[torch.Tensor, PcenState]:
        """Normalize one chunk and return the smoother to carry into the next"""
        return pcen_forward(
            energies, self.alpha, self.delta, self.r, self.s, self.epsilon, state, self.form
        )


class LearnableFrontend(nn.Module):
    """Gabor filterbank -> energy pooling -> PCEN"""

    def __init__(self, config: FrontendConfig, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.config = config
        self.filterbank = GaborFilterbank(
            n_filters=config.n_filters,
            sample_rate=config.sample_rate,
            window_len=config.window_len,
            min_freq=config.min_freq,
            max_freq_margin=config.max_freq_margin,
            dtype=dtype
        )
        self.pcen = Pcen(
            config.n_filters,
            alpha=config.alpha_init,
            delta=config.resolved_delta,
            r=config.r_init,
            s=config.s_init,
            epsilon=config.epsilon,
            form=config.pcen_form,
            train_s=config.train_s,
            train_epsilon=config.train_epsilon,
            dtype=dtype
        )
        logger.info(
            f"LearnableFrontend initialized: {config.n_filters} Gabor filters, "
            f"L={config.window_len}, PCEN form={config.pcen_form.value}"
        )

    @property
    def n_channels(self) -> int:
        return self.config.n_filters

    def energies(self, waveforms: torch.Tensor) -> torch.Tensor:
        """Pooled filterbank energies F [batch, frames, N]"""
        responses = self.filterbank(waveforms)
        return energy_pool(responses, self.config.pool_window, self.config.hop)

    def forward(self, waveforms: torch.Tensor) -> torch.Tensor:
        return self.pcen(self.energies(waveforms))
