"""
Audio input/output for the spikefront pipeline.
Loads and writes PCM WAV files, resamples, and mixes noise at a target SNR.
"""

import logging
import math
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.io import wavfile

from models import AudioBuffer, NoiseSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Full-scale divisors for integer PCM; 24-bit data arrives left-aligned in int32
_PCM_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


def load_wav(path: PathLike, normalize: bool = False) -> AudioBuffer:
    """
    Read a PCM WAV file as a mono buffer scaled to [-1, 1].

    Args:
        path: WAV file (8/16/24/32-bit integer or 32/64-bit float PCM)
        normalize: Rescale to unit peak after the channel average

    Returns:
        AudioBuffer with channels averaged

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the encoding is not PCM or the payload is empty
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"WAV file not found: {path}")

    try:
        sample_rate, data = wavfile.read(path)
    except ValueError as e:
        raise ValueError(f"{path}: unsupported (non-PCM) WAV encoding: {e}") from e

    if data.size == 0:
        raise ValueError(f"{path}: WAV payload is empty")

    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in _PCM_SCALE:
        samples = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif np.issubdtype(data.dtype, np.floating):
        samples = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise ValueError(f"{path}: unsupported sample type {data.dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    logger.debug(f"Loaded {path} ({samples.shape[0]} samples at {sample_rate} Hz)")
    buf = AudioBuffer(samples=samples, sample_rate=int(sample_rate))
    return normalize_peak(buf) if normalize else buf


def write_wav(path: PathLike, buf: AudioBuffer) -> Path:
    """
    Write a buffer as 16-bit PCM.

    Args:
        path: Destination file
        buf: Audio to write; values outside [-1, 1] are clipped

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, buf.sample_rate, pcm)
    return path


def normalize_peak(buf: AudioBuffer) -> AudioBuffer:
    """Scale so that max |sample| is 1; silence is returned unchanged"""
    peak = float(np.max(np.abs(buf.samples)))
    if peak == 0.0:
        return buf
    return AudioBuffer(samples=buf.samples / peak, sample_rate=buf.sample_rate)


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """
    Linear-interpolation resampling.

    Args:
        buf: Source audio
        target_rate: Output sample rate in Hz

    Returns:
        AudioBuffer of length round(len * target / source); the input itself
        when the rates already match
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == buf.sample_rate:
        return buf

    n_out = int(round(len(buf) * target_rate / buf.sample_rate))
    if n_out < 1:
        raise ValueError(f"resampling {len(buf)} samples to {target_rate} Hz leaves no samples")

    positions = np.arange(n_out, dtype=np.float64) * (buf.sample_rate / target_rate)
    samples = np.interp(positions, np.arange(len(buf), dtype=np.float64), buf.samples)
    return AudioBuffer(samples=samples, sample_rate=int(target_rate))


def fit_length(buf: AudioBuffer, n_samples: int) -> AudioBuffer:
    """Zero-pad or truncate to exactly n_samples"""
    if len(buf) == n_samples:
        return buf
    if len(buf) > n_samples:
        return AudioBuffer(samples=buf.samples[:n_samples], sample_rate=buf.sample_rate)
    padded = np.zeros(n_samples, dtype=np.float64)
    padded[: len(buf)] = buf.samples
    return AudioBuffer(samples=padded, sample_rate=buf.sample_rate)


def noise_gain(clean_power: float, noise_power: float, snr_db: float) -> float:
    """
    Gain g that puts g * noise at snr_db below the clean signal.

    Args:
        clean_power: Mean squared amplitude of the clean utterance
        noise_power: Mean squared amplitude of the noise segment
        snr_db: Target SNR in dB

    Returns:
        g = sqrt(P_clean / (P_noise * 10^(snr_db / 10)))
    """
    if clean_power <= 0:
        raise ValueError("clean signal has zero power")
    if noise_power <= 0:
        raise ValueError("noise has zero power")
    return math.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0)))


def measure_snr(clean: np.ndarray, noise: np.ndarray) -> float:
    """SNR in dB over the full utterance"""
    return 10.0 * math.log10(float(np.mean(clean ** 2)) / float(np.mean(noise ** 2)))


def _noise_segment(noise: np.ndarray, n_samples: int, seed: int) -> np.ndarray:
    """Seeded-uniform crop of the noise, tiled first when it is too short"""
    rng = np.random.default_rng(seed)
    if noise.shape[0] >= n_samples:
        start = int(rng.integers(0, noise.shape[0] - n_samples + 1))
        return noise[start:start + n_samples]
    reps = n_samples // noise.shape[0] + 2
    tiled = np.tile(noise, reps)
    start = int(rng.integers(0, noise.shape[0]))
    return tiled[start:start + n_samples]


def mix_noise_components(
    clean: AudioBuffer,
    spec: NoiseSpec,
    seed: int
) -> Tuple[AudioBuffer, np.ndarray]:
    """
    Mix noise into a clean utterance and return the scaled noise as well.

    Args:
        clean: Clean utterance
        spec: Noise source and target SNR
        seed: Seed for the crop offset

    Returns:
        (clean + g * noise, g * noise)
    """
    if spec.is_clean:
        return clean, np.zeros_like(clean.samples)
    if spec.noise.sample_rate != clean.sample_rate:
        raise ValueError(
            f"noise rate {spec.noise.sample_rate} Hz differs from clean rate {clean.sample_rate} Hz"
        )

    segment = _noise_segment(spec.noise.samples, len(clean), seed)
    gain = noise_gain(clean.power, float(np.mean(segment ** 2)), spec.snr_db)
    scaled = gain * segment
    return AudioBuffer(samples=clean.samples + scaled, sample_rate=clean.sample_rate), scaled


def mix_noise(clean: AudioBuffer, spec: NoiseSpec, seed: int) -> AudioBuffer:
    """
    Additive noise at a controlled SNR. The mixture is not re-normalized.

    Args:
        clean: Clean utterance
        spec: Noise source and target SNR (+inf returns clean unchanged)
        seed: Seed for the crop offset

    Returns:
        Noisy AudioBuffer
    """
    mixed, _ = mix_noise_components(clean, spec, seed)
    return mixed
