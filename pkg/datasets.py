"""
Datasets for desk-scale experiments.
Reads `path<TAB>label` manifests and synthesizes a spoken-digit-scale corpus.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from audio_io import fit_length, load_wav, mix_noise, resample, write_wav
from models import AudioBuffer, NoiseSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True)
class ManifestEntry:
    """One utterance of a manifest"""
    path: Path
    label: str


def read_manifest(path: PathLike) -> List[ManifestEntry]:
    """
    Parse a manifest with one `path<TAB>label` line per utterance.
    Relative paths resolve against the manifest's directory.

    Args:
        path: Manifest file

    Returns:
        List of entries in file order
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")

    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise ValueError(f"{path}:{lineno}: expected 'path<TAB>label'")
        wav_path = Path(fields[0])
        if not wav_path.is_absolute():
            wav_path = path.parent / wav_path
        entries.append(ManifestEntry(path=wav_path, label=fields[1].strip()))

    if not entries:
        raise ValueError(f"manifest {path} is empty")
    return entries


def write_manifest(path: PathLike, entries: Sequence[ManifestEntry]) -> Path:
    """Write entries with paths relative to the manifest when possible"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for entry in entries:
        try:
            rel = entry.path.relative_to(path.parent)
        except ValueError:
            rel = entry.path
        lines.append(f"{rel.as_posix()}\t{entry.label}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class AudioDataset:
    """
    Fixed-length utterances held in memory.
    Waveforms are [utterances, samples]; labels index into class_names.
    """

    def __init__(
        self,
        waveforms: torch.Tensor,
        labels: torch.Tensor,
        class_names: Sequence[str],
        sample_rate: int
    ):
        if waveforms.dim() != 2:
            raise ValueError(f"waveforms must be [utterances, samples], got {tuple(waveforms.shape)}")
        if labels.shape[0] != waveforms.shape[0]:
            raise ValueError("waveforms and labels disagree on the number of utterances")
        self.waveforms = waveforms
        self.labels = labels.long()
        self.class_names = list(class_names)
        self.sample_rate = sample_rate

    def __len__(self) -> int:
        return int(self.waveforms.shape[0])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_samples(self) -> int:
        return int(self.waveforms.shape[1])

    @classmethod
    def from_buffers(
        cls,
        buffers: Sequence[AudioBuffer],
        labels: Sequence[int],
        class_names: Sequence[str],
        sample_rate: int,
        n_samples: int
    ) -> "AudioDataset":
        """Resample and pad/crop buffers into one tensor"""
        rows = [
            fit_length(resample(buf, sample_rate), n_samples).samples
            for buf in buffers
        ]
        waveforms = torch.from_numpy(np.stack(rows))
        return cls(waveforms, torch.tensor(list(labels), dtype=torch.long), class_names, sample_rate)

    @classmethod
    def from_manifest(
        cls,
        path: PathLike,
        sample_rate: int = 16000,
        clip_seconds: float = 1.0,
        class_names: Optional[Sequence[str]] = None,
        normalize: bool = False
    ) -> "AudioDataset":
        """
        Load every utterance of a manifest.

        Args:
            path: Manifest file
            sample_rate: Rate the pipeline runs at
            clip_seconds: Utterances are padded or cropped to this duration
            class_names: Fixed label order (sorted labels of the manifest by default)
            normalize: Scale each utterance to unit peak before padding

        Returns:
            AudioDataset
        """
        entries = read_manifest(path)
        if class_names is None:
            class_names = sorted({entry.label for entry in entries})
        index = {name: i for i, name in enumerate(class_names)}
        unknown = {entry.label for entry in entries} - set(index)
        if unknown:
            raise ValueError(f"manifest {path} has labels outside the class list: {sorted(unknown)}")

        buffers = [load_wav(entry.path, normalize=normalize) for entry in entries]
        labels = [index[entry.label] for entry in entries]
        n_samples = int(round(clip_seconds * sample_rate))
        logger.info(f"Loaded {len(buffers)} utterances / {len(class_names)} classes from {path}")
        return cls.from_buffers(buffers, labels, class_names, sample_rate, n_samples)

    def buffer(self, index: int) -> AudioBuffer:
        return AudioBuffer(samples=self.waveforms[index].double().numpy(), sample_rate=self.sample_rate)

    def subset(self, indices: Sequence[int]) -> "AudioDataset":
        idx = torch.as_tensor(list(indices), dtype=torch.long)
        return AudioDataset(self.waveforms[idx], self.labels[idx], self.class_names, self.sample_rate)

    def batches(
        self,
        batch_size: int,
        generator: Optional[torch.Generator] = None
    ) -> Iterator[Tuple[torch.Tensor, torch.Tensor]]:
        """
        Iterate minibatches, shuffled when a generator is given.

        Args:
            batch_size: Utterances per batch
            generator: Seeded generator for the shuffle order

        Yields:
            (waveforms [B, samples], labels [B])
        """
        if generator is None:
            order = torch.arange(len(self))
        else:
            order = torch.randperm(len(self), generator=generator)
        for start in range(0, len(self), batch_size):
            idx = order[start:start + batch_size]
            yield self.waveforms[idx], self.labels[idx]

    def with_noise(self, noises: Sequence[AudioBuffer], snr_db: float, seed: int) -> "AudioDataset":
        """
        Copy of the dataset with every utterance mixed at snr_db.
        Utterance i uses noise i mod len(noises) and crop seed (seed, i).

        Args:
            noises: Noise sources at the dataset's rate
            snr_db: Target SNR; +inf returns the dataset itself
            seed: Base seed shared by every SNR of a sweep

        Returns:
            Noisy AudioDataset
        """
        if np.isinf(snr_db) and snr_db > 0:
            return self
        if not noises:
            raise ValueError("at least one noise source is required")

        rows = []
        for i in range(len(self)):
            spec = NoiseSpec(noise=noises[i % len(noises)], snr_db=snr_db)
            crop_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
            rows.append(mix_noise(self.buffer(i), spec, crop_seed).samples)
        waveforms = torch.from_numpy(np.stack(rows)).to(self.waveforms.dtype)
        return AudioDataset(waveforms, self.labels.clone(), self.class_names, self.sample_rate)


# ---------------------------------------------------------------------------
# Synthetic spoken-digit-scale corpus
# ---------------------------------------------------------------------------

_SYLLABLES = 3
_FORMANT_BANDWIDTH = 120.0


def _class_templates(n_classes: int, template_seed: int) -> List[List[Tuple[float, float, float]]]:
    """Per class, a sequence of (f0, F1, F2) syllables; shared by every split"""
    rng = np.random.default_rng(template_seed)
    templates = []
    for _ in range(n_classes):
        syllables = []
        for _ in range(_SYLLABLES):
            f0 = float(rng.uniform(100.0, 220.0))
            f1 = float(rng.uniform(300.0, 900.0))
            f2 = float(rng.uniform(1000.0, 2600.0))
            syllables.append((f0, f1, f2))
        templates.append(syllables)
    return templates


def _render_utterance(
    syllables: List[Tuple[float, float, float]],
    rng: np.random.Generator,
    sample_rate: int,
    n_samples: int
) -> np.ndarray:
    """Harmonic source shaped by two formants per syllable, with jitter"""
    out = np.zeros(n_samples, dtype=np.float64)
    cursor = int(rng.uniform(0.10, 0.22) * sample_rate)
    for f0, f1, f2 in syllables:
        length = int(rng.uniform(0.13, 0.19) * sample_rate)
        if cursor + length > n_samples:
            break
        f0 = f0 * rng.uniform(0.9, 1.1)
        f1 = f1 * rng.uniform(0.95, 1.05)
        f2 = f2 * rng.uniform(0.95, 1.05)
        t = np.arange(length) / sample_rate
        harmonics = np.arange(1, int((sample_rate / 2 - 200) // f0) + 1)
        freqs = harmonics * f0
        weights = (
            np.exp(-(((freqs - f1) / _FORMANT_BANDWIDTH) ** 2))
            + 0.7 * np.exp(-(((freqs - f2) / _FORMANT_BANDWIDTH) ** 2))
        )
        phases = rng.uniform(0, 2 * np.pi, size=harmonics.shape[0])
        voiced = (weights[:, None] * np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
        out[cursor:cursor + length] += voiced * np.hanning(length)
        cursor += length + int(rng.uniform(0.01, 0.04) * sample_rate)

    peak = np.max(np.abs(out))
    if peak > 0:
        out *= rng.uniform(0.3, 0.8) / peak
    out += rng.normal(0.0, 1e-3, size=n_samples)
    return out


def synthesize_corpus(
    n_classes: int = 10,
    per_class: int = 40,
    seed: int = 0,
    sample_rate: int = 16000,
    duration: float = 1.0,
    template_seed: int = 1234
) -> AudioDataset:
    """
    Deterministic toy corpus of spoken-digit-like utterances.

    Args:
        n_classes: Number of word classes
        per_class: Utterances per class
        seed: Seed for the per-utterance jitter (use different seeds per split)
        sample_rate: Output rate in Hz
        duration: Utterance length in seconds
        template_seed: Seed for the class templates, shared across splits

    Returns:
        AudioDataset ordered class by class
    """
    templates = _class_templates(n_classes, template_seed)
    rng = np.random.default_rng(seed)
    n_samples = int(round(duration * sample_rate))

    rows, labels = [], []
    for label, syllables in enumerate(templates):
        for _ in range(per_class):
            rows.append(_render_utterance(syllables, rng, sample_rate, n_samples))
            labels.append(label)

    names = [f"word{i}" for i in range(n_classes)]
    logger.info(f"Synthesized {len(rows)} utterances / {n_classes} classes (seed {seed})")
    return AudioDataset(torch.from_numpy(np.stack(rows)), torch.tensor(labels), names, sample_rate)


def write_corpus(dataset: AudioDataset, out_dir: PathLike, manifest_name: str) -> Path:
    """
    Write every utterance as 16-bit WAV plus a manifest.

    Args:
        dataset: Utterances to write
        out_dir: Directory for WAVs and manifest
        manifest_name: Manifest file name inside out_dir

    Returns:
        Path of the manifest
    """
    out_dir = Path(out_dir)
    stem = Path(manifest_name).stem
    entries = []
    for i in range(len(dataset)):
        label = dataset.class_names[int(dataset.labels[i])]
        wav_path = out_dir / stem / f"{label}_{i:05d}.wav"
        write_wav(wav_path, dataset.buffer(i))
        entries.append(ManifestEntry(path=wav_path, label=label))
    return write_manifest(out_dir / manifest_name, entries)
