"""
Evaluation protocol: accuracy and encoder firing rate, the fbank baseline,
ablation grids, SNR sweeps and spike raster export.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import torch

from components.fbank import FbankFrontend
from components.pipeline import SpikingPipeline
from datasets import AudioDataset
from models import (
    AblationRow,
    AblationSpec,
    AudioBuffer,
    EvalResult,
    FeatureKind,
    FrontendConfig,
    LossConfig,
    NeuronKind,
    OptimizerConfig,
    PipelineConfig,
    Spectrogram,
    SpikeTrain
)
from serialization import write_feature_csv
from training import Trainer

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RESULTS_COLUMNS = ["feature", "neuron", "If", "ILI", "LSR", "seed", "snr_db", "accuracy", "firing_rate"]

ABLATION_PRESET = [
    AblationSpec(feature=FeatureKind.FBANK, neuron=NeuronKind.LIF),
    AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.LIF),
    AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.TC_LIF),
    AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.IHC_LIF, use_if=True),
    AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True),
    AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.IHC_LIF, use_if=True, use_lsr=True),
    AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True, use_lsr=True),
]

FRONTENDS_PRESET = [
    AblationSpec(feature=FeatureKind.FBANK, neuron=NeuronKind.LIF),
    AblationSpec(feature=FeatureKind.LEARNABLE, neuron=NeuronKind.IHC_LIF, use_if=True, use_ili=True, use_lsr=True),
]

PRESETS = {"ablation": ABLATION_PRESET, "frontends": FRONTENDS_PRESET}


def evaluate(
    pipeline: SpikingPipeline,
    dataset: AudioDataset,
    batch_size: int = 32,
    snr_db: Optional[float] = None,
    seed: Optional[int] = None
) -> EvalResult:
    """
    Accuracy and encoder firing rate with exact spikes.

    Args:
        pipeline: Trained pipeline
        dataset: Evaluation utterances
        batch_size: Utterances per forward pass
        snr_db: SNR recorded on the result (None for clean)
        seed: Seed recorded on the result

    Returns:
        EvalResult
    """
    if len(dataset) == 0:
        raise ValueError("evaluation set is empty")
    pipeline.eval()
    pipeline.set_spiking_mode(True)
    hits = 0
    spikes = 0.0
    slots = 0
    with torch.no_grad():
        for waveforms, labels in dataset.batches(batch_size):
            output = pipeline(waveforms)
            hits += int((output.logits.argmax(dim=-1) == labels).sum())
            spikes += float(output.encoder_spikes.sum())
            slots += output.encoder_spikes.numel()
    return EvalResult(
        accuracy=hits / len(dataset),
        firing_rate=spikes / slots,
        snr_db=snr_db,
        seed=seed
    )


def fbank_baseline(buf: AudioBuffer, config: Optional[FrontendConfig] = None) -> Spectrogram:
    """
    Fixed 40-channel log-mel energies, 25 ms / 10 ms framing.

    Args:
        buf: Audio at the front-end's sample rate
        config: Framing and mel range (defaults match the learnable front-end)

    Returns:
        Log-compressed Spectrogram [frames, channels]
    """
    config = config or FrontendConfig(feature=FeatureKind.FBANK)
    if buf.sample_rate != config.sample_rate:
        raise ValueError(f"fbank expects {config.sample_rate} Hz audio, got {buf.sample_rate} Hz")
    frontend = FbankFrontend(config, normalize=False)
    with torch.no_grad():
        values = frontend.log_energies(torch.from_numpy(buf.samples).unsqueeze(0)).squeeze(0)
    return Spectrogram(values=values, frame_hop=config.hop, log_compressed=True)


def pipeline_features(pipeline: SpikingPipeline, buf: AudioBuffer) -> Spectrogram:
    """Encoder input features of one utterance"""
    if buf.sample_rate != pipeline.config.frontend.sample_rate:
        raise ValueError(
            f"pipeline expects {pipeline.config.frontend.sample_rate} Hz audio, got {buf.sample_rate} Hz"
        )
    with torch.no_grad():
        values = pipeline.features(torch.from_numpy(buf.samples).unsqueeze(0)).squeeze(0)
    return Spectrogram(values=values, frame_hop=pipeline.config.frontend.hop, log_compressed=True)


def encode_buffer(pipeline: SpikingPipeline, buf: AudioBuffer) -> SpikeTrain:
    """Encoder spike train of one utterance"""
    pipeline.eval()
    pipeline.set_spiking_mode(True)
    with torch.no_grad():
        spikes = pipeline.encode(torch.from_numpy(buf.samples).unsqueeze(0)).squeeze(0)
    return SpikeTrain(spikes=spikes)


def train_and_evaluate(
    spec: AblationSpec,
    seed: int,
    base: PipelineConfig,
    loss: LossConfig,
    optimizer: OptimizerConfig,
    train_set: AudioDataset,
    test_set: AudioDataset,
    batch_size: int = 32
) -> AblationRow:
    """
    One ablation cell: build the variant, train it, evaluate it.
    Rows without L_SR train with lambda = 0.
    """
    pipeline = SpikingPipeline.from_ablation(base, spec, seed)
    cell_loss = loss if spec.use_lsr else loss.model_copy(update={"lambda_": 0.0})
    trainer = Trainer(pipeline, cell_loss, optimizer, seed)
    trainer.fit(train_set)
    result = evaluate(pipeline, test_set, batch_size, seed=seed)
    logger.info(f"{spec.label} seed {seed}: accuracy={result.accuracy:.4f} R={result.firing_rate:.4f}")
    return AblationRow(spec=spec, seed=seed, result=result)


def run_ablation_grid(
    specs: Sequence[AblationSpec],
    train_set: AudioDataset,
    test_set: AudioDataset,
    seeds: Sequence[int],
    base: PipelineConfig,
    loss: LossConfig,
    optimizer: OptimizerConfig,
    batch_size: int = 32,
    out_csv: Optional[PathLike] = None
) -> List[AblationRow]:
    """
    Train and evaluate every spec with every seed.
    For a given seed all specs share data order and initial classifier weights.

    Args:
        specs: Grid rows (each validated on construction)
        train_set: Clean training utterances
        test_set: Clean test utterances
        seeds: Seeds shared by all specs
        base: Pipeline settings the specs modify
        loss: Loss settings for rows with L_SR
        optimizer: Optimizer settings
        batch_size: Evaluation batch size
        out_csv: Results CSV to write

    Returns:
        Rows in spec-major, seed-minor order
    """
    if not specs:
        raise ValueError("ablation grid needs at least one spec")
    rows = [
        train_and_evaluate(spec, seed, base, loss, optimizer, train_set, test_set, batch_size)
        for spec in specs
        for seed in seeds
    ]
    if out_csv is not None:
        write_results_csv(rows, out_csv)
    return rows


def snr_sweep(
    pipeline: SpikingPipeline,
    dataset: AudioDataset,
    snrs: Sequence[float],
    noises: Sequence[AudioBuffer],
    seeds: Sequence[int],
    batch_size: int = 32
) -> List[EvalResult]:
    """
    Accuracy of a clean-trained pipeline on noise-mixed copies of the test set.
    Every SNR of a seed uses the same noise crops (paired).

    Args:
        pipeline: Pipeline trained on clean data
        dataset: Clean test utterances
        snrs: SNRs in dB; +inf evaluates the clean set
        noises: Noise sources at the dataset's rate
        seeds: Crop seeds

    Returns:
        Results in seed-major, SNR-minor order
    """
    if not snrs:
        raise ValueError("SNR list is empty")
    if not seeds:
        raise ValueError("seed list is empty")
    results = []
    for seed in seeds:
        for snr in snrs:
            noisy = dataset.with_noise(noises, snr, seed)
            result = evaluate(pipeline, noisy, batch_size, snr_db=None if math.isinf(snr) else snr, seed=seed)
            logger.info(f"SNR {snr} dB seed {seed}: accuracy={result.accuracy:.4f}")
            results.append(result)
    return results


def sweep_rows(pipeline_config: PipelineConfig, results: Sequence[EvalResult], use_lsr: bool = False) -> List[AblationRow]:
    """Label sweep results with the pipeline's variant for the results CSV"""
    encoder = pipeline_config.encoder
    spec = AblationSpec(
        feature=pipeline_config.frontend.feature,
        neuron=encoder.neuron,
        use_if=encoder.use_feedback,
        use_ili=encoder.use_inhibition,
        use_lsr=use_lsr
    )
    return [AblationRow(spec=spec, seed=r.seed if r.seed is not None else 0, result=r) for r in results]


def write_results_csv(rows: Sequence[AblationRow], path: PathLike) -> Path:
    """`feature,neuron,If,ILI,LSR,seed,snr_db,accuracy,firing_rate`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=RESULTS_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.csv_row())
    return path


def export_raster(
    spikes: SpikeTrain,
    features: Spectrogram,
    out_dir: PathLike,
    stem: str
) -> Dict[str, Path]:
    """
    Write the spike events and the aligned features for side-by-side plots.

    Args:
        spikes: Encoder spikes [T, N]
        features: Encoder input features [T, channels]
        out_dir: Destination directory
        stem: File name prefix

    Returns:
        {"raster": <stem>_raster.csv, "features": <stem>_features.csv}
    """
    if spikes.n_steps != features.n_frames:
        raise ValueError(f"raster has {spikes.n_steps} steps but features have {features.n_frames} frames")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    raster_path = out_dir / f"{stem}_raster.csv"
    events = torch.nonzero(spikes.spikes, as_tuple=False).tolist()
    with raster_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t", "neuron"])
        writer.writerows(events)

    features_path = write_feature_csv(features, out_dir / f"{stem}_features.csv")
    return {"raster": raster_path, "features": features_path}


def parse_raster(path: PathLike, n_steps: int, n_channels: int) -> SpikeTrain:
    """
    Read a `t,neuron` event list back into a dense SpikeTrain.

    Args:
        path: Raster CSV
        n_steps: T of the original train
        n_channels: N of the original train

    Returns:
        SpikeTrain [n_steps, n_channels]
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"raster not found: {path}")
    dense = torch.zeros(n_steps, n_channels, dtype=torch.float64)
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["t", "neuron"]:
            raise ValueError(f"{path}: expected header 't,neuron', got {header}")
        for record in reader:
            t, neuron = int(record[0]), int(record[1])
            if not (0 <= t < n_steps and 0 <= neuron < n_channels):
                raise ValueError(f"{path}: event ({t}, {neuron}) outside [{n_steps} x {n_channels}]")
            dense[t, neuron] = 1.0
    return SpikeTrain(spikes=dense)
