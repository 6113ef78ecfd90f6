"""
Surrogate-gradient BPTT training of the full pipeline.
L = L_cls + lambda * ReLU(R - SR), with R the encoder's spike rate.
"""

import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import torch
import torch.nn.functional as F

from components.pipeline import DATA_STREAM, SpikingPipeline, derive_generator
from datasets import AudioDataset
from models import (
    LossConfig,
    OptimizerConfig,
    OptimizerKind,
    ScheduleKind,
    SpikeTrain,
    TrainReport
)

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the loss or a gradient stops being finite"""

    def __init__(self, message: str, diagnostics: Dict[str, Any]):
        super().__init__(message)
        self.diagnostics = diagnostics


def spike_rate(spikes: Union[torch.Tensor, SpikeTrain]) -> torch.Tensor:
    """
    Average spikes per neuron per timestep.

    Args:
        spikes: SpikeTrain or tensor [..., T, N]

    Returns:
        R = sum(spikes) / count, differentiable through surrogate spikes
    """
    values = spikes.spikes if isinstance(spikes, SpikeTrain) else spikes
    if values.numel() == 0:
        raise ValueError("spike rate of an empty spike train is undefined")
    return values.mean()


def sr_loss(rate, target_sr: float):
    """ReLU(R - SR)"""
    if not 0.0 <= target_sr <= 1.0:
        raise ValueError(f"target spike rate must lie in [0, 1], got {target_sr}")
    if isinstance(rate, torch.Tensor):
        return torch.relu(rate - target_sr)
    return max(0.0, rate - target_sr)


def total_loss(l_cls, l_sr, lambda_: float):
    """L_cls + lambda * L_SR; exactly L_cls when lambda is 0"""
    if lambda_ < 0:
        raise ValueError(f"lambda must be non-negative, got {lambda_}")
    if lambda_ == 0:
        return l_cls
    return l_cls + lambda_ * l_sr


def build_optimizer(parameters, config: OptimizerConfig) -> torch.optim.Optimizer:
    if config.kind is OptimizerKind.ADAM:
        return torch.optim.Adam(parameters, lr=config.learning_rate)
    return torch.optim.SGD(parameters, lr=config.learning_rate, momentum=config.momentum)


def build_scheduler(optimizer: torch.optim.Optimizer, config: OptimizerConfig):
    if config.schedule is ScheduleKind.STEP:
        return torch.optim.lr_scheduler.StepLR(optimizer, step_size=config.step_size, gamma=config.decay)
    return None


class Trainer:
    """
    Minibatch training loop over a SpikingPipeline.
    Lateral-weight constraints are projected after every optimizer step.
    """

    def __init__(
        self,
        pipeline: SpikingPipeline,
        loss_config: LossConfig,
        optimizer_config: OptimizerConfig,
        seed: int,
        report_path: Optional[Path] = None
    ):
        self.pipeline = pipeline
        self.loss_config = loss_config
        self.optimizer_config = optimizer_config
        self.seed = int(seed)
        self.report_path = Path(report_path) if report_path else None
        self.generator = derive_generator(seed, DATA_STREAM)
        self.optimizer = build_optimizer(pipeline.parameters(), optimizer_config)
        self.scheduler = build_scheduler(self.optimizer, optimizer_config)
        self.epoch = 0
        self.steps = 0
        logger.info(
            f"Trainer initialized: {optimizer_config.kind.value} lr={optimizer_config.learning_rate} "
            f"lambda={loss_config.lambda_} SR={loss_config.target_sr}"
        )

    @property
    def learning_rate(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    def compute_loss(
        self,
        waveforms: torch.Tensor,
        labels: torch.Tensor
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """
        Forward pass and loss terms for one batch.

        Returns:
            (loss, cls_loss, sr_loss, encoder spike rate, logits)
        """
        output = self.pipeline(waveforms)
        l_cls = F.cross_entropy(output.logits, labels)
        rate = spike_rate(output.encoder_spikes)
        l_sr = sr_loss(rate, self.loss_config.target_sr)
        loss = total_loss(l_cls, l_sr, self.loss_config.lambda_)
        return loss, l_cls, l_sr, rate, output.logits

    def _diagnostics(self, step: int, loss, l_cls, l_sr) -> Dict[str, Any]:
        first_bad = None
        norms = {}
        for name, param in self.pipeline.named_parameters():
            norms[name] = float(param.detach().norm())
            if first_bad is None and not torch.isfinite(param).all():
                first_bad = name
            if first_bad is None and param.grad is not None and not torch.isfinite(param.grad).all():
                first_bad = f"{name}.grad"
        return {
            "epoch": self.epoch,
            "step": step,
            "loss": float(loss),
            "cls_loss": float(l_cls),
            "sr_loss": float(l_sr),
            "parameter_norms": norms,
            "first_non_finite": first_bad,
        }

    def train_step(self, waveforms: torch.Tensor, labels: torch.Tensor) -> Dict[str, float]:
        """One optimizer step; returns the batch's loss terms and hit count"""
        self.pipeline.train()
        self.pipeline.set_spiking_mode(True)
        loss, l_cls, l_sr, rate, logits = self.compute_loss(waveforms, labels)
        if not torch.isfinite(loss):
            diagnostics = self._diagnostics(self.steps, loss, l_cls, l_sr)
            logger.error(f"Training diverged at step {self.steps}: {diagnostics['first_non_finite']}")
            raise TrainingDivergedError(f"non-finite loss at epoch {self.epoch}, step {self.steps}", diagnostics)

        self.optimizer.zero_grad()
        loss.backward()
        if self.optimizer_config.grad_clip is not None:
            total_norm = torch.nn.utils.clip_grad_norm_(self.pipeline.parameters(), self.optimizer_config.grad_clip)
            if not torch.isfinite(total_norm):
                diagnostics = self._diagnostics(self.steps, loss, l_cls, l_sr)
                raise TrainingDivergedError(f"non-finite gradient at epoch {self.epoch}, step {self.steps}", diagnostics)
        self.optimizer.step()
        self.pipeline.project_constraints()
        self.steps += 1

        hits = int((logits.detach().argmax(dim=-1) == labels).sum())
        logger.debug(f"step {self.steps}: loss={float(loss):.5f} R={float(rate):.4f}")
        return {
            "loss": float(loss.detach()),
            "cls_loss": float(l_cls.detach()),
            "sr_loss": float(l_sr.detach()),
            "rate": float(rate.detach()),
            "hits": hits,
        }

    def train_epoch(self, dataset: AudioDataset) -> TrainReport:
        """
        One pass over the dataset in a seeded shuffled order.

        Args:
            dataset: Training utterances

        Returns:
            TrainReport averaged over utterances
        """
        if len(dataset) == 0:
            raise ValueError("training set is empty")
        started = time.perf_counter()
        learning_rate = self.learning_rate
        totals = {"loss": 0.0, "cls_loss": 0.0, "sr_loss": 0.0, "rate": 0.0, "hits": 0}
        count = 0
        steps = 0
        for waveforms, labels in dataset.batches(self.optimizer_config.batch_size, self.generator):
            batch = self.train_step(waveforms, labels)
            n = int(labels.shape[0])
            for key in ("loss", "cls_loss", "sr_loss", "rate"):
                totals[key] += batch[key] * n
            totals["hits"] += batch["hits"]
            count += n
            steps += 1

        if self.scheduler is not None:
            self.scheduler.step()

        report = TrainReport(
            epoch=self.epoch,
            steps=steps,
            loss=totals["loss"] / count,
            cls_loss=totals["cls_loss"] / count,
            sr_loss=totals["sr_loss"] / count,
            accuracy=totals["hits"] / count,
            firing_rate=min(1.0, max(0.0, totals["rate"] / count)),
            learning_rate=learning_rate,
            wall_clock_seconds=time.perf_counter() - started
        )
        self.epoch += 1
        if self.report_path is not None:
            append_report(self.report_path, report)
        logger.info(
            f"epoch {report.epoch}: loss={report.loss:.4f} acc={report.accuracy:.3f} "
            f"R={report.firing_rate:.4f} ({report.wall_clock_seconds:.1f}s)"
        )
        return report

    def fit(self, dataset: AudioDataset, epochs: Optional[int] = None) -> List[TrainReport]:
        epochs = epochs if epochs is not None else self.optimizer_config.epochs
        return [self.train_epoch(dataset) for _ in range(epochs)]


def append_report(path: Path, report: TrainReport) -> None:
    """Append one JSON line per epoch"""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(report.model_dump(), sort_keys=True) + "\n")


def train_epoch(
    pipeline: SpikingPipeline,
    dataset: AudioDataset,
    loss_config: LossConfig,
    optimizer_config: OptimizerConfig,
    seed: int
) -> Tuple[SpikingPipeline, TrainReport]:
    """
    One epoch with a fresh optimizer.

    Args:
        pipeline: Pipeline to train in place
        dataset: Training utterances
        loss_config: lambda and target spike rate
        optimizer_config: Optimizer settings
        seed: Seed of the shuffle order

    Returns:
        (the trained pipeline, its TrainReport)
    """
    trainer = Trainer(pipeline, loss_config, optimizer_config, seed)
    report = trainer.train_epoch(dataset)
    return pipeline, report
