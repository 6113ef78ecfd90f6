"""
Finite-difference verification of reverse-mode gradients.
"""

import logging
import time
from typing import Callable, Dict, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from components.pipeline import SpikingPipeline, derive_generator
from models import (
    ClassifierConfig,
    EncoderConfig,
    FrontendConfig,
    GradCheckReport,
    NeuronKind,
    PipelineConfig,
    Precision,
    SurrogateKind,
    SurrogateSpec
)
from training import sr_loss, spike_rate, total_loss

logger = logging.getLogger(__name__)

# The tiny pipeline: 72 samples pooled 16/8 give T = 8 frames
TINY_SAMPLES = 72


def _trainable_masks(module: nn.Module) -> Dict[str, torch.Tensor]:
    """Per-parameter masks of entries that may be perturbed"""
    masks = {name: torch.ones_like(p, dtype=torch.bool) for name, p in module.named_parameters()}
    for prefix, child in module.named_modules():
        if hasattr(child, "trainable_masks") and child is not module:
            for name, mask in child.trainable_masks().items():
                full = f"{prefix}.{name}" if prefix else name
                if full in masks:
                    masks[full] = masks[full] & mask
    return masks


def _relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    diff = float(torch.linalg.vector_norm(analytic - numeric))
    scale = max(float(torch.linalg.vector_norm(analytic)), float(torch.linalg.vector_norm(numeric)), 1e-12)
    return diff / scale


def finite_diff_check(
    module: nn.Module,
    loss_fn: Callable[[], torch.Tensor],
    epsilon: float = 1e-4,
    tolerance: float = 1e-3,
    masks: Optional[Dict[str, torch.Tensor]] = None
) -> GradCheckReport:
    """
    Compare reverse-mode gradients with central differences on every
    trainable tensor of a module.

    Args:
        module: Module whose parameters are checked
        loss_fn: Zero-argument closure computing a scalar loss with module
        epsilon: Central-difference step
        tolerance: Maximum accepted relative error
        masks: Entries to perturb per parameter (constraint-pinned entries excluded);
            derived from the module's layers when omitted

    Returns:
        GradCheckReport with the per-tensor relative errors
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not tolerance > 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")

    named = [(name, p) for name, p in module.named_parameters() if p.requires_grad]
    masks = masks if masks is not None else _trainable_masks(module)

    loss = loss_fn()
    analytic = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)

    per_parameter = {}
    with torch.no_grad():
        for (name, param), grad in zip(named, analytic):
            mask = masks.get(name, torch.ones_like(param, dtype=torch.bool))
            grad = torch.zeros_like(param) if grad is None else grad
            numeric = torch.zeros_like(param)
            flat = param.view(-1)
            flat_mask = mask.reshape(-1)
            for i in range(flat.numel()):
                if not flat_mask[i]:
                    continue
                original = flat[i].item()
                flat[i] = original + epsilon
                plus = float(loss_fn())
                flat[i] = original - epsilon
                minus = float(loss_fn())
                flat[i] = original
                numeric.view(-1)[i] = (plus - minus) / (2.0 * epsilon)
            per_parameter[name] = _relative_error(grad * mask, numeric)

    worst = max(per_parameter, key=per_parameter.get) if per_parameter else None
    max_error = per_parameter[worst] if worst is not None else 0.0
    report = GradCheckReport(
        passed=max_error <= tolerance,
        max_relative_error=max_error,
        worst_parameter=worst,
        epsilon=epsilon,
        tolerance=tolerance,
        per_parameter=per_parameter
    )
    logger.info(f"Gradient check: max relative error {max_error:.3e} ({worst}), passed={report.passed}")
    return report


def tiny_pipeline_config(neuron: NeuronKind = NeuronKind.IHC_LIF) -> PipelineConfig:
    """4 Gabor filters -> PCEN -> 3 encoder neurons -> 2-class readout"""
    lateral = neuron is NeuronKind.IHC_LIF
    return PipelineConfig(
        frontend=FrontendConfig(n_filters=4, window_len=25, pool_window=16, hop=8),
        encoder=EncoderConfig(
            neuron=neuron,
            n_neurons=3,
            use_feedback=lateral,
            use_inhibition=lateral,
            surrogate=SurrogateSpec(kind=SurrogateKind.SIGMOID, steepness=4.0)
        ),
        classifier=ClassifierConfig(layer_sizes=[3], n_classes=2),
        precision=Precision.FLOAT64
    )


def build_tiny_pipeline(
    seed: int = 0,
    neuron: NeuronKind = NeuronKind.IHC_LIF
) -> Tuple[SpikingPipeline, torch.Tensor, torch.Tensor]:
    """
    Tiny pipeline in relaxed spiking mode with nonzero feasible lateral
    weights, plus a random input batch and labels.

    Returns:
        (pipeline, waveforms [2, 72], labels [2])
    """
    pipeline = SpikingPipeline(tiny_pipeline_config(neuron), seed)
    pipeline.set_spiking_mode(False)
    generator = derive_generator(seed, 99)
    encoder = pipeline.encoder
    with torch.no_grad():
        for name in ("w_f", "w_li"):
            weight = getattr(encoder, name, None)
            if weight is None:
                continue
            values = torch.empty_like(weight).uniform_(0.1, 0.5, generator=generator)
            if name == "w_f":
                sign = torch.randint(0, 2, weight.shape, generator=generator).to(weight.dtype) * 2 - 1
                values = values * sign
            weight.copy_(values)
    pipeline.project_constraints()
    waveforms = 0.5 * torch.randn(2, TINY_SAMPLES, generator=generator, dtype=torch.float64)
    labels = torch.tensor([0, 1])
    return pipeline, waveforms, labels


def check_tiny_pipeline(
    seed: int = 0,
    epsilon: float = 1e-4,
    tolerance: float = 1e-3,
    lambda_: float = 1.0
) -> Tuple[GradCheckReport, float]:
    """
    Run the finite-difference check on the tiny IHC-LIF pipeline with the
    surrogate-relaxed loss CE + lambda * ReLU(R - 0).

    Returns:
        (report, runtime in seconds)
    """
    started = time.perf_counter()
    pipeline, waveforms, labels = build_tiny_pipeline(seed)

    def loss_fn() -> torch.Tensor:
        output = pipeline(waveforms)
        l_cls = F.cross_entropy(output.logits, labels)
        return total_loss(l_cls, sr_loss(spike_rate(output.encoder_spikes), 0.0), lambda_)

    report = finite_diff_check(pipeline, loss_fn, epsilon=epsilon, tolerance=tolerance)
    return report, time.perf_counter() - started
