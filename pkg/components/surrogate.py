"""
Heaviside spike generation with surrogate gradients.
"""

import torch
from torch import nn

from models import SurrogateKind, SurrogateSpec


def heaviside(x: torch.Tensor) -> torch.Tensor:
    """H(x) = 1 for x >= 0 (the threshold itself fires), else 0"""
    return (x >= 0).to(x.dtype)


def surrogate_grad(spec: SurrogateSpec, x: torch.Tensor) -> torch.Tensor:
    """
    Pseudo-derivative of the Heaviside.

    Args:
        spec: Surrogate kind and shape parameter
        x: Membrane potential minus threshold

    Returns:
        rectangular: 1/(2w) on |x| <= w, 0 elsewhere;
        sigmoid-derivative: k * sig(kx) * (1 - sig(kx))
    """
    if spec.kind is SurrogateKind.RECTANGULAR:
        w = spec.width
        return (x.abs() <= w).to(x.dtype) / (2.0 * w)
    k = spec.steepness
    sig = torch.sigmoid(k * x)
    return k * sig * (1.0 - sig)


def surrogate_primitive(spec: SurrogateSpec, x: torch.Tensor) -> torch.Tensor:
    """Smooth spike whose exact derivative is surrogate_grad"""
    if spec.kind is SurrogateKind.RECTANGULAR:
        w = spec.width
        return torch.clamp((x + w) / (2.0 * w), 0.0, 1.0)
    return torch.sigmoid(spec.steepness * x)


class _SpikeFunction(torch.autograd.Function):
    """Heaviside forward, surrogate backward"""

    @staticmethod
    def forward(ctx, x, spec):
        ctx.save_for_backward(x)
        ctx.spec = spec
        return heaviside(x)

    @staticmethod
    def backward(ctx, grad_output):
        (x,) = ctx.saved_tensors
        return grad_output * surrogate_grad(ctx.spec, x), None


class Surrogate(nn.Module):
    """
    Spike nonlinearity shared by every spiking layer of a pipeline.
    In spiking mode the forward pass emits exact {0, 1} spikes; in relaxed
    mode it emits the surrogate's primitive so finite differences agree with
    the backward pass.
    """

    def __init__(self, spec: SurrogateSpec = None, spiking: bool = True):
        super().__init__()
        self.spec = spec or SurrogateSpec()
        self.spiking = spiking

    def set_spiking_mode(self, spiking: bool) -> None:
        self.spiking = spiking

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.spiking:
            return _SpikeFunction.apply(x, self.spec)
        return surrogate_primitive(self.spec, x)

    def extra_repr(self) -> str:
        return f"kind={self.spec.kind.value}, spiking={self.spiking}"
