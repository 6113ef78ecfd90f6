"""
Spiking neuron layers: LIF, two-compartment TC-LIF, and IHC-LIF with lateral
feedback (dendrite) and non-negative lateral inhibition (soma).

Weights are stored [in, out]; lateral matrices are [out, out] with row =
receiving neuron, column = neuron that spiked.
"""

import logging
import math
from typing import Dict, NamedTuple, Optional, Tuple

import torch
from torch import nn

from components.surrogate import Surrogate
from models import NeuronKind

logger = logging.getLogger(__name__)


class NeuronState(NamedTuple):
    """Per-step state; `potential` is U for LIF and the soma U_s otherwise"""
    potential: torch.Tensor
    spikes: torch.Tensor
    dendrite: Optional[torch.Tensor] = None


def zero_diag(weight: torch.Tensor) -> torch.Tensor:
    """
    Copy of a square matrix with its diagonal set to zero.

    Args:
        weight: [n, n] matrix

    Returns:
        Matrix with zero diagonal; off-diagonal entries untouched
    """
    if weight.dim() != 2 or weight.shape[0] != weight.shape[1]:
        raise ValueError(f"zero_diag needs a square matrix, got {tuple(weight.shape)}")
    eye = torch.eye(weight.shape[0], dtype=torch.bool, device=weight.device)
    return weight.masked_fill(eye, 0.0)


def _check_binary(spikes: torch.Tensor) -> None:
    if not ((spikes == 0) | (spikes == 1)).all():
        raise ValueError("input spikes must be binary")


class SpikingLayer(nn.Module):
    """
    Base class: synaptic current I = s_in @ w + b (+ recurrent term) and the
    time loop. Subclasses implement `step`.
    """

    kind: NeuronKind

    def __init__(
        self,
        in_features: int,
        out_features: int,
        v_th: float = 1.0,
        surrogate: Optional[Surrogate] = None,
        binary_input: bool = True,
        recurrent: bool = False,
        identity_init: bool = False,
        generator: Optional[torch.Generator] = None,
        dtype: torch.dtype = torch.float64
    ):
        super().__init__()
        if v_th <= 0:
            raise ValueError(f"v_th must be positive, got {v_th}")
        self.in_features = in_features
        self.out_features = out_features
        self.v_th = float(v_th)
        self.surrogate = surrogate or Surrogate()
        self.binary_input = binary_input

        bound = 1.0 / math.sqrt(in_features)
        weight = torch.empty(in_features, out_features, dtype=dtype).uniform_(-bound, bound, generator=generator)
        if identity_init:
            if in_features != out_features:
                raise ValueError("identity initialization needs in_features == out_features")
            weight = weight + torch.eye(in_features, dtype=dtype)
        self.weight = nn.Parameter(weight)
        self.bias = nn.Parameter(torch.zeros(out_features, dtype=dtype))

        if recurrent:
            rec_bound = 1.0 / math.sqrt(out_features)
            self.recurrent_weight = nn.Parameter(
                torch.empty(out_features, out_features, dtype=dtype).uniform_(-rec_bound, rec_bound, generator=generator)
            )
        else:
            self.recurrent_weight = None

    def synaptic_current(self, s_in: torch.Tensor, s_prev: torch.Tensor) -> torch.Tensor:
        """I = s_in @ w + b, plus S[t-1] @ W_rec^T for recurrent layers"""
        if s_in.shape[-1] != self.in_features:
            raise ValueError(f"expected {self.in_features} input channels, got {s_in.shape[-1]}")
        if self.binary_input and self.surrogate.spiking:
            _check_binary(s_in)
        current = s_in @ self.weight + self.bias
        if self.recurrent_weight is not None:
            current = current + s_prev @ self.recurrent_weight.T
        return current

    def initial_state(self, batch_size: int, dtype: Optional[torch.dtype] = None) -> NeuronState:
        dtype = dtype or self.weight.dtype
        zeros = torch.zeros(batch_size, self.out_features, dtype=dtype, device=self.weight.device)
        return NeuronState(potential=zeros, spikes=zeros.clone())

    def step(self, state: NeuronState, s_in: torch.Tensor) -> Tuple[NeuronState, torch.Tensor]:
        raise NotImplementedError

    def forward(
        self,
        inputs: torch.Tensor,
        state: Optional[NeuronState] = None
    ) -> Tuple[torch.Tensor, NeuronState]:
        """
        Run the layer over a sequence.

        Args:
            inputs: [batch, time, in_features]
            state: Initial state (zeros when omitted)

        Returns:
            (spikes [batch, time, out_features], final state)
        """
        if inputs.dim() != 3:
            raise ValueError(f"inputs must be [batch, time, features], got {tuple(inputs.shape)}")
        if state is None:
            state = self.initial_state(inputs.shape[0], inputs.dtype)
        outputs = []
        for t in range(inputs.shape[1]):
            state, spikes = self.step(state, inputs[:, t])
            outputs.append(spikes)
        return torch.stack(outputs, dim=1), state

    def trainable_masks(self) -> Dict[str, torch.Tensor]:
        """Entries of each parameter that are free (not pinned by a constraint)"""
        return {name: torch.ones_like(p, dtype=torch.bool) for name, p in self.named_parameters()}


class LifLayer(SpikingLayer):
    """Leaky integrate-and-fire with soft reset by threshold subtraction"""

    kind = NeuronKind.LIF

    def __init__(self, in_features: int, out_features: int, beta_init: float = 0.9, **kwargs):
        super().__init__(in_features, out_features, **kwargs)
        if not 0 < beta_init < 1:
            raise ValueError(f"beta must lie in (0, 1), got {beta_init}")
        logit = math.log(beta_init / (1.0 - beta_init))
        self.beta_logit = nn.Parameter(torch.full((out_features,), logit, dtype=self.weight.dtype))

    @property
    def beta(self) -> torch.Tensor:
        """Membrane decay in (0, 1)"""
        return torch.sigmoid(self.beta_logit)

    def step(self, state: NeuronState, s_in: torch.Tensor) -> Tuple[NeuronState, torch.Tensor]:
        return lif_step(self, state, s_in)


class TcLifLayer(SpikingLayer):
    """Two-compartment LIF: coupled dendrite U_d and soma U_s"""

    kind = NeuronKind.TC_LIF

    def __init__(
        self,
        in_features: int,
        out_features: int,
        coupling_init: float = 0.2,
        learn_gamma: bool = True,
        **kwargs
    ):
        super().__init__(in_features, out_features, **kwargs)
        generator = kwargs.get("generator")
        dtype = self.weight.dtype
        self.beta_d = nn.Parameter(
            torch.empty(out_features, dtype=dtype).uniform_(-coupling_init, coupling_init, generator=generator)
        )
        self.beta_s = nn.Parameter(
            torch.empty(out_features, dtype=dtype).uniform_(-coupling_init, coupling_init, generator=generator)
        )
        gamma = torch.full((out_features,), self.v_th, dtype=dtype)
        if learn_gamma:
            self.gamma = nn.Parameter(gamma)
        else:
            self.register_buffer("gamma", gamma)

    def initial_state(self, batch_size: int, dtype: Optional[torch.dtype] = None) -> NeuronState:
        state = super().initial_state(batch_size, dtype)
        return state._replace(dendrite=torch.zeros_like(state.potential))

    def step(self, state: NeuronState, s_in: torch.Tensor) -> Tuple[NeuronState, torch.Tensor]:
        return tclif_step(self, state, s_in)


class IhcLifLayer(TcLifLayer):
    """
    TC-LIF with lateral feedback W_f into the dendrite and lateral inhibition
    W_LI >= 0 subtracted at the soma. Both start at zero, so a fresh layer
    behaves exactly like TC-LIF.
    """

    kind = NeuronKind.IHC_LIF

    def __init__(
        self,
        in_features: int,
        out_features: int,
        use_feedback: bool = True,
        use_inhibition: bool = True,
        **kwargs
    ):
        super().__init__(in_features, out_features, **kwargs)
        dtype = self.weight.dtype
        self.w_f = nn.Parameter(torch.zeros(out_features, out_features, dtype=dtype)) if use_feedback else None
        self.w_li = nn.Parameter(torch.zeros(out_features, out_features, dtype=dtype)) if use_inhibition else None

    def step(self, state: NeuronState, s_in: torch.Tensor) -> Tuple[NeuronState, torch.Tensor]:
        return ihclif_step(self, state, s_in)

    def trainable_masks(self) -> Dict[str, torch.Tensor]:
        masks = super().trainable_masks()
        off_diagonal = ~torch.eye(self.out_features, dtype=torch.bool)
        for name in ("w_f", "w_li"):
            if name in masks:
                masks[name] = off_diagonal.clone()
        return masks


def lif_step(
    layer: LifLayer,
    state: NeuronState,
    s_in: torch.Tensor
) -> Tuple[NeuronState, torch.Tensor]:
    """
    One LIF update.

    U[t] = beta * U[t-1] + I[t] - V_th * S[t-1];  S[t] = H(U[t] - V_th)
    """
    current = layer.synaptic_current(s_in, state.spikes)
    potential = layer.beta * state.potential + current - layer.v_th * state.spikes
    spikes = layer.surrogate(potential - layer.v_th)
    return NeuronState(potential=potential, spikes=spikes), spikes


def _two_compartment_update(
    layer: TcLifLayer,
    state: NeuronState,
    current: torch.Tensor,
    dendrite_feedback: Optional[torch.Tensor] = None,
    soma_inhibition: Optional[torch.Tensor] = None
) -> Tuple[NeuronState, torch.Tensor]:
    # both compartments read the previous step's values
    u_d_prev, u_s_prev, s_prev = state.dendrite, state.potential, state.spikes
    dendrite = u_d_prev + layer.beta_d * u_s_prev + current - layer.gamma * s_prev
    if dendrite_feedback is not None:
        dendrite = dendrite + dendrite_feedback
    soma = u_s_prev + layer.beta_s * u_d_prev - layer.v_th * s_prev
    if soma_inhibition is not None:
        soma = soma - soma_inhibition
    spikes = layer.surrogate(soma - layer.v_th)
    return NeuronState(potential=soma, spikes=spikes, dendrite=dendrite), spikes


def tclif_step(
    layer: TcLifLayer,
    state: NeuronState,
    s_in: torch.Tensor
) -> Tuple[NeuronState, torch.Tensor]:
    """
    One TC-LIF update.

    U_d[t] = U_d[t-1] + beta_d * U_s[t-1] + I[t] - gamma * S[t-1]
    U_s[t] = U_s[t-1] + beta_s * U_d[t-1] - V_th * S[t-1]
    S[t]   = H(U_s[t] - V_th)
    """
    current = layer.synaptic_current(s_in, state.spikes)
    return _two_compartment_update(layer, state, current)


def check_lateral_constraints(layer: IhcLifLayer) -> None:
    """Raise if W_f / W_LI have a nonzero diagonal or W_LI has a negative entry"""
    for name in ("w_f", "w_li"):
        weight = getattr(layer, name)
        if weight is not None and (torch.diagonal(weight) != 0).any():
            raise ValueError(f"{name} has a nonzero diagonal; call project_constraints")
    if layer.w_li is not None and (layer.w_li < 0).any():
        raise ValueError("w_li has a negative entry; call project_constraints")


def ihclif_step(
    layer: IhcLifLayer,
    state: NeuronState,
    s_in: torch.Tensor
) -> Tuple[NeuronState, torch.Tensor]:
    """
    One IHC-LIF update: TC-LIF plus I_f = ZeroDiag(W_f) S[t-1] added to the
    dendrite and I_LI = ZeroDiag(W_LI) S[t-1] subtracted from the soma.
    """
    check_lateral_constraints(layer)
    current = layer.synaptic_current(s_in, state.spikes)
    feedback = state.spikes @ zero_diag(layer.w_f).T if layer.w_f is not None else None
    inhibition = state.spikes @ zero_diag(layer.w_li).T if layer.w_li is not None else None
    return _two_compartment_update(layer, state, current, feedback, inhibition)


def project_constraints(layer: nn.Module) -> nn.Module:
    """
    Restore the lateral-weight constraints in place: zero diagonals on W_f and
    W_LI, W_LI clamped to >= 0. Layers without lateral weights pass through.

    Args:
        layer: Any spiking layer

    Returns:
        The same layer
    """
    with torch.no_grad():
        for name in ("w_f", "w_li"):
            weight = getattr(layer, name, None)
            if weight is not None:
                weight.fill_diagonal_(0.0)
        w_li = getattr(layer, "w_li", None)
        if w_li is not None:
            w_li.clamp_(min=0.0)
    return layer


def build_layer(
    kind: NeuronKind,
    in_features: int,
    out_features: int,
    beta_init: float = 0.9,
    coupling_init: float = 0.2,
    learn_gamma: bool = True,
    use_feedback: bool = False,
    use_inhibition: bool = False,
    **kwargs
) -> SpikingLayer:
    """
    Construct a spiking layer of the requested kind.

    Args:
        kind: Neuron model
        in_features: Input channels
        out_features: Neurons
        beta_init: LIF decay
        coupling_init: TC-LIF / IHC-LIF coupling range
        learn_gamma: Whether the dendritic reset strength is trainable
        use_feedback: IHC-LIF lateral feedback
        use_inhibition: IHC-LIF lateral inhibition
        **kwargs: Passed to SpikingLayer (v_th, surrogate, generator, dtype, ...)

    Returns:
        SpikingLayer
    """
    if kind is NeuronKind.LIF:
        layer = LifLayer(in_features, out_features, beta_init=beta_init, **kwargs)
    elif kind is NeuronKind.TC_LIF:
        layer = TcLifLayer(in_features, out_features, coupling_init=coupling_init, learn_gamma=learn_gamma, **kwargs)
    elif kind is NeuronKind.IHC_LIF:
        layer = IhcLifLayer(
            in_features,
            out_features,
            use_feedback=use_feedback,
            use_inhibition=use_inhibition,
            coupling_init=coupling_init,
            learn_gamma=learn_gamma,
            **kwargs
        )
    else:
        raise ValueError(f"unknown neuron kind {kind}")
    logger.debug(f"Built {kind.value} layer {in_features}->{out_features}")
    return layer
