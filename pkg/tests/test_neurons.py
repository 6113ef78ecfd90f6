"""
Tests for the spike nonlinearity and the LIF, TC-LIF and IHC-LIF layers.
"""

import numpy as np
import pytest
import torch

from components.neurons import (
    IhcLifLayer,
    LifLayer,
    NeuronState,
    TcLifLayer,
    build_layer,
    check_lateral_constraints,
    ihclif_step,
    lif_step,
    project_constraints,
    tclif_step,
    zero_diag
)
from components.surrogate import Surrogate, heaviside, surrogate_grad, surrogate_primitive
from models import NeuronKind, SurrogateKind, SurrogateSpec


def _binary(rng, *shape):
    return torch.from_numpy((rng.random(shape) < 0.5).astype(np.float64))


def _randomize(layer, rng, scale=0.5):
    """Overwrite every parameter with random values"""
    with torch.no_grad():
        for p in layer.parameters():
            p.copy_(torch.from_numpy(rng.uniform(-scale, scale, size=tuple(p.shape))))


@pytest.mark.unit
class TestSurrogate:
    """Test the Heaviside and its pseudo-derivatives"""

    def test_heaviside_fires_at_threshold(self):
        x = torch.tensor([-1e-12, 0.0, 0.3], dtype=torch.float64)
        assert heaviside(x).tolist() == [0.0, 1.0, 1.0]

    def test_rectangular(self):
        spec = SurrogateSpec(kind=SurrogateKind.RECTANGULAR, width=0.5)
        x = torch.tensor([-0.6, -0.5, 0.0, 0.5, 0.7], dtype=torch.float64)
        assert surrogate_grad(spec, x).tolist() == [0.0, 1.0, 1.0, 1.0, 0.0]

    def test_sigmoid_derivative(self):
        spec = SurrogateSpec(kind=SurrogateKind.SIGMOID, steepness=4.0)
        x = torch.tensor([0.0], dtype=torch.float64)
        assert surrogate_grad(spec, x).item() == pytest.approx(1.0)

    def test_backward_uses_surrogate(self):
        spec = SurrogateSpec(kind=SurrogateKind.SIGMOID, steepness=3.0)
        x = torch.linspace(-2, 2, 9, dtype=torch.float64, requires_grad=True)
        Surrogate(spec)(x).sum().backward()
        assert torch.allclose(x.grad, surrogate_grad(spec, x.detach()))

    @pytest.mark.parametrize("kind", [SurrogateKind.RECTANGULAR, SurrogateKind.SIGMOID])
    def test_relaxed_forward_matches_backward(self, kind):
        """The primitive's derivative is the surrogate away from the window edges"""
        spec = SurrogateSpec(kind=kind, width=0.5, steepness=4.0)
        x = torch.tensor([-0.9, -0.3, 0.1, 0.4, 1.2], dtype=torch.float64, requires_grad=True)
        surrogate = Surrogate(spec, spiking=False)
        surrogate(x).sum().backward()
        assert torch.allclose(x.grad, surrogate_grad(spec, x.detach()))
        assert torch.allclose(surrogate(x.detach()), surrogate_primitive(spec, x.detach()))


@pytest.mark.unit
class TestZeroDiag:
    def test_diagonal_cleared(self):
        w = torch.arange(9, dtype=torch.float64).reshape(3, 3) + 1
        out = zero_diag(w)
        assert torch.equal(torch.diagonal(out), torch.zeros(3, dtype=torch.float64))
        off = ~torch.eye(3, dtype=torch.bool)
        assert torch.equal(out[off], w[off])

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            zero_diag(torch.zeros(2, 3))


@pytest.mark.unit
class TestLif:
    """Test the LIF update against a scalar loop"""

    def test_matches_scalar_loop(self):
        """100 random 10-step sequences agree to 1e-12"""
        rng = np.random.default_rng(0)
        for _ in range(100):
            layer = LifLayer(3, 2, beta_init=float(rng.uniform(0.5, 0.95)))
            _randomize(layer, rng, scale=1.0)
            inputs = _binary(rng, 10, 3)
            beta = layer.beta.detach().numpy()
            w = layer.weight.detach().numpy()
            b = layer.bias.detach().numpy()

            state = layer.initial_state(1)
            u_ref = [0.0, 0.0]
            s_ref = [0.0, 0.0]
            for t in range(10):
                state, spikes = lif_step(layer, state, inputs[t:t + 1])
                for j in range(2):
                    current = sum(inputs[t, i].item() * w[i, j] for i in range(3)) + b[j]
                    u_ref[j] = beta[j] * u_ref[j] + current - 1.0 * s_ref[j]
                    s_ref[j] = 1.0 if u_ref[j] >= 1.0 else 0.0
                np.testing.assert_allclose(state.potential[0].detach().numpy(), u_ref, rtol=0, atol=1e-12)
                assert spikes[0].tolist() == s_ref

    def test_silence_never_fires(self):
        layer = LifLayer(4, 3)
        spikes, _ = layer(torch.zeros(1, 50, 4, dtype=torch.float64))
        assert spikes.sum().item() == 0.0

    def test_non_binary_input_rejected(self):
        layer = LifLayer(2, 2)
        with pytest.raises(ValueError, match="binary"):
            layer(torch.full((1, 3, 2), 0.5, dtype=torch.float64))

    def test_input_width_checked(self):
        layer = LifLayer(2, 2)
        with pytest.raises(ValueError):
            layer(torch.zeros(1, 3, 5, dtype=torch.float64))

    def test_beta_range(self):
        with pytest.raises(ValueError):
            LifLayer(2, 2, beta_init=1.0)

    def test_recurrent_term(self):
        layer = LifLayer(2, 2, recurrent=True)
        assert layer.recurrent_weight.shape == (2, 2)
        with torch.no_grad():
            layer.weight.zero_()
            layer.recurrent_weight.fill_(2.0)
        state = NeuronState(
            potential=torch.zeros(1, 2, dtype=torch.float64),
            spikes=torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        )
        new_state, _ = lif_step(layer, state, torch.zeros(1, 2, dtype=torch.float64))
        # U = 0 + S_prev @ W_rec^T - V_th * S_prev
        assert new_state.potential.tolist() == [[1.0, 2.0]]


@pytest.mark.unit
class TestTcLif:
    """Test the two-compartment update"""

    def test_matches_scalar_loop(self):
        """100 random 10-step sequences agree to 1e-12"""
        rng = np.random.default_rng(1)
        for _ in range(100):
            layer = TcLifLayer(3, 2)
            _randomize(layer, rng, scale=0.6)
            inputs = _binary(rng, 10, 3)
            w = layer.weight.detach().numpy()
            b = layer.bias.detach().numpy()
            bd = layer.beta_d.detach().numpy()
            bs = layer.beta_s.detach().numpy()
            gamma = layer.gamma.detach().numpy()

            state = layer.initial_state(1)
            ud, us, s = [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]
            for t in range(10):
                state, spikes = tclif_step(layer, state, inputs[t:t + 1])
                for j in range(2):
                    current = sum(inputs[t, i].item() * w[i, j] for i in range(3)) + b[j]
                    new_ud = ud[j] + bd[j] * us[j] + current - gamma[j] * s[j]
                    new_us = us[j] + bs[j] * ud[j] - 1.0 * s[j]
                    ud[j], us[j] = new_ud, new_us
                    s[j] = 1.0 if us[j] >= 1.0 else 0.0
                np.testing.assert_allclose(state.dendrite[0].detach().numpy(), ud, rtol=0, atol=1e-12)
                np.testing.assert_allclose(state.potential[0].detach().numpy(), us, rtol=0, atol=1e-12)
                assert spikes[0].tolist() == s

    def test_gamma_buffer_when_fixed(self):
        layer = TcLifLayer(2, 2, learn_gamma=False)
        assert "gamma" not in dict(layer.named_parameters())
        assert torch.equal(layer.gamma, torch.ones(2, dtype=torch.float64))

    def test_potentials_stay_finite(self):
        """Coupling drawn from U(-0.2, 0.2) with soft resets stays finite over 1000 steps"""
        layer = TcLifLayer(4, 4, generator=torch.Generator().manual_seed(3))
        rng = np.random.default_rng(3)
        inputs = _binary(rng, 1, 1000, 4)
        _, state = layer(inputs)
        assert bool(torch.isfinite(state.potential).all())
        assert bool(torch.isfinite(state.dendrite).all())


@pytest.mark.unit
class TestIhcLif:
    """Test lateral feedback and inhibition"""

    def test_reduces_to_tclif_with_zero_lateral_weights(self):
        """1000 random (state, input, parameter) triples are bitwise equal"""
        rng = np.random.default_rng(2)
        layer = IhcLifLayer(3, 4)
        for _ in range(1000):
            with torch.no_grad():
                for name in ("weight", "bias", "beta_d", "beta_s", "gamma"):
                    p = getattr(layer, name)
                    p.copy_(torch.from_numpy(rng.uniform(-1.0, 1.0, size=tuple(p.shape))))
                layer.w_f.zero_()
                layer.w_li.zero_()
            state = NeuronState(
                potential=torch.from_numpy(rng.normal(0, 1, size=(2, 4))),
                spikes=_binary(rng, 2, 4),
                dendrite=torch.from_numpy(rng.normal(0, 1, size=(2, 4)))
            )
            s_in = _binary(rng, 2, 3)
            ihc_state, ihc_spikes = ihclif_step(layer, state, s_in)
            tc_state, tc_spikes = tclif_step(layer, state, s_in)
            assert torch.equal(ihc_spikes, tc_spikes)
            assert torch.equal(ihc_state.potential, tc_state.potential)
            assert torch.equal(ihc_state.dendrite, tc_state.dendrite)

    def test_fresh_layer_matches_tclif(self):
        """Lateral weights start at zero"""
        ihc = IhcLifLayer(3, 3, generator=torch.Generator().manual_seed(9))
        tc = TcLifLayer(3, 3, generator=torch.Generator().manual_seed(9))
        inputs = _binary(np.random.default_rng(4), 2, 20, 3)
        ihc_spikes, _ = ihc(inputs)
        tc_spikes, _ = tc(inputs)
        assert torch.equal(ihc_spikes, tc_spikes)

    def test_lateral_terms_hand_example(self):
        """Neuron 0 spiked: neuron 1 gets W_f[1,0] at the dendrite and loses W_LI[1,0] at the soma"""
        layer = IhcLifLayer(2, 2)
        with torch.no_grad():
            layer.weight.zero_()
            layer.beta_d.zero_()
            layer.beta_s.zero_()
            layer.w_f.copy_(torch.tensor([[0.0, 0.7], [0.3, 0.0]], dtype=torch.float64))
            layer.w_li.copy_(torch.tensor([[0.0, 0.2], [0.4, 0.0]], dtype=torch.float64))
        state = NeuronState(
            potential=torch.zeros(1, 2, dtype=torch.float64),
            spikes=torch.tensor([[1.0, 0.0]], dtype=torch.float64),
            dendrite=torch.zeros(1, 2, dtype=torch.float64)
        )
        new_state, _ = ihclif_step(layer, state, torch.zeros(1, 2, dtype=torch.float64))
        # dendrite: -gamma * S_prev + I_f ; soma: -V_th * S_prev - I_LI
        assert new_state.dendrite.tolist() == pytest.approx([[-1.0, 0.3]])
        assert new_state.potential.tolist() == pytest.approx([[-1.0, -0.4]])

    def test_more_inhibition_never_raises_soma(self):
        """Raising W_LI[i, j] lowers U_s[i] where neuron j spiked and leaves every other soma alone"""
        rng = np.random.default_rng(5)
        layer = IhcLifLayer(3, 4)
        for _ in range(50):
            _randomize(layer, rng)
            project_constraints(layer)
            state = NeuronState(
                potential=torch.from_numpy(rng.normal(0, 1, size=(3, 4))),
                spikes=_binary(rng, 3, 4),
                dendrite=torch.from_numpy(rng.normal(0, 1, size=(3, 4)))
            )
            s_in = _binary(rng, 3, 3)
            base, _ = ihclif_step(layer, state, s_in)
            for i in range(4):
                for j in range(4):
                    if i == j:
                        continue
                    original = layer.w_li[i, j].item()
                    with torch.no_grad():
                        layer.w_li[i, j] = original + 0.3
                    raised, _ = ihclif_step(layer, state, s_in)
                    with torch.no_grad():
                        layer.w_li[i, j] = original
                    assert bool((raised.potential <= base.potential).all())
                    fired = state.spikes[:, j] == 1
                    assert bool((raised.potential[fired, i] < base.potential[fired, i]).all())
                    others = [k for k in range(4) if k != i]
                    assert torch.equal(raised.potential[:, others], base.potential[:, others])

    def test_nonzero_diagonal_rejected(self):
        layer = IhcLifLayer(2, 2)
        with torch.no_grad():
            layer.w_f[0, 0] = 0.5
        with pytest.raises(ValueError, match="diagonal"):
            check_lateral_constraints(layer)

    def test_negative_inhibition_rejected(self):
        layer = IhcLifLayer(2, 2)
        with torch.no_grad():
            layer.w_li[0, 1] = -0.5
        with pytest.raises(ValueError, match="negative"):
            ihclif_step(layer, layer.initial_state(1), torch.zeros(1, 2, dtype=torch.float64))

    def test_project_constraints(self):
        layer = IhcLifLayer(3, 3)
        with torch.no_grad():
            layer.w_f.fill_(-0.5)
            layer.w_li.fill_(-0.5)
            layer.w_li[0, 1] = 0.25
        project_constraints(layer)
        assert torch.equal(torch.diagonal(layer.w_f), torch.zeros(3, dtype=torch.float64))
        assert layer.w_f[0, 1].item() == -0.5
        assert layer.w_li.min().item() == 0.0
        assert layer.w_li[0, 1].item() == 0.25
        check_lateral_constraints(layer)

    def test_trainable_masks_exclude_diagonals(self):
        masks = IhcLifLayer(3, 3).trainable_masks()
        assert not bool(torch.diagonal(masks["w_f"]).any())
        assert not bool(torch.diagonal(masks["w_li"]).any())
        assert bool(masks["weight"].all())

    def test_disabled_terms(self):
        layer = IhcLifLayer(2, 2, use_feedback=False, use_inhibition=True)
        assert layer.w_f is None and layer.w_li is not None

    def test_constraints_hold_after_training(self):
        """500 Adam steps with projection keep diagonals at zero and W_LI >= 0 exactly"""
        torch.manual_seed(0)
        layer = IhcLifLayer(4, 4, binary_input=False, generator=torch.Generator().manual_seed(0))
        optimizer = torch.optim.Adam(layer.parameters(), lr=0.05)
        generator = torch.Generator().manual_seed(1)
        inputs = torch.rand(8, 12, 4, generator=generator, dtype=torch.float64) * 2
        target = torch.rand(8, 4, generator=generator, dtype=torch.float64)
        for _ in range(500):
            spikes, _ = layer(inputs)
            loss = ((spikes.mean(dim=1) - target) ** 2).sum()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            project_constraints(layer)
        assert torch.equal(torch.diagonal(layer.w_f), torch.zeros(4, dtype=torch.float64))
        assert torch.equal(torch.diagonal(layer.w_li), torch.zeros(4, dtype=torch.float64))
        assert layer.w_li.min().item() >= 0.0


@pytest.mark.unit
class TestBuildLayer:
    @pytest.mark.parametrize(
        "kind,cls",
        [(NeuronKind.LIF, LifLayer), (NeuronKind.TC_LIF, TcLifLayer), (NeuronKind.IHC_LIF, IhcLifLayer)]
    )
    def test_kinds(self, kind, cls):
        layer = build_layer(kind, 3, 2)
        assert type(layer) is cls
        assert layer.kind is kind

    def test_identity_init(self):
        layer = build_layer(NeuronKind.LIF, 3, 3, identity_init=True, generator=torch.Generator().manual_seed(0))
        off = ~torch.eye(3, dtype=torch.bool)
        assert bool((torch.diagonal(layer.weight) > 1 - 1 / np.sqrt(3)).all())
        assert bool((layer.weight[off].abs() <= 1 / np.sqrt(3)).all())

    def test_identity_init_needs_square(self):
        with pytest.raises(ValueError):
            build_layer(NeuronKind.LIF, 3, 2, identity_init=True)
