import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from plugvae.networks import PluginNet, count_parameters, init_parameters_
from plugvae.plugin import (
    PluginVAE,
    beta_at,
    kl_to_standard_normal,
    loss_single,
    loss_with_negatives,
    train_plugin,
)
from plugvae.corpus import ConditionDataset
from plugvae.pretrain import TrainingDivergedError
from plugvae.seeding import torch_generator

D_G, D_C = 8, 3


def tiny_plugin_net(seed=0):
    net = PluginNet(D_G, D_C)
    init_parameters_(net, torch_generator(seed, "p"))
    return net


def batch(seed=0, rows=6):
    gen = torch_generator(seed, "v")
    return torch.randn(rows, D_G, generator=gen), torch.randn(rows, D_C, generator=gen)


class TestKL:
    def test_prior_matches_posterior(self):
        kl = kl_to_standard_normal(torch.zeros(1, 4), torch.zeros(1, 4))
        assert kl.item() == pytest.approx(0.0, abs=1e-9)

    def test_unit_mean(self):
        kl = kl_to_standard_normal(torch.tensor([[1.0]]), torch.tensor([[0.0]]))
        assert kl.item() == pytest.approx(0.5, abs=1e-7)

    def test_log_two_variance(self):
        kl = kl_to_standard_normal(torch.tensor([[0.0]]), torch.tensor([[math.log(2.0)]]))
        assert kl.item() == pytest.approx(0.5 * (2.0 - 1.0 - math.log(2.0)), abs=1e-7)
        assert kl.item() == pytest.approx(0.1534, abs=1e-4)

    @given(
        st.lists(st.floats(-5, 5), min_size=1, max_size=6),
        st.lists(st.floats(-5, 5), min_size=1, max_size=6),
    )
    @settings(max_examples=100, deadline=None)
    def test_nonnegative(self, means, logvars):
        d = min(len(means), len(logvars))
        kl = kl_to_standard_normal(
            torch.tensor([means[:d]], dtype=torch.float64),
            torch.tensor([logvars[:d]], dtype=torch.float64),
        )
        assert kl.item() >= -1e-12


class TestLossSingle:
    def test_zero_net_zero_input_beta_zero(self):
        net = PluginNet(D_G, D_C)
        with torch.no_grad():
            for p in net.parameters():
                p.zero_()
        v = torch.zeros(4, D_G)
        noise = torch.zeros(4, D_C)
        assert loss_single(net, v, 0.0, noise).item() == pytest.approx(0.0, abs=1e-9)

    def test_decomposition(self):
        net = tiny_plugin_net()
        v, noise = batch()
        mean, logvar = net.encode(v)
        z = mean + torch.exp(0.5 * logvar) * noise
        recon = (v - net.decode(z)).pow(2).sum(dim=-1).mean()
        kl = kl_to_standard_normal(mean, logvar).mean()
        for beta in (0.0, 2.0, 5.0):
            expected = (recon + (kl - beta).abs()).item()
            assert loss_single(net, v, beta, noise).item() == pytest.approx(expected, rel=1e-6)

    def test_beta_zero_reduces_to_plain_kl_penalty(self):
        net = tiny_plugin_net()
        v, noise = batch()
        mean, logvar = net.encode(v)
        kl = kl_to_standard_normal(mean, logvar).mean().item()
        z = mean + torch.exp(0.5 * logvar) * noise
        recon = (v - net.decode(z)).pow(2).sum(dim=-1).mean().item()
        assert loss_single(net, v, 0.0, noise).item() == pytest.approx(recon + kl, rel=1e-6)

    def test_negative_beta_rejected(self):
        net = tiny_plugin_net()
        v, noise = batch()
        with pytest.raises(ValueError):
            loss_single(net, v, -1.0, noise)


class TestLossWithNegatives:
    def test_gamma_zero_equals_single(self):
        net = tiny_plugin_net()
        v, noise = batch()
        v2, noise2 = batch(seed=1)
        lhs = loss_with_negatives(net, v, v2, 2.0, 0.0, noise, noise2).item()
        assert lhs == pytest.approx(loss_single(net, v, 2.0, noise).item(), rel=1e-7)

    def test_same_batch_identity(self):
        net = tiny_plugin_net()
        v, noise = batch()
        for gamma in (0.1, 0.5, 0.9):
            lhs = loss_with_negatives(net, v, v, 3.0, gamma, noise, noise).item()
            rhs = (1.0 - gamma) * loss_single(net, v, 3.0, noise).item()
            assert lhs == pytest.approx(rhs, abs=1e-6)

    def test_sentiment_gamma_default(self):
        assert PluginVAE().gamma == 0.1

    def test_negative_gamma_rejected(self):
        net = tiny_plugin_net()
        v, noise = batch()
        with pytest.raises(ValueError):
            loss_with_negatives(net, v, v, 1.0, -0.5, noise, noise)

    def test_ceiling_bounds_negative_term(self):
        net = tiny_plugin_net()
        v, noise = batch()
        v2, noise2 = batch(seed=1)
        pos = loss_single(net, v, 1.0, noise).item()
        capped = loss_with_negatives(
            net, v, v2, 1.0, 1e6, noise, noise2, negative_ceiling=2.0
        ).item()
        assert capped >= pos - 2.0 * pos - 1e-5


class TestBetaSchedule:
    def test_paper_points(self):
        assert beta_at(0) == 0.0
        assert beta_at(5000) == pytest.approx(2.5)
        assert beta_at(10000) == pytest.approx(5.0)
        assert beta_at(15000) == pytest.approx(5.0)

    def test_zero_warmup_returns_max(self):
        assert beta_at(0, beta_max=5.0, warmup_iters=0) == 5.0

    def test_negative_iteration_rejected(self):
        with pytest.raises(ValueError):
            beta_at(-1)

    @given(st.integers(0, 30000), st.integers(0, 30000))
    @settings(max_examples=100, deadline=None)
    def test_monotone_and_clamped(self, i, j):
        lo, hi = sorted((i, j))
        assert beta_at(lo) <= beta_at(hi) <= 5.0


def fitted_plugin(seed=0, with_negatives=True, **kw):
    rng = np.random.default_rng(seed)
    pos = rng.normal(0.0, 1.0, (40, D_G)).astype(np.float32)
    neg = rng.normal(4.0, 1.0, (40, D_G)).astype(np.float32) if with_negatives else None
    params = dict(
        d_c=D_C, gamma=0.05, beta_max=2.0, beta_warmup_iters=50,
        total_iters=100, batch_size=16, seed=seed,
    )
    params.update(kw)
    plugin = PluginVAE(**params)
    plugin.fit(pos, neg)
    return plugin, pos, neg


class TestPluginVAE:
    def test_fit_deterministic(self):
        p1, _, _ = fitted_plugin()
        p2, _, _ = fitted_plugin()
        for (n1, a1), (n2, a2) in zip(p1.state_arrays(), p2.state_arrays()):
            assert n1 == n2
            np.testing.assert_array_equal(a1, a2)

    def test_single_condition_mode(self):
        plugin, _, _ = fitted_plugin(with_negatives=False)
        assert len(plugin.loss_trace_) == 100

    def test_default_iteration_budget(self):
        p = PluginVAE()
        assert p.total_iters == 20000 and p.lr == 3e-4 and p.adam_beta1 == 0.5

    def test_transform_shapes_at_paper_dims(self):
        plugin = PluginVAE(d_c=20, seed=0).init_net(128)
        V = np.zeros((5, 128), dtype=np.float32)
        assert plugin.transform(V).shape == (5, 20)
        assert plugin.inverse_transform(np.zeros((5, 20), np.float32)).shape == (5, 128)

    def test_zero_weights_give_zero_outputs(self):
        plugin = PluginVAE(d_c=20, seed=0).init_net(128)
        with torch.no_grad():
            for p in plugin.net_.parameters():
                p.zero_()
        mean, logvar = plugin.encode_posterior(np.ones((3, 128), np.float32))
        assert not mean.any() and not logvar.any()
        assert not plugin.inverse_transform(np.ones((3, 20), np.float32)).any()

    def test_identical_rows_identical_posteriors(self):
        plugin, pos, _ = fitted_plugin()
        v = np.repeat(pos[:1], 2, axis=0)
        mean, logvar = plugin.encode_posterior(v)
        np.testing.assert_array_equal(mean[0], mean[1])
        np.testing.assert_array_equal(logvar[0], logvar[1])

    def test_dimension_mismatch(self):
        plugin, _, _ = fitted_plugin()
        with pytest.raises(ValueError):
            plugin.transform(np.zeros((2, D_G + 1), np.float32))
        with pytest.raises(ValueError):
            plugin.inverse_transform(np.zeros((2, D_C + 2), np.float32))

    def test_separation_property(self):
        plugin, _, _ = fitted_plugin(total_iters=400)
        rng = np.random.default_rng(99)
        held_pos = rng.normal(0.0, 1.0, (30, D_G)).astype(np.float32)
        held_neg = rng.normal(4.0, 1.0, (30, D_G)).astype(np.float32)
        assert plugin.reconstruction_error(held_pos).mean() < plugin.reconstruction_error(held_neg).mean()

    def test_divergence_raises(self):
        pos = np.full((8, D_G), np.nan, dtype=np.float32)
        with pytest.raises((TrainingDivergedError, ValueError)):
            PluginVAE(d_c=D_C, total_iters=5, beta_warmup_iters=2, batch_size=4).fit(pos)

    def test_d_c_must_be_smaller_than_d_g(self):
        with pytest.raises(ValueError, match="d_c"):
            PluginVAE(d_c=8).fit(np.zeros((4, 8), np.float32))

    def test_warmup_cannot_exceed_total(self):
        with pytest.raises(ValueError, match="beta_warmup_iters"):
            PluginVAE(d_c=3, beta_warmup_iters=100, total_iters=50).fit(
                np.zeros((4, D_G), np.float32)
            )

    def test_parameter_count_at_defaults(self):
        count = count_parameters(PluginNet(128, 20))
        assert 20_000 <= count <= 26_000

    def test_sklearn_clone_compatible(self):
        p = PluginVAE(d_c=5, gamma=0.003)
        assert clone(p).get_params() == p.get_params()

    def test_train_plugin_helper(self):
        rng = np.random.default_rng(3)
        ds = ConditionDataset("short", rng.normal(0, 1, (20, D_G)).astype(np.float32))
        plugin = train_plugin(
            ds, pretrain_digest="deadbeef", d_c=D_C, total_iters=20,
            beta_warmup_iters=10, batch_size=8,
        )
        assert plugin.condition_ == "short"
        assert plugin.pretrain_digest_ == "deadbeef"
