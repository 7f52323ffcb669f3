import math

import numpy as np
import pytest
import torch
from sklearn.base import clone

from plugvae.corpus import EOS_ID
from plugvae.networks import (
    GlobalAutoencoderNet,
    LatentCritic,
    count_parameters,
    init_parameters_,
    pad_batch,
)
from plugvae.pretrain import (
    TextAutoencoder,
    TrainingDivergedError,
    adversarial_loss,
    discriminator_loss,
    pretrain_step,
    reconstruction_loss,
    reparameterize,
)
from plugvae.seeding import torch_generator

VOCAB = 20
D_G = 8


def tiny_net(seed=0):
    net = GlobalAutoencoderNet(
        VOCAB, d_g=D_G, emb_dim=16, gru_hidden=12, dec_layers=2, dec_heads=2, dec_ff=32
    )
    init_parameters_(net, torch_generator(seed, "net"))
    return net


def tiny_critic(seed=0):
    critic = LatentCritic(D_G)
    init_parameters_(critic, torch_generator(seed, "critic"))
    return critic


BATCH = [[1, 5, 6, 7, 2], [1, 8, 9, 2], [1, 10, 2]]


class TestEncode:
    def test_posterior_shape(self):
        mean, logvar = tiny_net().encode(BATCH)
        assert mean.shape == (3, D_G) and logvar.shape == (3, D_G)

    def test_identical_inputs_identical_rows(self):
        mean, logvar = tiny_net().encode([[1, 5, 2], [1, 5, 2]])
        assert torch.equal(mean[0], mean[1]) and torch.equal(logvar[0], logvar[1])

    def test_logvar_finite(self):
        _, logvar = tiny_net().encode(BATCH)
        assert torch.isfinite(logvar).all()

    def test_empty_batch(self):
        with pytest.raises(ValueError, match="empty batch"):
            tiny_net().encode([])


class TestReparameterize:
    def test_zero_noise_identity(self):
        mean = torch.tensor([[0.3, -1.2]])
        logvar = torch.tensor([[0.5, 2.0]])
        assert torch.equal(reparameterize(mean, logvar, torch.zeros_like(mean)), mean)

    def test_standard_normal_case(self):
        noise = torch.tensor([[1.7, -0.4]])
        out = reparameterize(torch.zeros(1, 2), torch.zeros(1, 2), noise)
        assert torch.equal(out, noise)

    def test_closed_form(self):
        out = reparameterize(
            torch.tensor([[1.0]]),
            torch.tensor([[2.0 * math.log(2.0)]]),
            torch.tensor([[1.0]]),
        )
        assert torch.allclose(out, torch.tensor([[3.0]]), atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            reparameterize(torch.zeros(1, 3), torch.zeros(1, 3), torch.zeros(1, 2))


class TestDecodeLogits:
    def test_shape(self):
        net = tiny_net()
        full = pad_batch(BATCH)
        z = torch.randn(3, D_G, generator=torch_generator(0, "z"))
        logits = net.decode_logits(z, full[:, :-1])
        assert logits.shape == (3, full.shape[1] - 1, VOCAB)

    def test_causal_masking(self):
        net = tiny_net()
        teacher = torch.tensor([[1, 5, 6, 7, 8]])
        z = torch.randn(1, D_G, generator=torch_generator(1, "z"))
        base = net.decode_logits(z, teacher)
        for t in range(1, teacher.shape[1]):
            perturbed = teacher.clone()
            perturbed[0, t] = 11
            out = net.decode_logits(z, perturbed)
            assert torch.allclose(out[:, :t], base[:, :t], atol=1e-6)
            assert not torch.allclose(out[:, t:], base[:, t:], atol=1e-6)

    def test_latent_changes_logits(self):
        net = tiny_net()
        teacher = pad_batch(BATCH)[:, :-1]
        gen = torch_generator(2, "z")
        z1 = torch.randn(3, D_G, generator=gen)
        z2 = torch.randn(3, D_G, generator=gen)
        assert not torch.allclose(net.decode_logits(z1, teacher), net.decode_logits(z2, teacher))

    def test_batch_mismatch(self):
        net = tiny_net()
        with pytest.raises(ValueError, match="batch mismatch"):
            net.decode_logits(torch.zeros(2, D_G), pad_batch(BATCH)[:, :-1])


class TestReconstructionLoss:
    def test_confident_logits_reach_zero(self):
        targets = torch.tensor([[5, 6, 2]])
        logits = torch.zeros(1, 3, VOCAB)
        for t in range(3):
            logits[0, t, targets[0, t]] = 1e4
        assert reconstruction_loss(logits, targets).item() == pytest.approx(0.0, abs=1e-6)

    def test_uniform_logits_closed_form(self):
        targets = torch.tensor([[5, 6, 7, 2]])
        logits = torch.full((1, 4, VOCAB), 0.37)
        expected = 4 * math.log(VOCAB)
        assert reconstruction_loss(logits, targets).item() == pytest.approx(expected, rel=1e-6)

    def test_pad_positions_ignored(self):
        targets = torch.tensor([[5, 2, 0, 0]])
        logits = torch.randn(1, 4, VOCAB, generator=torch_generator(3, "l"))
        base = reconstruction_loss(logits, targets).item()
        logits[0, 2:, :] = 123.0
        assert reconstruction_loss(logits, targets).item() == pytest.approx(base, rel=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            reconstruction_loss(torch.zeros(1, 3, VOCAB), torch.zeros(1, 4, dtype=torch.long))


class TestCritic:
    def test_zero_weights_score_zero(self):
        critic = LatentCritic(D_G)
        with torch.no_grad():
            for p in critic.parameters():
                p.zero_()
        scores = critic(torch.randn(5, D_G, generator=torch_generator(4, "z")))
        assert torch.equal(scores, torch.zeros(5))

    def test_scores_per_sample(self):
        assert tiny_critic()(torch.randn(7, D_G, generator=torch_generator(5, "z"))).shape == (7,)

    def test_scaling_changes_score(self):
        critic = tiny_critic()
        z = torch.randn(4, D_G, generator=torch_generator(6, "z"))
        assert not torch.allclose(critic(2 * z), critic(z))

    def test_final_layer_has_no_bias(self):
        names = [n for n, _ in tiny_critic().named_parameters()]
        assert "net.4.weight" in names and "net.4.bias" not in names

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            tiny_critic()(torch.zeros(2, D_G + 1))


class TestDiscriminatorLoss:
    def test_constant_critic_gives_zero(self):
        critic = LatentCritic(D_G)
        with torch.no_grad():
            for p in critic.parameters():
                p.zero_()
        gen = torch_generator(7, "z")
        loss = discriminator_loss(
            critic, torch.randn(6, D_G, generator=gen), torch.randn(6, D_G, generator=gen)
        )
        assert loss.item() == pytest.approx(0.0, abs=1e-8)

    def test_penalty_nonnegative(self):
        critic = tiny_critic()
        z = torch.randn(6, D_G, generator=torch_generator(8, "z"))
        # identical batches cancel the score difference, leaving k * penalty
        loss = discriminator_loss(critic, z, z.clone())
        assert loss.item() >= 0.0

    def test_batch_mismatch(self):
        with pytest.raises(ValueError, match="batch mismatch"):
            discriminator_loss(tiny_critic(), torch.zeros(3, D_G), torch.zeros(4, D_G))

    def test_wdiv_defaults_from_config(self):
        ae = TextAutoencoder()
        assert ae.wdiv_k == 2.0 and ae.wdiv_p == 6.0


def run_step(lambda_coeff, seed=0, net=None, critic=None):
    net = net or tiny_net(seed)
    critic = critic or tiny_critic(seed)
    opt_ae = torch.optim.Adam(net.parameters(), lr=5e-4, betas=(0.0, 0.999))
    opt_c = torch.optim.Adam(critic.parameters(), lr=5e-4, betas=(0.0, 0.999))
    losses = pretrain_step(
        net, critic, opt_ae, opt_c, BATCH, lambda_coeff, 2.0, 6.0, torch_generator(seed, "noise")
    )
    return net, critic, losses


class TestPretrainStep:
    def test_bit_identical_across_runs(self):
        _, _, first = run_step(20.0)
        _, _, second = run_step(20.0)
        assert first == second

    def test_lambda_zero_matches_reconstruction_only_update(self):
        net_a, _, _ = run_step(0.0)

        # manual reconstruction-only update, same init, same first noise draw
        net_b = tiny_net(0)
        opt = torch.optim.Adam(net_b.parameters(), lr=5e-4, betas=(0.0, 0.999))
        gen = torch_generator(0, "noise")
        full = pad_batch(BATCH)
        mean, logvar = net_b.encode(BATCH)
        z = reparameterize(mean, logvar, torch.randn(mean.shape, generator=gen))
        loss = reconstruction_loss(net_b.decode_logits(z, full[:, :-1]), full[:, 1:])
        opt.zero_grad()
        loss.backward()
        opt.step()

        for p_a, p_b in zip(net_a.parameters(), net_b.parameters()):
            assert torch.equal(p_a, p_b)

    def test_lambda_default_matches_yelp_setting(self):
        assert TextAutoencoder().lambda_coeff == 20.0

    def test_divergence_raises(self):
        net = tiny_net()
        with torch.no_grad():
            net.embedding.weight.fill_(float("nan"))
        critic = tiny_critic()
        opt_ae = torch.optim.Adam(net.parameters())
        opt_c = torch.optim.Adam(critic.parameters())
        with pytest.raises(TrainingDivergedError, match="training diverged"):
            pretrain_step(net, critic, opt_ae, opt_c, BATCH, 20.0, 2.0, 6.0, torch_generator(0, "n"))

    def test_weight_tying_survives_step(self):
        net, _, _ = run_step(20.0)
        assert net.output_projection_weight.data_ptr() == net.embedding.weight.data_ptr()


class TestGreedyDecode:
    def test_respects_max_len(self):
        net = tiny_net()
        z = torch.randn(4, D_G, generator=torch_generator(9, "z"))
        for row in net.greedy_decode(z, max_len=6):
            assert len(row) <= 6

    def test_deterministic(self):
        net = tiny_net()
        z = torch.randn(4, D_G, generator=torch_generator(10, "z"))
        assert net.greedy_decode(z) == net.greedy_decode(z.clone())

    def test_eos_first_gives_empty_content(self):
        net = tiny_net()
        with torch.no_grad():
            for p in net.parameters():
                p.zero_()
            net.blocks[-1].norm2.bias.fill_(1.0)
            net.embedding.weight[EOS_ID].fill_(1.0)
        out = net.greedy_decode(torch.zeros(2, D_G))
        assert out == [[], []]


class TestParameterCounts:
    def test_paper_scale_range(self):
        net = GlobalAutoencoderNet(8900)
        critic = LatentCritic(128)
        total = count_parameters(net) + count_parameters(critic)
        assert 5_000_000 <= total <= 8_000_000

    def test_empty_module_counts_zero(self):
        assert count_parameters(torch.nn.Sequential()) == 0

    def test_tiny_net_matches_hand_count(self):
        # independent tally of the tiny config: vocab 20, emb 16, gru 12, d_g 8,
        # 2 blocks of 2 heads with ff 32, positions 17
        emb = 20 * 16
        gru = 2 * (3 * 12 * 16 + 3 * 12 * 12 + 2 * 3 * 12)
        heads = 2 * (24 * 8 + 8)
        block = (17 * 16) + (8 * 16 + 16) + (3 * 16 * 16 + 3 * 16) + (16 * 16 + 16) \
            + 2 * (2 * 16) + (16 * 32 + 32) + (32 * 16 + 16)
        expected = emb + gru + heads + 2 * block
        assert count_parameters(tiny_net()) == expected


class TestEstimator:
    CORPUS = [
        "the cat sat on the mat",
        "a dog ran far away",
        "birds fly high",
        "the mat sat still",
        "dogs and cats play",
    ] * 4

    def small_ae(self, **kw):
        params = dict(
            d_g=D_G, emb_dim=16, gru_hidden=12, dec_layers=1, dec_heads=2, dec_ff=32,
            batch_size=8, epochs=2, max_vocab=40, seed=0,
        )
        params.update(kw)
        return TextAutoencoder(**params)

    def test_fit_transform_shapes(self):
        ae = self.small_ae().fit(self.CORPUS)
        Z = ae.transform(self.CORPUS[:3])
        assert Z.shape == (3, D_G)
        assert len(ae.inverse_transform(Z)) == 3

    def test_repeated_fits_identical(self):
        d1 = self.small_ae().fit(self.CORPUS).digest()
        d2 = self.small_ae().fit(self.CORPUS).digest()
        assert d1 == d2

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty corpus"):
            self.small_ae().fit([])

    def test_sklearn_clone_compatible(self):
        ae = self.small_ae()
        cloned = clone(ae)
        assert cloned.get_params() == ae.get_params()

    def test_history_recorded(self):
        ae = self.small_ae().fit(self.CORPUS)
        assert len(ae.history_) == 2
        assert set(ae.history_[0]) == {"recon", "adv", "disc"}

    def test_encode_ids_matches_transform(self):
        ae = self.small_ae().fit(self.CORPUS)
        Z_text = ae.transform(["the cat sat"])
        Z_ids = ae.encode_ids([ae._encoded(["the cat sat"])[0]])
        np.testing.assert_array_equal(Z_text, Z_ids)
