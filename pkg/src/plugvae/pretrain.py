"""Global text autoencoder: losses, adversarial training step, estimator.

The autoencoder minimizes token reconstruction plus an adversarial term that
pulls the aggregated posterior toward the standard-normal prior, as judged by
a critic trained with a Wasserstein-divergence gradient penalty.  There is no
KL term on the global latent; the stochastic encoder's log-variance learns
only through reconstruction and the adversarial signal.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from torch import nn

from .corpus import (
    Vocabulary,
    build_vocabulary,
    decode_tokens,
    encode_text,
    filter_by_length,
    tokenize,
)
from .networks import (
    GlobalAutoencoderNet,
    LatentCritic,
    count_parameters,
    init_parameters_,
    pad_batch,
)
from .seeding import numpy_rng, torch_generator
from .validation import check_fitted, check_matrix


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""


def reparameterize(mean: torch.Tensor, logvar: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    """Gaussian reparameterization: mean + exp(logvar / 2) * noise."""
    if noise.shape != mean.shape:
        raise ValueError(f"noise shape {tuple(noise.shape)} != mean shape {tuple(mean.shape)}")
    return mean + torch.exp(0.5 * logvar) * noise


def reconstruction_loss(logits: torch.Tensor, targets: torch.Tensor, pad_id: int = 0) -> torch.Tensor:
    """Token cross-entropy, summed over time and averaged over the batch.

    Positions where the target is padding (everything after eos) are masked
    out, so logits there never influence the loss.
    """
    if logits.shape[:2] != targets.shape:
        raise ValueError(
            f"logits shape {tuple(logits.shape)} does not align with targets {tuple(targets.shape)}"
        )
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    mask = (targets != pad_id).to(nll.dtype)
    return (nll * mask).sum(dim=1).mean()


def discriminator_loss(
    critic: nn.Module,
    z_posterior: torch.Tensor,
    z_prior: torch.Tensor,
    k: float = 2.0,
    p: float = 6.0,
    eps: torch.Tensor | None = None,
) -> torch.Tensor:
    """Critic objective: mean D(post) - mean D(prior) + k * mean ||grad D||^p.

    The gradient penalty is evaluated on random interpolates between the two
    batches; ``eps`` supplies the (B, 1) interpolation draws for seeded runs.
    Both batch inputs are detached: the penalty constrains the critic only.
    """
    if z_posterior.shape != z_prior.shape:
        raise ValueError(
            f"batch mismatch: posterior {tuple(z_posterior.shape)} vs prior {tuple(z_prior.shape)}"
        )
    if eps is None:
        eps = torch.rand(z_posterior.shape[0], 1, dtype=z_posterior.dtype)
    z_post = z_posterior.detach()
    z_pri = z_prior.detach()
    z_hat = (eps * z_post + (1.0 - eps) * z_pri).requires_grad_(True)
    d_hat = critic(z_hat)
    grads = torch.autograd.grad(d_hat.sum(), z_hat, create_graph=True)[0]
    penalty = grads.pow(2).sum(dim=1).pow(p / 2.0).mean()
    return critic(z_post).mean() - critic(z_pri).mean() + k * penalty


def adversarial_loss(critic: nn.Module, z_posterior: torch.Tensor) -> torch.Tensor:
    """Encoder-side term: -mean D(z_posterior); weighted by lambda in the step."""
    return -critic(z_posterior).mean()


def pretrain_step(
    net: GlobalAutoencoderNet,
    critic: LatentCritic,
    opt_ae: torch.optim.Optimizer,
    opt_critic: torch.optim.Optimizer,
    sequences: list[list[int]],
    lambda_coeff: float,
    wdiv_k: float,
    wdiv_p: float,
    generator: torch.Generator,
) -> dict[str, float]:
    """One alternating update: critic first, then encoder+decoder.

    Returns the step's reconstruction, adversarial (unweighted), and critic
    losses.  Raises :class:`TrainingDivergedError` on non-finite loss.
    """
    full = pad_batch(sequences)
    teacher_in = full[:, :-1]
    targets = full[:, 1:]
    batch = full.shape[0]

    mean, logvar = net.encode(sequences)
    noise = torch.randn(mean.shape, generator=generator)
    z_post = reparameterize(mean, logvar, noise)

    z_prior = torch.randn(batch, net.d_g, generator=generator)
    eps = torch.rand(batch, 1, generator=generator)
    d_loss = discriminator_loss(critic, z_post, z_prior, wdiv_k, wdiv_p, eps)
    opt_critic.zero_grad()
    d_loss.backward()
    opt_critic.step()

    logits = net.decode_logits(z_post, teacher_in)
    recon = reconstruction_loss(logits, targets)
    adv = adversarial_loss(critic, z_post)
    ae_loss = recon + lambda_coeff * adv if lambda_coeff != 0.0 else recon
    if not (torch.isfinite(ae_loss) and torch.isfinite(d_loss)):
        raise TrainingDivergedError("training diverged")
    opt_ae.zero_grad()
    ae_loss.backward()
    opt_ae.step()

    return {"recon": recon.item(), "adv": adv.item(), "disc": d_loss.item()}


class TextAutoencoder(BaseEstimator):
    """Global text autoencoder with a scikit-learn style interface.

    ``fit`` consumes raw sentences: it tokenizes, filters to ``max_len``
    words, builds the vocabulary, and trains the encoder/decoder/critic.
    ``transform`` maps sentences to posterior-mean latent vectors and
    ``inverse_transform`` greedy-decodes latent vectors back to text.

    Parameters mirror the training configuration; learned state lives in
    ``vocab_``, ``net_``, ``critic_``, and ``history_``.
    """

    def __init__(
        self,
        d_g: int = 128,
        emb_dim: int = 256,
        gru_hidden: int = 256,
        dec_layers: int = 3,
        dec_heads: int = 8,
        dec_ff: int = 1024,
        lambda_coeff: float = 20.0,
        wdiv_k: float = 2.0,
        wdiv_p: float = 6.0,
        batch_size: int = 512,
        lr: float = 5e-4,
        adam_beta1: float = 0.0,
        epochs: int = 10,
        max_len: int = 15,
        max_vocab: int = 8900,
        seed: int = 0,
    ):
        self.d_g = d_g
        self.emb_dim = emb_dim
        self.gru_hidden = gru_hidden
        self.dec_layers = dec_layers
        self.dec_heads = dec_heads
        self.dec_ff = dec_ff
        self.lambda_coeff = lambda_coeff
        self.wdiv_k = wdiv_k
        self.wdiv_p = wdiv_p
        self.batch_size = batch_size
        self.lr = lr
        self.adam_beta1 = adam_beta1
        self.epochs = epochs
        self.max_len = max_len
        self.max_vocab = max_vocab
        self.seed = seed

    def _build(self, vocab_size: int) -> tuple[GlobalAutoencoderNet, LatentCritic]:
        if self.lambda_coeff < 0:
            raise ValueError("lambda_coeff must be >= 0")
        net = GlobalAutoencoderNet(
            vocab_size,
            d_g=self.d_g,
            emb_dim=self.emb_dim,
            gru_hidden=self.gru_hidden,
            dec_layers=self.dec_layers,
            dec_heads=self.dec_heads,
            dec_ff=self.dec_ff,
            max_len=self.max_len,
        )
        critic = LatentCritic(self.d_g)
        init_parameters_(net, torch_generator(self.seed, "pretrain", "init", "net"))
        init_parameters_(critic, torch_generator(self.seed, "pretrain", "init", "critic"))
        return net, critic

    def fit(self, texts, y=None, verbose: int = 0):
        token_lists = filter_by_length((tokenize(t) for t in texts), self.max_len)
        if not token_lists:
            raise ValueError("empty corpus")
        self.vocab_ = build_vocabulary(token_lists, self.max_vocab)
        sequences = [encode_text(t, self.vocab_, self.max_len) for t in token_lists]
        self.net_, self.critic_ = self._build(len(self.vocab_))

        opt_ae = torch.optim.Adam(
            list(self.net_.parameters()), lr=self.lr, betas=(self.adam_beta1, 0.999)
        )
        opt_critic = torch.optim.Adam(
            self.critic_.parameters(), lr=self.lr, betas=(self.adam_beta1, 0.999)
        )
        data_rng = numpy_rng(self.seed, "pretrain", "data")
        noise_gen = torch_generator(self.seed, "pretrain", "noise")

        self.history_ = []
        n = len(sequences)
        for epoch in range(self.epochs):
            order = data_rng.permutation(n)
            sums = {"recon": 0.0, "adv": 0.0, "disc": 0.0}
            steps = 0
            for start in range(0, n, self.batch_size):
                batch = [sequences[i] for i in order[start : start + self.batch_size]]
                losses = pretrain_step(
                    self.net_,
                    self.critic_,
                    opt_ae,
                    opt_critic,
                    batch,
                    self.lambda_coeff,
                    self.wdiv_k,
                    self.wdiv_p,
                    noise_gen,
                )
                for key in sums:
                    sums[key] += losses[key]
                steps += 1
            epoch_means = {k: v / steps for k, v in sums.items()}
            self.history_.append(epoch_means)
            if verbose:
                print(
                    f"epoch {epoch + 1}/{self.epochs} "
                    f"recon={epoch_means['recon']:.4f} "
                    f"adv={epoch_means['adv']:.4f} "
                    f"disc={epoch_means['disc']:.4f}"
                )
        return self

    def _encoded(self, texts) -> list[list[int]]:
        check_fitted(self, "vocab_")
        return [encode_text(tokenize(t), self.vocab_, self.max_len) for t in texts]

    def encode_posterior(self, texts) -> tuple[np.ndarray, np.ndarray]:
        """Posterior (mean, logvar) arrays, one row per sentence."""
        check_fitted(self, "net_")
        with torch.no_grad():
            mean, logvar = self.net_.encode(self._encoded(texts))
        return mean.numpy(), logvar.numpy()

    def transform(self, texts) -> np.ndarray:
        """Posterior means in the global latent space, shape (n, d_g)."""
        return self.encode_posterior(texts)[0]

    def encode_ids(self, sequences, batch_size: int = 512) -> np.ndarray:
        """Posterior means for already-encoded id sequences, shape (n, d_g)."""
        check_fitted(self, "net_")
        sequences = [list(s) for s in sequences]
        means = []
        with torch.no_grad():
            for start in range(0, len(sequences), batch_size):
                mean, _ = self.net_.encode(sequences[start : start + batch_size])
                means.append(mean.numpy())
        return np.concatenate(means, axis=0) if means else np.zeros((0, self.d_g), np.float32)

    def decode_latents(
        self, Z, max_len: int | None = None, chunk_size: int = 512
    ) -> list[str]:
        """Greedy-decode latent rows to sentences (deterministic).

        Rows are decoded in fixed-size chunks so large requests stay within
        memory; chunk boundaries depend only on row index, keeping repeated
        runs identical.
        """
        check_fitted(self, "net_")
        Z = check_matrix(Z, n_cols=self.d_g, name="Z")
        texts: list[str] = []
        for start in range(0, Z.shape[0], chunk_size):
            block = torch.from_numpy(Z[start : start + chunk_size])
            for row in self.net_.greedy_decode(block, max_len=max_len):
                texts.append(decode_tokens(row, self.vocab_))
        return texts

    def inverse_transform(self, Z) -> list[str]:
        return self.decode_latents(Z)

    def reconstruct(self, texts) -> list[str]:
        """Round-trip text through the posterior mean and greedy decoding."""
        return self.decode_latents(self.transform(texts))

    def parameter_count(self) -> int:
        """Trainable weights in encoder+decoder+critic; tied softmax counts once."""
        check_fitted(self, "net_")
        return count_parameters(self.net_) + count_parameters(self.critic_)

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Named float32 weight arrays in a stable order (for checkpoints)."""
        check_fitted(self, "net_")
        out = []
        for prefix, module in (("net", self.net_), ("critic", self.critic_)):
            for name, param in module.named_parameters():
                out.append((f"{prefix}.{name}", param.detach().numpy().astype(np.float32)))
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        check_fitted(self, "net_")
        with torch.no_grad():
            for prefix, module in (("net", self.net_), ("critic", self.critic_)):
                for name, param in module.named_parameters():
                    key = f"{prefix}.{name}"
                    if key not in arrays:
                        raise ValueError(f"checkpoint is missing tensor {key}")
                    value = arrays[key]
                    if tuple(value.shape) != tuple(param.shape):
                        raise ValueError(
                            f"tensor {key} has shape {value.shape}, expected {tuple(param.shape)}"
                        )
                    param.copy_(torch.from_numpy(np.ascontiguousarray(value)))

    def digest(self) -> str:
        """Content hash of config, vocabulary, and weights.

        Plug-ins record this so a plugin trained against one checkpoint is
        rejected when loaded against another.
        """
        check_fitted(self, "net_")
        from .checkpoint import digest_of

        return digest_of(self.get_params(), self.vocab_, self.state_arrays())
