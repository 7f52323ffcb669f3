"""Per-condition plug-in VAE over global latent vectors.

A small MLP encoder/decoder pair maps d_g-dimensional global latents to a
d_c-dimensional condition space and back.  The objective is squared-error
reconstruction plus a capacity term |KL - beta| that steers the posterior's
information content toward a target beta; an optional negative-sample term
repels encodings of other conditions.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .corpus import ConditionDataset
from .networks import PluginNet, count_parameters, init_parameters_
from .pretrain import TrainingDivergedError, reparameterize
from .seeding import numpy_rng, torch_generator
from .validation import check_fitted, check_matrix


def kl_to_standard_normal(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Per-sample KL(N(mean, diag(exp(logvar))) || N(0, I)), summed over dims."""
    return 0.5 * (mean.pow(2) + logvar.exp() - 1.0 - logvar).sum(dim=-1)


def beta_at(iteration: int, beta_max: float = 5.0, warmup_iters: int = 10000) -> float:
    """Linear warmup: 0 at iteration 0 up to ``beta_max`` after ``warmup_iters``."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if warmup_iters <= 0:
        return beta_max
    return min(iteration / warmup_iters, 1.0) * beta_max


def loss_single(
    net: PluginNet, v: torch.Tensor, beta: float, noise: torch.Tensor
) -> torch.Tensor:
    """Reconstruction plus capacity term for one batch of encoded positives.

    Squared error is summed over latent dimensions and averaged over the
    batch; the capacity term |mean KL - beta| applies to the batch-mean KL.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    mean, logvar = net.encode(v)
    z = reparameterize(mean, logvar, noise)
    recon = (v - net.decode(z)).pow(2).sum(dim=-1).mean()
    kl = kl_to_standard_normal(mean, logvar).mean()
    return recon + (kl - beta).abs()


def loss_with_negatives(
    net: PluginNet,
    v_pos: torch.Tensor,
    v_neg: torch.Tensor,
    beta: float,
    gamma: float,
    noise_pos: torch.Tensor,
    noise_neg: torch.Tensor,
    negative_ceiling: float | None = None,
) -> torch.Tensor:
    """Positive loss minus gamma times the same loss on negative samples.

    The negative term is unbounded below in principle; ``negative_ceiling``
    (off by default) clamps its contribution to ``ceiling * positive_loss``
    as a safety valve for long runs with large gamma.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    pos = loss_single(net, v_pos, beta, noise_pos)
    neg_term = gamma * loss_single(net, v_neg, beta, noise_neg)
    if negative_ceiling is not None:
        neg_term = torch.clamp(neg_term, max=negative_ceiling * float(pos.detach()))
    return pos - neg_term


class PluginVAE(BaseEstimator):
    """Lightweight per-condition VAE with a scikit-learn style interface.

    ``fit`` takes a matrix of encoded positive samples (rows in the global
    latent space) and optionally a matrix of negatives; ``transform`` maps
    global latents to condition-space posterior means; ``inverse_transform``
    maps condition latents back to the global space.
    """

    def __init__(
        self,
        d_c: int = 20,
        gamma: float = 0.1,
        beta_max: float = 5.0,
        beta_warmup_iters: int = 10000,
        total_iters: int = 20000,
        batch_size: int = 128,
        lr: float = 3e-4,
        adam_beta1: float = 0.5,
        negative_ceiling: float | None = None,
        seed: int = 0,
    ):
        self.d_c = d_c
        self.gamma = gamma
        self.beta_max = beta_max
        self.beta_warmup_iters = beta_warmup_iters
        self.total_iters = total_iters
        self.batch_size = batch_size
        self.lr = lr
        self.adam_beta1 = adam_beta1
        self.negative_ceiling = negative_ceiling
        self.seed = seed

    def _validate(self, d_g: int) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.beta_max < 0:
            raise ValueError("beta_max must be >= 0")
        if self.beta_warmup_iters > self.total_iters:
            raise ValueError("beta_warmup_iters must not exceed total_iters")
        if self.d_c >= d_g:
            raise ValueError(f"d_c ({self.d_c}) must be smaller than d_g ({d_g})")

    def init_net(self, d_g: int) -> "PluginVAE":
        """Build and seed the network without training (checkpoint loading)."""
        self._validate(d_g)
        self.d_g_ = d_g
        self.net_ = PluginNet(d_g, self.d_c)
        init_parameters_(self.net_, torch_generator(self.seed, "plugin", "init"))
        return self

    def fit(self, V_pos, V_neg=None):
        V_pos = check_matrix(V_pos, name="V_pos")
        if V_pos.shape[0] < 1:
            raise ValueError("need at least one positive sample")
        d_g = V_pos.shape[1]
        if V_neg is not None:
            V_neg = check_matrix(V_neg, n_cols=d_g, name="V_neg")

        self.init_net(d_g)
        opt = torch.optim.Adam(
            self.net_.parameters(), lr=self.lr, betas=(self.adam_beta1, 0.999)
        )
        data_rng = numpy_rng(self.seed, "plugin", "data")
        noise_gen = torch_generator(self.seed, "plugin", "noise")

        pos = torch.from_numpy(V_pos)
        neg = torch.from_numpy(V_neg) if V_neg is not None else None
        self.loss_trace_ = []
        for it in range(self.total_iters):
            beta = beta_at(it, self.beta_max, self.beta_warmup_iters)
            rows = data_rng.integers(0, pos.shape[0], size=self.batch_size)
            batch_pos = pos[rows]
            noise_pos = torch.randn(
                (self.batch_size, self.d_c), generator=noise_gen
            )
            if neg is None:
                loss = loss_single(self.net_, batch_pos, beta, noise_pos)
            else:
                neg_rows = data_rng.integers(0, neg.shape[0], size=self.batch_size)
                noise_neg = torch.randn(
                    (self.batch_size, self.d_c), generator=noise_gen
                )
                loss = loss_with_negatives(
                    self.net_,
                    batch_pos,
                    neg[neg_rows],
                    beta,
                    self.gamma,
                    noise_pos,
                    noise_neg,
                    self.negative_ceiling,
                )
            if not torch.isfinite(loss):
                raise TrainingDivergedError("plugin training diverged")
            opt.zero_grad()
            loss.backward()
            opt.step()
            self.loss_trace_.append(loss.item())
        return self

    def encode_posterior(self, V) -> tuple[np.ndarray, np.ndarray]:
        """Condition-space posterior (mean, logvar) for global-latent rows."""
        check_fitted(self, "net_")
        V = check_matrix(V, n_cols=self.d_g_, name="V")
        with torch.no_grad():
            mean, logvar = self.net_.encode(torch.from_numpy(V))
        return mean.numpy(), logvar.numpy()

    def transform(self, V) -> np.ndarray:
        return self.encode_posterior(V)[0]

    def inverse_transform(self, Z_c) -> np.ndarray:
        """Map condition-space latents back into the global latent space."""
        check_fitted(self, "net_")
        Z_c = check_matrix(Z_c, n_cols=self.d_c, name="Z_c")
        with torch.no_grad():
            return self.net_.decode(torch.from_numpy(Z_c)).numpy()

    def reconstruction_error(self, V) -> np.ndarray:
        """Deterministic per-row squared error through the posterior mean."""
        mean = self.transform(V)
        return ((V - self.inverse_transform(mean)) ** 2).sum(axis=1)

    def parameter_count(self) -> int:
        check_fitted(self, "net_")
        return count_parameters(self.net_)

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        check_fitted(self, "net_")
        return [
            (name, param.detach().numpy().astype(np.float32))
            for name, param in self.net_.named_parameters()
        ]

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        check_fitted(self, "net_")
        with torch.no_grad():
            for name, param in self.net_.named_parameters():
                if name not in arrays:
                    raise ValueError(f"checkpoint is missing tensor {name}")
                value = arrays[name]
                if tuple(value.shape) != tuple(param.shape):
                    raise ValueError(
                        f"tensor {name} has shape {value.shape}, expected {tuple(param.shape)}"
                    )
                param.copy_(torch.from_numpy(np.ascontiguousarray(value)))


def train_plugin(
    dataset: ConditionDataset,
    pretrain_digest: str | None = None,
    **params,
) -> PluginVAE:
    """Fit a plug-in for one condition dataset.

    Without negatives the objective is the single-condition loss throughout;
    with negatives the gamma-weighted repulsion term applies.  The plug-in is
    stamped with the autoencoder digest when given, and carries its condition
    name and loss trace.
    """
    plugin = PluginVAE(**params)
    plugin.fit(dataset.positives, dataset.negatives)
    plugin.condition_ = dataset.name
    if pretrain_digest is not None:
        plugin.pretrain_digest_ = pretrain_digest
    return plugin
