"""Conditional and unconditional text generation from frozen models.

The plug-in path samples the condition prior, maps the draw into the global
latent space with the plug-in decoder, and greedy-decodes with the frozen
global decoder.  Everything is read-only over the estimators and seeded, so
generation is reproducible and embarrassingly parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import PluginMismatchError
from .plugin import PluginVAE
from .pretrain import TextAutoencoder


@dataclass(frozen=True)
class GenerationRequest:
    """What to generate: a condition (or "unconditional"), count, seed."""

    condition: str
    n: int
    seed: int = 0
    max_len: int | None = None


def sample_conditional_prior(n: int, d_c: int, seed: int = 0) -> np.ndarray:
    """n i.i.d. standard-normal rows of dimension d_c, reproducible by seed."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d_c)).astype(np.float32)


def plugin_generate(
    plugin: PluginVAE,
    autoencoder: TextAutoencoder,
    n: int,
    seed: int = 0,
    max_len: int | None = None,
) -> list[str]:
    """Generate n sentences for the plug-in's condition.

    Duplicates and empty generations are retained: diversity and accuracy
    metrics must see the raw output.  If the plug-in records the digest of
    the checkpoint it was trained against, a mismatch with ``autoencoder``
    is an error.
    """
    recorded = getattr(plugin, "pretrain_digest_", None)
    if recorded is not None and recorded != autoencoder.digest():
        raise PluginMismatchError(
            "plugin/pretrain mismatch: this plug-in was trained against a "
            "different autoencoder checkpoint"
        )
    z_c = sample_conditional_prior(n, plugin.d_c, seed)
    if n == 0:
        return []
    v = plugin.inverse_transform(z_c)
    return autoencoder.decode_latents(v, max_len=max_len)


def unconditional_generate(
    autoencoder: TextAutoencoder,
    n: int,
    seed: int = 0,
    max_len: int | None = None,
) -> list[str]:
    """Sample the global prior directly and greedy-decode (the baseline path)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    z_g = rng.standard_normal((n, autoencoder.d_g)).astype(np.float32)
    return autoencoder.decode_latents(z_g, max_len=max_len)


def generate(
    request: GenerationRequest,
    autoencoder: TextAutoencoder,
    plugins: dict[str, PluginVAE],
) -> list[str]:
    """Dispatch a request to the plug-in path or the unconditional baseline."""
    if request.condition == "unconditional":
        return unconditional_generate(
            autoencoder, request.n, request.seed, request.max_len
        )
    if request.condition not in plugins:
        raise ValueError(f"no plug-in loaded for condition {request.condition!r}")
    return plugin_generate(
        plugins[request.condition], autoencoder, request.n, request.seed, request.max_len
    )
