"""Neural building blocks: global autoencoder, latent critic, plug-in MLPs.

All modules are plain ``nn.Module``s with no dropout, so forward passes are
deterministic.  Parameters are (re-)initialized explicitly from a seeded
generator via :func:`init_parameters_`; construction-time randomness never
leaks into trained weights.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .corpus import BOS_ID, EOS_ID, PAD_ID

LEAKY_SLOPE = 0.2


def init_parameters_(module: nn.Module, generator: torch.Generator) -> None:
    """Seeded init: uniform fan-in for linear/recurrent weights, N(0, 0.01) embeddings.

    Biases start at zero, LayerNorm at identity.  Traversal follows module
    registration order, so draws are reproducible.
    """
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Linear):
                bound = m.weight.shape[1] ** -0.5
                m.weight.uniform_(-bound, bound, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.Embedding):
                m.weight.normal_(0.0, 0.01, generator=generator)
            elif isinstance(m, nn.GRU):
                for name, p in m.named_parameters(recurse=False):
                    if "weight" in name:
                        bound = p.shape[1] ** -0.5
                        p.uniform_(-bound, bound, generator=generator)
                    else:
                        p.zero_()
            elif isinstance(m, nn.MultiheadAttention):
                bound = m.embed_dim ** -0.5
                m.in_proj_weight.uniform_(-bound, bound, generator=generator)
                if m.in_proj_bias is not None:
                    m.in_proj_bias.zero_()
            elif isinstance(m, nn.LayerNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()
            elif isinstance(m, DecoderBlock):
                m.positional.normal_(0.0, 0.01, generator=generator)


def count_parameters(module: nn.Module) -> int:
    """Total scalar weight count; parameters shared across names count once."""
    return sum(p.numel() for p in module.parameters())


def pad_batch(sequences: list[list[int]], pad_id: int = PAD_ID) -> torch.Tensor:
    """Stack variable-length id lists into a (B, L) long tensor, right-padded."""
    length = max(len(s) for s in sequences)
    out = torch.full((len(sequences), length), pad_id, dtype=torch.long)
    for row, seq in enumerate(sequences):
        out[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return out


class SequenceEncoder(nn.Module):
    """Bidirectional GRU over embedded tokens with mean/log-variance heads."""

    def __init__(self, embedding: nn.Embedding, hidden: int, d_g: int):
        super().__init__()
        self.embedding = embedding
        self.gru = nn.GRU(
            embedding.embedding_dim, hidden, batch_first=True, bidirectional=True
        )
        self.mean_head = nn.Linear(2 * hidden, d_g)
        self.logvar_head = nn.Linear(2 * hidden, d_g)

    def forward(self, ids: torch.Tensor, lengths: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Posterior (mean, logvar), each (B, d_g), from padded ids and true lengths."""
        emb = self.embedding(ids)
        packed = nn.utils.rnn.pack_padded_sequence(
            emb, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        _, h_n = self.gru(packed)
        state = torch.cat([h_n[0], h_n[1]], dim=-1)
        return self.mean_head(state), self.logvar_head(state)


class DecoderBlock(nn.Module):
    """Causal self-attention block conditioned on a latent vector.

    The block input gets its own positional embedding plus a learned linear
    projection of the latent added at every position before attention.
    """

    def __init__(self, width: int, heads: int, ff_dim: int, d_g: int, max_positions: int):
        super().__init__()
        self.positional = nn.Parameter(torch.zeros(max_positions, width))
        self.latent_proj = nn.Linear(d_g, width)
        self.attn = nn.MultiheadAttention(width, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(width)
        self.norm2 = nn.LayerNorm(width)
        self.ff = nn.Sequential(
            nn.Linear(width, ff_dim), nn.LeakyReLU(LEAKY_SLOPE), nn.Linear(ff_dim, width)
        )

    def forward(self, x: torch.Tensor, z: torch.Tensor, causal_mask: torch.Tensor) -> torch.Tensor:
        t = x.shape[1]
        h = x + self.positional[:t] + self.latent_proj(z).unsqueeze(1)
        attn_out, _ = self.attn(h, h, h, attn_mask=causal_mask, need_weights=False)
        h = self.norm1(h + attn_out)
        return self.norm2(h + self.ff(h))


class GlobalAutoencoderNet(nn.Module):
    """Text autoencoder: BiGRU posterior encoder and latent-conditioned
    transformer decoder with the output softmax tied to the embedding."""

    def __init__(
        self,
        vocab_size: int,
        d_g: int = 128,
        emb_dim: int = 256,
        gru_hidden: int = 256,
        dec_layers: int = 3,
        dec_heads: int = 8,
        dec_ff: int = 1024,
        max_len: int = 15,
    ):
        super().__init__()
        self.d_g = d_g
        self.max_len = max_len
        self.embedding = nn.Embedding(vocab_size, emb_dim)
        self.encoder = SequenceEncoder(self.embedding, gru_hidden, d_g)
        max_positions = max_len + 2
        self.blocks = nn.ModuleList(
            DecoderBlock(emb_dim, dec_heads, dec_ff, d_g, max_positions)
            for _ in range(dec_layers)
        )

    @property
    def output_projection_weight(self) -> torch.Tensor:
        """The softmax matrix; shares storage with the embedding."""
        return self.embedding.weight

    def encode(self, sequences: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
        """Posterior (mean, logvar) over the global latent space, one row per sequence."""
        if len(sequences) == 0:
            raise ValueError("empty batch")
        ids = pad_batch(sequences)
        lengths = torch.tensor([len(s) for s in sequences], dtype=torch.long)
        return self.encoder(ids, lengths)

    def decode_logits(self, z: torch.Tensor, teacher_in: torch.Tensor) -> torch.Tensor:
        """Next-token logits (B, T, V) from latents and bos-shifted teacher input.

        Causal masking guarantees logits at step t see only teacher_in[:, :t+1].
        """
        if z.shape[0] != teacher_in.shape[0]:
            raise ValueError(
                f"batch mismatch: {z.shape[0]} latents vs {teacher_in.shape[0]} sequences"
            )
        t = teacher_in.shape[1]
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
        x = self.embedding(teacher_in)
        for block in self.blocks:
            x = block(x, z, causal)
        return F.linear(x, self.output_projection_weight)

    def greedy_decode(self, z: torch.Tensor, max_len: int | None = None) -> list[list[int]]:
        """Argmax decoding from latents; returns content ids (bos/eos stripped).

        Ties break toward the lowest token id; stops per sample at eos or at
        ``max_len`` content tokens.
        """
        max_len = self.max_len if max_len is None else max_len
        batch = z.shape[0]
        tokens = torch.full((batch, 1), BOS_ID, dtype=torch.long)
        finished = torch.zeros(batch, dtype=torch.bool)
        with torch.no_grad():
            for _ in range(max_len):
                logits = self.decode_logits(z, tokens)[:, -1, :]
                nxt = torch.argmax(logits, dim=-1)
                nxt = torch.where(finished, torch.full_like(nxt, PAD_ID), nxt)
                tokens = torch.cat([tokens, nxt.unsqueeze(1)], dim=1)
                finished = finished | (nxt == EOS_ID)
                if bool(finished.all()):
                    break
        out = []
        for row in tokens[:, 1:].tolist():
            content = []
            for tok in row:
                if tok in (EOS_ID, PAD_ID):
                    break
                content.append(tok)
            out.append(content)
        return out


class LatentCritic(nn.Module):
    """Adversarial critic over global latents: d_g -> 128 -> 128 -> 1.

    The final layer is bias-free, so an all-zero-weight critic scores zero.
    """

    def __init__(self, d_g: int, hidden: int = 128):
        super().__init__()
        self.d_g = d_g
        self.net = nn.Sequential(
            nn.Linear(d_g, hidden),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Linear(hidden, hidden),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Linear(hidden, 1, bias=False),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.d_g:
            raise ValueError(f"critic expects dimension {self.d_g}, got {z.shape[-1]}")
        return self.net(z).squeeze(-1)


class PluginNet(nn.Module):
    """Per-condition latent VAE: MLP encoder/decoder between d_g and d_c.

    Encoder stack is d_g -> 64 -> 32 with LeakyReLU plus two linear heads for
    mean and log-variance; decoder mirrors it as d_c -> 32 -> 64 -> d_g.
    """

    def __init__(self, d_g: int, d_c: int = 20, enc_hidden: tuple[int, int] = (64, 32)):
        super().__init__()
        self.d_g = d_g
        self.d_c = d_c
        h1, h2 = enc_hidden
        self.enc = nn.Sequential(
            nn.Linear(d_g, h1), nn.LeakyReLU(LEAKY_SLOPE), nn.Linear(h1, h2), nn.LeakyReLU(LEAKY_SLOPE)
        )
        self.mean_head = nn.Linear(h2, d_c)
        self.logvar_head = nn.Linear(h2, d_c)
        self.dec = nn.Sequential(
            nn.Linear(d_c, h2), nn.LeakyReLU(LEAKY_SLOPE), nn.Linear(h2, h1), nn.LeakyReLU(LEAKY_SLOPE), nn.Linear(h1, d_g)
        )

    def encode(self, v: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if v.shape[-1] != self.d_g:
            raise ValueError(f"plugin encoder expects dimension {self.d_g}, got {v.shape[-1]}")
        h = self.enc(v)
        return self.mean_head(h), self.logvar_head(h)

    def decode(self, z_c: torch.Tensor) -> torch.Tensor:
        if z_c.shape[-1] != self.d_c:
            raise ValueError(f"plugin decoder expects dimension {self.d_c}, got {z_c.shape[-1]}")
        return self.dec(z_c)
