"""Checkpoint persistence and content digests.

Layout of a checkpoint directory:

* ``manifest.json`` — ordered tensor records {name, shape, dtype "f32", offset}
* ``weights.bin``   — little-endian float32 payload, concatenated in manifest order
* ``config.json``   — the estimator's constructor parameters
* ``vocab.txt``     — one token per line, line number = id (autoencoder only)
* ``plugin.json``   — plug-in metadata incl. the digest of the autoencoder
  checkpoint it was trained against (plug-in only)

Round-trips are bit-exact.  A checkpoint's digest hashes config, vocabulary,
and weights, so any change to the trained model changes the digest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Vocabulary

MANIFEST_FILE = "manifest.json"
WEIGHTS_FILE = "weights.bin"
CONFIG_FILE = "config.json"
VOCAB_FILE = "vocab.txt"
PLUGIN_META_FILE = "plugin.json"


class PluginMismatchError(RuntimeError):
    """A plug-in was loaded against an autoencoder it was not trained with."""


def serialize_weights(named_arrays: Iterable[tuple[str, np.ndarray]]) -> tuple[bytes, bytes]:
    """Encode named float arrays as (manifest json bytes, weight bytes)."""
    records = []
    chunks = []
    offset = 0
    for name, arr in named_arrays:
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        records.append(
            {"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": offset}
        )
        chunks.append(data)
        offset += len(data)
    manifest = json.dumps({"tensors": records}, indent=2, sort_keys=True) + "\n"
    return manifest.encode("utf-8"), b"".join(chunks)


def deserialize_weights(manifest_bytes: bytes, weights_bytes: bytes) -> dict[str, np.ndarray]:
    """Inverse of :func:`serialize_weights`; arrays are float32 copies."""
    manifest = json.loads(manifest_bytes.decode("utf-8"))
    arrays = {}
    for rec in manifest["tensors"]:
        if rec["dtype"] != "f32":
            raise ValueError(f"unsupported dtype {rec['dtype']!r} for tensor {rec['name']!r}")
        count = int(np.prod(rec["shape"], dtype=np.int64)) if rec["shape"] else 1
        start = rec["offset"]
        flat = np.frombuffer(weights_bytes, dtype="<f4", count=count, offset=start)
        arrays[rec["name"]] = flat.reshape(rec["shape"]).copy()
    return arrays


def config_bytes(params: dict) -> bytes:
    return (json.dumps(params, indent=2, sort_keys=True) + "\n").encode("utf-8")


def digest_of(
    params: dict,
    vocab: Vocabulary | None,
    named_arrays: Iterable[tuple[str, np.ndarray]],
) -> str:
    """Canonical content hash of a model: config + vocabulary + weights."""
    manifest_bytes, weights_bytes = serialize_weights(named_arrays)
    h = hashlib.sha256()
    h.update(config_bytes(params))
    if vocab is not None:
        h.update("\n".join(vocab.tokens).encode("utf-8"))
    h.update(manifest_bytes)
    h.update(weights_bytes)
    return h.hexdigest()


def _write_weight_files(directory: Path, named_arrays) -> None:
    manifest_bytes, weights_bytes = serialize_weights(named_arrays)
    (directory / MANIFEST_FILE).write_bytes(manifest_bytes)
    (directory / WEIGHTS_FILE).write_bytes(weights_bytes)


def _read_weight_files(directory: Path) -> dict[str, np.ndarray]:
    manifest_bytes = (directory / MANIFEST_FILE).read_bytes()
    weights_bytes = (directory / WEIGHTS_FILE).read_bytes()
    return deserialize_weights(manifest_bytes, weights_bytes)


def save_autoencoder(directory: str | Path, ae) -> str:
    """Write an autoencoder checkpoint; returns its digest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = ae.state_arrays()
    _write_weight_files(directory, arrays)
    (directory / CONFIG_FILE).write_bytes(config_bytes(ae.get_params()))
    ae.vocab_.save(directory / VOCAB_FILE)
    return digest_of(ae.get_params(), ae.vocab_, arrays)


def load_autoencoder(directory: str | Path):
    """Reconstruct a fitted :class:`~plugvae.pretrain.TextAutoencoder`."""
    from .pretrain import TextAutoencoder

    directory = Path(directory)
    params = json.loads((directory / CONFIG_FILE).read_text(encoding="utf-8"))
    ae = TextAutoencoder(**params)
    ae.vocab_ = Vocabulary.load(directory / VOCAB_FILE)
    ae.net_, ae.critic_ = ae._build(len(ae.vocab_))
    ae.history_ = []
    ae.load_state_arrays(_read_weight_files(directory))
    return ae


def pretrain_digest(directory: str | Path) -> str:
    """Digest of an on-disk autoencoder checkpoint (equals the in-memory one)."""
    ae = load_autoencoder(directory)
    return digest_of(ae.get_params(), ae.vocab_, ae.state_arrays())


def save_plugin(
    directory: str | Path,
    plugin,
    condition: str,
    pretrain_digest: str,
    used_negatives: bool,
) -> None:
    """Write a plug-in checkpoint stamped with its autoencoder's digest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_weight_files(directory, plugin.state_arrays())
    (directory / CONFIG_FILE).write_bytes(config_bytes(plugin.get_params()))
    meta = {
        "condition": condition,
        "d_g": plugin.d_g_,
        "gamma": plugin.gamma,
        "beta_max": plugin.beta_max,
        "beta_warmup_iters": plugin.beta_warmup_iters,
        "total_iters": plugin.total_iters,
        "used_negatives": used_negatives,
        "pretrain_digest": pretrain_digest,
    }
    (directory / PLUGIN_META_FILE).write_bytes(config_bytes(meta))


def load_plugin(directory: str | Path, expected_pretrain_digest: str | None = None):
    """Load a plug-in checkpoint; returns (plugin, metadata).

    When ``expected_pretrain_digest`` is given and differs from the recorded
    one, raises :class:`PluginMismatchError`.
    """
    from .plugin import PluginVAE

    directory = Path(directory)
    meta = json.loads((directory / PLUGIN_META_FILE).read_text(encoding="utf-8"))
    if (
        expected_pretrain_digest is not None
        and meta["pretrain_digest"] != expected_pretrain_digest
    ):
        raise PluginMismatchError(
            f"plugin/pretrain mismatch: plugin at {directory} was trained against "
            f"digest {meta['pretrain_digest'][:12]}..., expected "
            f"{expected_pretrain_digest[:12]}..."
        )
    params = json.loads((directory / CONFIG_FILE).read_text(encoding="utf-8"))
    plugin = PluginVAE(**params)
    plugin.init_net(meta["d_g"])
    plugin.load_state_arrays(_read_weight_files(directory))
    plugin.pretrain_digest_ = meta["pretrain_digest"]
    plugin.condition_ = meta["condition"]
    return plugin, meta
