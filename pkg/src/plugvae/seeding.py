"""Named sub-stream seed derivation.

Every command consumes a single root seed; component streams (init, data
sampling, noise, ...) derive their own seeds from it by hashing, so adding
or reordering random draws in one component never perturbs another.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch


def derive_seed(root: int, *labels: str) -> int:
    """Deterministic 64-bit seed for the sub-stream named by ``labels``."""
    digest = hashlib.sha256(f"{root}|{'|'.join(labels)}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def numpy_rng(root: int, *labels: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *labels))


def torch_generator(root: int, *labels: str) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(root, *labels))
    return gen
