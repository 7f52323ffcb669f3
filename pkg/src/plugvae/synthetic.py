"""Seeded synthetic corpus for desk-scale experiments.

Sentences are two-word alternating patterns ("crow lake crow lake ...") with
lengths drawn to cover all three length bins (<=3, 4-11, >=12).  The corpus
is low-entropy by design: a small autoencoder can master it quickly, while
the length signal stays strong enough for conditional generation to show a
measurable lift over the unconditional baseline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import LENGTH_CONDITIONS, label_for_length
from .seeding import numpy_rng

WORD_INVENTORY = (
    "ant", "bear", "crow", "deer", "eel", "fox", "goat", "hare", "ibis", "jay",
    "kite", "lark", "mole", "newt", "owl", "pike", "quail", "rook", "seal", "toad",
    "vole", "wren", "yak", "zebu", "lake", "pine", "reef", "dune", "moss", "fern",
)

_BIN_PROBS = (0.3, 0.4, 0.3)
_BIN_RANGES = ((1, 3), (4, 11), (12, 15))


def _sample_sentence(rng: np.random.Generator) -> str:
    bin_idx = rng.choice(len(_BIN_PROBS), p=_BIN_PROBS)
    lo, hi = _BIN_RANGES[bin_idx]
    n = int(rng.integers(lo, hi + 1))
    a, b = rng.choice(len(WORD_INVENTORY), size=2, replace=False)
    pair = (WORD_INVENTORY[a], WORD_INVENTORY[b])
    return " ".join(pair[i % 2] for i in range(n))


def make_synthetic_corpus(
    out_dir: str | Path,
    n_unlabeled: int = 10000,
    n_labeled_per_condition: int = 200,
    seed: int = 0,
) -> dict:
    """Write ``unlabeled.txt`` and ``labeled.tsv`` under ``out_dir``.

    The labeled file holds exactly ``n_labeled_per_condition`` lines per
    length condition, drawn from a stream independent of the unlabeled one.
    Returns file paths and the unlabeled length histogram.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = numpy_rng(seed, "synthetic", "unlabeled")
    unlabeled = [_sample_sentence(rng) for _ in range(n_unlabeled)]
    histogram = {cond: 0 for cond in LENGTH_CONDITIONS}
    for line in unlabeled:
        histogram[label_for_length(len(line.split()))] += 1

    rng = numpy_rng(seed, "synthetic", "labeled")
    remaining = {cond: n_labeled_per_condition for cond in LENGTH_CONDITIONS}
    labeled: list[tuple[str, str]] = []
    while any(remaining.values()):
        line = _sample_sentence(rng)
        cond = label_for_length(len(line.split()))
        if remaining[cond] > 0:
            remaining[cond] -= 1
            labeled.append((cond, line))

    unlabeled_path = out_dir / "unlabeled.txt"
    labeled_path = out_dir / "labeled.tsv"
    unlabeled_path.write_text("\n".join(unlabeled) + "\n", encoding="utf-8")
    labeled_path.write_text(
        "\n".join(f"{cond}\t{line}" for cond, line in labeled) + "\n", encoding="utf-8"
    )
    return {
        "unlabeled_path": str(unlabeled_path),
        "labeled_path": str(labeled_path),
        "length_histogram": histogram,
    }
