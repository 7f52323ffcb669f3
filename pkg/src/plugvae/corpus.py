"""Text ingestion: tokenization, vocabulary, length labels, condition sets.

Everything here is a pure function over immutable inputs, so calls are
thread-safe.  File formats are plain UTF-8: one sentence per line for
unlabeled corpora, ``label<TAB>sentence`` for labeled corpora, and one
token per line (line number = id) for vocabularies.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

LENGTH_CONDITIONS = ("short", "medium", "long")

# Punctuation runs become standalone tokens; everything else splits on whitespace.
_PUNCT_RE = re.compile(r"([^\w\s]+)", re.UNICODE)


def tokenize(raw_text: str) -> list[str]:
    """Lowercase, isolate punctuation, and split on whitespace.

    Deterministic; empty input yields an empty list.
    """
    spaced = _PUNCT_RE.sub(r" \1 ", raw_text.lower())
    return spaced.split()


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional token<->id map with four reserved special tokens.

    Ids 0-3 are pad/bos/eos/unk and are never assigned to corpus words.
    """

    tokens: tuple[str, ...]
    token_to_id: dict[str, int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[:4]) != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary file {path} does not start with the special tokens")
        return cls(tokens=tuple(lines), token_to_id={t: i for i, t in enumerate(lines)})


def build_vocabulary(corpus: Iterable[Sequence[str]], max_vocab: int) -> Vocabulary:
    """Build a vocabulary of the specials plus the most frequent corpus tokens.

    Frequency ties break by first occurrence in the corpus, so the result is
    deterministic for a fixed input order.

    Args:
        corpus: token lists, one per sentence.
        max_vocab: total size cap including the four specials (must be > 4).
    """
    if max_vocab <= 4:
        raise ValueError(f"max_vocab must exceed 4, got {max_vocab}")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    n_sentences = 0
    for sentence in corpus:
        n_sentences += 1
        for token in sentence:
            counts[token] += 1
            if token not in first_seen:
                first_seen[token] = len(first_seen)
    if n_sentences == 0:
        raise ValueError("empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    tokens = SPECIAL_TOKENS + tuple(ranked[: max_vocab - 4])
    return Vocabulary(tokens=tokens, token_to_id={t: i for i, t in enumerate(tokens)})


def encode_text(tokens: Sequence[str], vocab: Vocabulary, max_len: int = 15) -> list[int]:
    """Encode tokens as bos + ids + eos, truncating content to ``max_len``.

    Out-of-vocabulary tokens map to unk.  Truncation here is a defensive
    fallback; corpus loading filters over-length text instead.
    """
    ids = [vocab.id_for(t) for t in tokens[:max_len]]
    return [BOS_ID] + ids + [EOS_ID]


def decode_tokens(ids: Sequence[int], vocab: Vocabulary) -> str:
    """Strip special ids and join the remaining tokens with single spaces.

    Inverse of :func:`encode_text` for in-vocabulary, non-truncated text.
    """
    words = []
    for i in ids:
        if i >= len(vocab) or i < 0:
            raise ValueError(f"id out of range: {i} (vocab size {len(vocab)})")
        if i > UNK_ID:
            words.append(vocab.tokens[i])
    return " ".join(words)


def content_length(ids: Sequence[int]) -> int:
    """Number of word ids in a sequence, specials excluded."""
    return sum(1 for i in ids if i > UNK_ID)


def label_for_length(n: int) -> str:
    """Length-bin name for a word count: short <=3, long >=12, else medium."""
    if n < 1:
        raise ValueError("length label requires at least one word")
    if n <= 3:
        return "short"
    if n >= 12:
        return "long"
    return "medium"


def length_label(ids: Sequence[int]) -> str:
    """Length-bin condition of an encoded sequence (specials excluded)."""
    return label_for_length(content_length(ids))


@dataclass(frozen=True)
class LabeledSample:
    """An encoded sentence carrying a condition label."""

    ids: tuple[int, ...]
    condition: str


@dataclass
class ConditionDataset:
    """Positive (and optional negative) samples for one condition, encoded
    as rows in the global latent space."""

    name: str
    positives: np.ndarray
    negatives: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.positives.ndim != 2 or self.positives.shape[0] < 1:
            raise ValueError("positives must be a non-empty 2-D matrix")
        if self.negatives is not None and self.negatives.shape[1] != self.positives.shape[1]:
            raise ValueError("positives and negatives must share the latent dimension")


def make_condition_sets(
    labeled: Sequence[LabeledSample],
    condition: str,
    n_per_condition: int,
    seed: int = 0,
    balance_negatives: bool = False,
) -> tuple[list[tuple[int, ...]], list[tuple[int, ...]]]:
    """Split labeled samples into positives for ``condition`` and the rest.

    Positives are sampled without replacement down to ``n_per_condition``
    (seeded).  Negatives are every sample with a different label; with
    ``balance_negatives`` they are subsampled to the positive count.
    """
    matching = [s.ids for s in labeled if s.condition == condition]
    others = [s.ids for s in labeled if s.condition != condition]
    if not matching:
        raise ValueError(f"unknown condition: {condition!r}")
    if len(matching) < n_per_condition:
        raise ValueError(
            f"need {n_per_condition} samples labeled {condition!r}, found {len(matching)}"
        )
    rng = np.random.default_rng(seed)
    if len(matching) > n_per_condition:
        keep = rng.choice(len(matching), size=n_per_condition, replace=False)
        positives = [matching[i] for i in sorted(keep)]
    else:
        positives = list(matching)
    negatives = list(others)
    if balance_negatives and len(negatives) > len(positives):
        keep = rng.choice(len(negatives), size=len(positives), replace=False)
        negatives = [negatives[i] for i in sorted(keep)]
    return positives, negatives


def read_unlabeled(path: str | Path) -> list[str]:
    """Read a one-sentence-per-line corpus, dropping blank lines."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip()]


def read_labeled(path: str | Path) -> list[tuple[str, str]]:
    """Read ``label<TAB>sentence`` pairs from a TSV file."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise ValueError(f"{path}:{lineno}: expected label<TAB>sentence")
        label, sentence = line.split("\t", 1)
        pairs.append((label.strip(), sentence.strip()))
    return pairs


def filter_by_length(token_lists: Iterable[list[str]], max_len: int = 15) -> list[list[str]]:
    """Drop sentences longer than ``max_len`` words (and empty ones)."""
    return [t for t in token_lists if 1 <= len(t) <= max_len]
