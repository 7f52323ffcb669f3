"""Generation metrics: condition accuracy, its log-variance, Distinct-1/2.

Length accuracy is rule-based (word count); other tasks use a convolutional
sentence classifier trained on labeled data.  Distinct-n is the number of
unique n-grams divided by the total n-gram count over a set of texts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from torch import nn

from .corpus import LENGTH_CONDITIONS, PAD_ID, build_vocabulary, label_for_length, tokenize
from .networks import init_parameters_
from .seeding import numpy_rng, torch_generator
from .validation import check_fitted


def distinct_n(texts: list[str], n: int) -> float:
    """Unique n-grams over total n-grams, pooled across all texts.

    Texts are tokenized with the corpus tokenizer; empty texts contribute
    nothing.  Raises if the pool contains no n-grams at all.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0
    seen: set[tuple[str, ...]] = set()
    for text in texts:
        tokens = tokenize(text)
        count = len(tokens) - n + 1
        if count <= 0:
            continue
        total += count
        for i in range(count):
            seen.add(tuple(tokens[i : i + n]))
    if total == 0:
        raise ValueError("no n-grams")
    return len(seen) / total


def length_accuracy(texts: list[str], condition: str) -> float:
    """Fraction of texts whose word count falls in the given length bin.

    Empty texts count as failures for every condition.
    """
    if condition not in LENGTH_CONDITIONS:
        raise ValueError(f"unknown condition: {condition!r}")
    if not texts:
        raise ValueError("empty text list")
    hits = 0
    for text in texts:
        count = len(tokenize(text))
        if count >= 1 and label_for_length(count) == condition:
            hits += 1
    return hits / len(texts)


def accuracy_log_variance(accs: list[float]) -> float:
    """Natural log of the population variance of per-condition accuracies.

    Returns -inf when all accuracies are equal (the "all-equal" sentinel in
    reports).
    """
    if len(accs) < 2:
        raise ValueError("need at least two accuracies")
    var = float(np.var(np.asarray(accs, dtype=np.float64)))
    if var == 0.0:
        return -math.inf
    return math.log(var)


class _ConvClassifierNet(nn.Module):
    """Embedding, parallel convolutions over n-gram windows, max-over-time."""

    def __init__(self, vocab_size, n_classes, emb_dim, windows, num_filters):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, emb_dim)
        self.convs = nn.ModuleList(
            nn.Conv1d(emb_dim, num_filters, kernel_size=w) for w in windows
        )
        self.out = nn.Linear(num_filters * len(windows), n_classes)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        emb = self.embedding(ids).transpose(1, 2)
        pooled = [torch.relu(conv(emb)).max(dim=2).values for conv in self.convs]
        return self.out(torch.cat(pooled, dim=1))


class ConvTextClassifier(BaseEstimator, ClassifierMixin):
    """Convolutional sentence classifier used for condition accuracy.

    Windows of 3/4/5 words with 100 feature maps each, max-pooled over time
    into a linear softmax.  A held-out fraction of the training data gives
    ``validation_accuracy_``.
    """

    def __init__(
        self,
        emb_dim: int = 128,
        num_filters: int = 100,
        windows: tuple[int, ...] = (3, 4, 5),
        lr: float = 1e-3,
        epochs: int = 5,
        batch_size: int = 64,
        max_vocab: int = 10000,
        val_fraction: float = 0.1,
        seed: int = 0,
    ):
        self.emb_dim = emb_dim
        self.num_filters = num_filters
        self.windows = windows
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_vocab = max_vocab
        self.val_fraction = val_fraction
        self.seed = seed

    def _encode_batch(self, token_lists: list[list[str]]) -> torch.Tensor:
        min_len = max(self.windows)
        width = max(min_len, max((len(t) for t in token_lists), default=min_len))
        ids = torch.full((len(token_lists), width), PAD_ID, dtype=torch.long)
        for row, tokens in enumerate(token_lists):
            for col, tok in enumerate(tokens):
                ids[row, col] = self.vocab_.id_for(tok)
        return ids

    def fit(self, texts, labels):
        texts = list(texts)
        labels = list(labels)
        if len(labels) != len(texts):
            raise ValueError("texts and labels must align")
        self.classes_ = sorted(set(labels))
        if len(self.classes_) < 2:
            raise ValueError("need at least two distinct labels")
        class_to_idx = {c: i for i, c in enumerate(self.classes_)}

        token_lists = [tokenize(t) for t in texts]
        self.vocab_ = build_vocabulary(token_lists, self.max_vocab)
        targets = np.array([class_to_idx[l] for l in labels], dtype=np.int64)

        rng = numpy_rng(self.seed, "classifier", "data")
        order = rng.permutation(len(token_lists))
        n_val = max(1, int(len(order) * self.val_fraction))
        val_idx, train_idx = order[:n_val], order[n_val:]
        if len(train_idx) == 0:
            raise ValueError("not enough samples to train")

        self.net_ = _ConvClassifierNet(
            len(self.vocab_), len(self.classes_), self.emb_dim, self.windows, self.num_filters
        )
        init_parameters_(self.net_, torch_generator(self.seed, "classifier", "init"))
        opt = torch.optim.Adam(self.net_.parameters(), lr=self.lr)
        loss_fn = nn.CrossEntropyLoss()
        for _ in range(self.epochs):
            epoch_order = rng.permutation(train_idx)
            for start in range(0, len(epoch_order), self.batch_size):
                rows = epoch_order[start : start + self.batch_size]
                ids = self._encode_batch([token_lists[i] for i in rows])
                logits = self.net_(ids)
                loss = loss_fn(logits, torch.from_numpy(targets[rows]))
                opt.zero_grad()
                loss.backward()
                opt.step()

        val_tokens = [token_lists[i] for i in val_idx]
        with torch.no_grad():
            preds = self.net_(self._encode_batch(val_tokens)).argmax(dim=1).numpy()
        self.validation_accuracy_ = float((preds == targets[val_idx]).mean())
        return self

    def predict(self, texts) -> np.ndarray:
        check_fitted(self, "net_")
        token_lists = [tokenize(t) for t in texts]
        if not token_lists:
            return np.array([], dtype=object)
        with torch.no_grad():
            idx = self.net_(self._encode_batch(token_lists)).argmax(dim=1).numpy()
        return np.array([self.classes_[i] for i in idx], dtype=object)


def train_condition_classifier(labeled: list[tuple[str, str]], **params) -> ConvTextClassifier:
    """Fit a classifier from (label, sentence) pairs; see ConvTextClassifier."""
    labels = [l for l, _ in labeled]
    texts = [t for _, t in labeled]
    return ConvTextClassifier(**params).fit(texts, labels)


def classifier_accuracy(texts: list[str], condition: str, classifier: ConvTextClassifier) -> float:
    """Fraction of texts the classifier assigns to ``condition``.

    Empty texts are counted as incorrect regardless of the classifier.
    """
    check_fitted(classifier, "net_")
    if condition not in classifier.classes_:
        raise ValueError(f"unknown condition: {condition!r}")
    if not texts:
        raise ValueError("empty text list")
    non_empty = [t for t in texts if tokenize(t)]
    if not non_empty:
        return 0.0
    preds = classifier.predict(non_empty)
    return float((preds == condition).sum()) / len(texts)


@dataclass
class EvaluationReport:
    """Metric bundle for one evaluation run.

    Distinct-1/2 are reported pooled over all conditions (headline) and per
    condition.  ``log_variance`` is -inf when all accuracies are equal, and
    None when there is only one condition.
    """

    task: str
    accuracy: dict[str, float]
    log_variance: float | None
    distinct1: float
    distinct2: float
    per_condition_distinct1: dict[str, float] = field(default_factory=dict)
    per_condition_distinct2: dict[str, float] = field(default_factory=dict)
    sample_counts: dict[str, int] = field(default_factory=dict)

    def _log_variance_cell(self) -> str | float | None:
        if self.log_variance == -math.inf:
            return "all-equal"
        return self.log_variance

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "accuracy": self.accuracy,
            "mean_accuracy": sum(self.accuracy.values()) / len(self.accuracy),
            "log_variance": self._log_variance_cell(),
            "distinct1": self.distinct1,
            "distinct2": self.distinct2,
            "per_condition_distinct1": self.per_condition_distinct1,
            "per_condition_distinct2": self.per_condition_distinct2,
            "sample_counts": self.sample_counts,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        header = f"{'Condition':<14}{'Accuracy':>10}{'Distinct-1':>12}{'Distinct-2':>12}{'Samples':>9}"
        lines = [header, "-" * len(header)]
        for cond in sorted(self.accuracy):
            lines.append(
                f"{cond:<14}{self.accuracy[cond]:>10.4f}"
                f"{self.per_condition_distinct1.get(cond, float('nan')):>12.4f}"
                f"{self.per_condition_distinct2.get(cond, float('nan')):>12.4f}"
                f"{self.sample_counts.get(cond, 0):>9d}"
            )
        lines.append("-" * len(header))
        mean_acc = sum(self.accuracy.values()) / len(self.accuracy)
        lv = self._log_variance_cell()
        lv_text = lv if isinstance(lv, str) else ("n/a" if lv is None else f"{lv:.2f}")
        lines.append(
            f"{'pooled':<14}{mean_acc:>10.4f}{self.distinct1:>12.4f}{self.distinct2:>12.4f}"
        )
        lines.append(f"log-variance of accuracy: {lv_text}")
        return "\n".join(lines) + "\n"


def evaluate(
    per_condition_texts: dict[str, list[str]],
    task: str = "length",
    classifier: ConvTextClassifier | None = None,
) -> EvaluationReport:
    """Assemble the full metric report over per-condition generations.

    Length accuracy is computed from word counts; any other task requires a
    trained classifier.  Sub-metric errors propagate.
    """
    if not per_condition_texts:
        raise ValueError("no conditions to evaluate")
    for cond, texts in per_condition_texts.items():
        if not texts:
            raise ValueError(f"condition {cond!r} has no texts")

    accuracy = {}
    for cond, texts in per_condition_texts.items():
        if task == "length":
            accuracy[cond] = length_accuracy(texts, cond)
        else:
            if classifier is None:
                raise ValueError(f"task {task!r} requires a classifier")
            accuracy[cond] = classifier_accuracy(texts, cond, classifier)

    log_var = (
        accuracy_log_variance(list(accuracy.values())) if len(accuracy) >= 2 else None
    )
    pooled = [t for texts in per_condition_texts.values() for t in texts]
    return EvaluationReport(
        task=task,
        accuracy=accuracy,
        log_variance=log_var,
        distinct1=distinct_n(pooled, 1),
        distinct2=distinct_n(pooled, 2),
        per_condition_distinct1={
            c: distinct_n(t, 1) for c, t in per_condition_texts.items()
        },
        per_condition_distinct2={
            c: distinct_n(t, 2) for c, t in per_condition_texts.items()
        },
        sample_counts={c: len(t) for c, t in per_condition_texts.items()},
    )
