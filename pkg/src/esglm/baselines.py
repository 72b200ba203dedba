"""Comparison models: majority-class prediction and multinomial Naive Bayes.

Both consume the same extracted excerpt text as the transformer, as raw
word-level token counts (not WordPiece pieces).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyDataset, InvalidConfig
from .tokenizer import pretokenize


@dataclass(frozen=True)
class CommonClassModel:
    predicted_class: str
    class_counts: dict[str, int]


def fit_predict_common_class(
    train_labels: list[str], eval_labels: list[str]
) -> tuple[CommonClassModel, float]:
    """Majority-class predictor; ties go to the lexicographically smaller label.

    Returns the model and its accuracy on eval_labels.  On the training
    labels themselves the accuracy is exactly the majority frequency.
    """
    if not train_labels:
        raise EmptyDataset("no training labels")
    counts = Counter(train_labels)
    top = max(counts.values())
    predicted = min(label for label, c in counts.items() if c == top)
    model = CommonClassModel(predicted_class=predicted, class_counts=dict(counts))
    if not eval_labels:
        return model, 0.0
    accuracy = sum(1 for y in eval_labels if y == predicted) / len(eval_labels)
    return model, accuracy


@dataclass(frozen=True)
class NaiveBayesModel:
    classes: tuple[str, ...]
    log_priors: dict[str, float]
    log_likelihoods: dict[str, dict[str, float]]
    vocabulary: frozenset[str]
    alpha: float


def word_bag(text: str) -> Counter:
    """Word-level token counts from the shared pre-tokenizer."""
    return Counter(pretokenize(text))


def fit_naive_bayes(
    train: list[tuple[Counter, str]], alpha: float = 1.0
) -> NaiveBayesModel:
    """Multinomial NB with Laplace smoothing alpha over the seen vocabulary.

    P(t|c) = (n_tc + alpha) / (n_c + alpha * |V|).
    """
    if alpha <= 0:
        raise InvalidConfig(f"alpha must be > 0, got {alpha}")
    if not train:
        raise EmptyDataset("no training documents")
    class_docs = Counter(label for _, label in train)
    classes = tuple(sorted(class_docs))
    vocabulary = frozenset(t for bag, _ in train for t in bag)
    token_counts: dict[str, Counter] = {c: Counter() for c in classes}
    for bag, label in train:
        token_counts[label].update(bag)

    total_docs = len(train)
    v = len(vocabulary)
    log_priors = {c: math.log(class_docs[c] / total_docs) for c in classes}
    log_likelihoods: dict[str, dict[str, float]] = {}
    for c in classes:
        n_c = sum(token_counts[c].values())
        denom = n_c + alpha * v
        log_likelihoods[c] = {
            t: math.log((token_counts[c][t] + alpha) / denom) for t in vocabulary
        }
    return NaiveBayesModel(
        classes=classes, log_priors=log_priors,
        log_likelihoods=log_likelihoods, vocabulary=vocabulary, alpha=alpha,
    )


def class_log_scores(model: NaiveBayesModel, bag: Counter) -> dict[str, float]:
    """log P(c) + sum over known tokens of count * log P(t|c).

    Tokens unseen at training time are ignored.
    """
    scores = {}
    for c in model.classes:
        s = model.log_priors[c]
        lik = model.log_likelihoods[c]
        for t, n in bag.items():
            if t in model.vocabulary:
                s += n * lik[t]
        scores[c] = s
    return scores


def predict(model: NaiveBayesModel, bag: Counter) -> str:
    """Argmax class; ties go to the lexicographically smaller label."""
    scores = class_log_scores(model, bag)
    best = max(scores.values())
    return min(c for c, s in scores.items() if s == best)


def nb_accuracy(model: NaiveBayesModel, rows: list[tuple[Counter, str]]) -> float:
    if not rows:
        return 0.0
    return sum(1 for bag, label in rows if predict(model, bag) == label) / len(rows)
