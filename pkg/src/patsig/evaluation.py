"""Validation suites: signature-based classification with a placebo control,
and shared-attribute pair comparisons with Welch significance tests."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._io import atomic_write
from .errors import ConfigError, CorpusError
from .records import PatentRecord
from .similarity import cosine
from .vectorstore import VectorStore

DEFAULT_HIDDEN_SIZES = (512, 256, 128)


# -- multilayer perceptron ---------------------------------------------------


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def mlp_forward(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], X: np.ndarray
) -> list[np.ndarray]:
    """Layer activations: ReLU hiddens, softmax output. Returns all layers."""
    activations = [X]
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = activations[-1] @ W + b
        if i < len(weights) - 1:
            activations.append(np.maximum(0.0, z))
        else:
            activations.append(_softmax(z))
    return activations


def mlp_loss_and_gradients(
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    X: np.ndarray,
    Y: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean cross-entropy over the batch and its analytic gradients."""
    activations = mlp_forward(weights, biases, X)
    probs = activations[-1]
    n = X.shape[0]
    loss = float(-np.sum(Y * np.log(np.maximum(probs, 1e-300))) / n)
    grad_ws: list[np.ndarray] = [np.empty(0)] * len(weights)
    grad_bs: list[np.ndarray] = [np.empty(0)] * len(biases)
    delta = (probs - Y) / n
    for layer in range(len(weights) - 1, -1, -1):
        grad_ws[layer] = activations[layer].T @ delta
        grad_bs[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (activations[layer] > 0.0)
    return loss, grad_ws, grad_bs


class MlpClassifier(BaseEstimator, ClassifierMixin):
    """Fully-connected softmax classifier trained by mini-batch SGD with momentum.

    Three ReLU hidden layers by default; training is sequential and seeded,
    so a fixed seed reproduces identical weights.
    """

    def __init__(
        self,
        hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES,
        epochs: int = 30,
        batch_size: int = 64,
        learning_rate: float = 0.05,
        momentum: float = 0.9,
        seed: int | None = None,
    ):
        self.hidden_sizes = hidden_sizes
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed

    def fit(self, X, y) -> "MlpClassifier":
        if self.seed is None:
            raise ConfigError("a fixed RNG seed is required for training")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ConfigError(f"{y.shape[0]} labels for {X.shape[0]} vectors")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        n_classes = len(self.classes_)
        if n_classes < 2:
            raise ConfigError("need at least 2 classes to train a classifier")

        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        dims = [X.shape[1], *self.hidden_sizes, n_classes]
        self.weights_ = [
            rng.normal(0.0, math.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1]))
            for i in range(len(dims) - 1)
        ]
        self.biases_ = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]

        onehot = np.zeros((X.shape[0], n_classes))
        onehot[np.arange(X.shape[0]), y_idx] = 1.0

        velocity_w = [np.zeros_like(W) for W in self.weights_]
        velocity_b = [np.zeros_like(b) for b in self.biases_]
        n = X.shape[0]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start:start + self.batch_size]
                _, grad_ws, grad_bs = mlp_loss_and_gradients(
                    self.weights_, self.biases_, X[batch], onehot[batch]
                )
                for layer in range(len(self.weights_)):
                    velocity_w[layer] = (
                        self.momentum * velocity_w[layer] - self.learning_rate * grad_ws[layer]
                    )
                    velocity_b[layer] = (
                        self.momentum * velocity_b[layer] - self.learning_rate * grad_bs[layer]
                    )
                    self.weights_[layer] += velocity_w[layer]
                    self.biases_[layer] += velocity_b[layer]
            if not all(np.isfinite(W).all() for W in self.weights_):
                raise FloatingPointError("classifier training diverged to non-finite weights")
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=np.float64)
        return mlp_forward(self.weights_, self.biases_, X)[-1]

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


# -- metrics -----------------------------------------------------------------


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalMetrics:
    per_class: dict[str, ClassMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def save_tsv(self, path) -> None:
        with atomic_write(path, "w") as handle:
            handle.write("class\tprecision\trecall\tf1\tsupport\n")
            for label, m in self.per_class.items():
                handle.write(f"{label}\t{m.precision:.6f}\t{m.recall:.6f}\t{m.f1:.6f}\t{m.support}\n")
            total = sum(m.support for m in self.per_class.values())
            handle.write(
                f"weighted\t{self.weighted_precision:.6f}\t{self.weighted_recall:.6f}\t"
                f"{self.weighted_f1:.6f}\t{total}\n"
            )


def classification_metrics(y_true, y_pred) -> EvalMetrics:
    """Per-class precision/recall/F1 and their support-weighted means."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ConfigError("y_true and y_pred must have the same length")
    labels = sorted(set(y_true.tolist()) | set(y_pred.tolist()))
    per_class: dict[str, ClassMetrics] = {}
    weighted = np.zeros(3)
    total_support = 0
    for label in labels:
        true_mask = y_true == label
        pred_mask = y_pred == label
        tp = int(np.sum(true_mask & pred_mask))
        fp = int(np.sum(~true_mask & pred_mask))
        fn = int(np.sum(true_mask & ~pred_mask))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        support = int(true_mask.sum())
        per_class[str(label)] = ClassMetrics(precision, recall, f1, support)
        weighted += support * np.array([precision, recall, f1])
        total_support += support
    if total_support == 0:
        raise ConfigError("no true labels to evaluate")
    weighted /= total_support
    return EvalMetrics(per_class, float(weighted[0]), float(weighted[1]), float(weighted[2]))


def evaluate_classifier(clf: MlpClassifier, X, y) -> EvalMetrics:
    """Argmax predictions scored against labels; warns on unseen classes."""
    y = np.asarray(y)
    unseen = set(y.tolist()) - set(clf.classes_.tolist())
    if unseen:
        warnings.warn(
            f"{len(unseen)} class(es) in the evaluation split were absent from training",
            stacklevel=2,
        )
    return classification_metrics(y, clf.predict(X))


def placebo_shift(vectors, labels) -> tuple[np.ndarray, np.ndarray]:
    """Pair vector i with the label of observation i+1 (cyclically)."""
    vectors = np.asarray(vectors)
    labels = np.asarray(labels)
    if labels.shape[0] != vectors.shape[0]:
        raise ConfigError("vectors and labels must have the same length")
    if labels.shape[0] < 2:
        raise ConfigError("placebo shift needs at least 2 observations")
    return vectors, np.roll(labels, -1)


def split_holdout(X, y, fraction: float = 0.2, seed: int | None = None):
    """Seeded shuffle split into (X_train, y_train, X_eval, y_eval)."""
    if not (0.0 < fraction < 1.0):
        raise ConfigError(f"holdout fraction must be in (0, 1), got {fraction}")
    if seed is None:
        raise ConfigError("a seed is required for the holdout split")
    X = np.asarray(X)
    y = np.asarray(y)
    order = np.random.default_rng(np.random.SeedSequence(seed)).permutation(len(y))
    n_eval = max(1, int(round(len(y) * fraction)))
    eval_idx, train_idx = order[:n_eval], order[n_eval:]
    return X[train_idx], y[train_idx], X[eval_idx], y[eval_idx]


# -- Welch's t-test ----------------------------------------------------------


class WelchResult(NamedTuple):
    statistic: float
    pvalue: float
    dof: float


def welch_t_test(a, b) -> WelchResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ConfigError("each sample needs at least 2 observations")
    mean_a, mean_b = a.mean(), b.mean()
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    if var_a == 0.0 and var_b == 0.0:
        if mean_a == mean_b:
            return WelchResult(0.0, 1.0, math.inf)
        return WelchResult(math.copysign(math.inf, mean_a - mean_b), 0.0, math.inf)
    sa = var_a / a.size
    sb = var_b / b.size
    t = (mean_a - mean_b) / math.sqrt(sa + sb)
    dof = (sa + sb) ** 2 / (
        (sa**2 / (a.size - 1) if sa else 0.0) + (sb**2 / (b.size - 1) if sb else 0.0)
    )
    p = 2.0 * float(stats.t.sf(abs(t), dof))
    return WelchResult(float(t), p, float(dof))


# -- shared-attribute pair sampling ------------------------------------------


def _ipc_keys(level: str) -> Callable[[PatentRecord], set[str]]:
    attr = {
        "ipc_class": "class_key",
        "ipc_subclass": "subclass_key",
        "ipc_group": "group_key",
        "ipc_subgroup": "subgroup_key",
    }[level]
    return lambda record: {getattr(code, attr) for code in record.ipc_codes}


_ATTRIBUTE_CONDITIONS: dict[str, Callable[[PatentRecord], set[str]]] = {
    "ipc_class": _ipc_keys("ipc_class"),
    "ipc_subclass": _ipc_keys("ipc_subclass"),
    "ipc_group": _ipc_keys("ipc_group"),
    "ipc_subgroup": _ipc_keys("ipc_subgroup"),
    "inventor": lambda r: set(r.inventors),
    "assignee": lambda r: set(r.assignees),
}

CONDITIONS = (*_ATTRIBUTE_CONDITIONS, "citation")


@dataclass
class PairSample:
    """Equal-size positive (condition true) and negative pair samples with scores."""

    condition: str
    positives: list[tuple[str, str, float]] = field(default_factory=list)
    negatives: list[tuple[str, str, float]] = field(default_factory=list)

    @property
    def positive_scores(self) -> np.ndarray:
        return np.array([s for _, _, s in self.positives], dtype=np.float64)

    @property
    def negative_scores(self) -> np.ndarray:
        return np.array([s for _, _, s in self.negatives], dtype=np.float64)


def _positive_pairs(
    condition: str, universe: list[str], by_id: Mapping[str, PatentRecord]
) -> tuple[set[tuple[str, str]], Callable[[str, str], bool]]:
    if condition == "citation":
        universe_set = set(universe)
        pairs = set()
        for rid in universe:
            for cited in by_id[rid].citations:
                if cited in universe_set and cited != rid:
                    pairs.add((min(rid, cited), max(rid, cited)))

        def predicate(i: str, j: str) -> bool:
            return j in by_id[i].citations or i in by_id[j].citations

        return pairs, predicate

    if condition not in _ATTRIBUTE_CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}; choose from {CONDITIONS}")
    key_fn = _ATTRIBUTE_CONDITIONS[condition]
    groups: dict[str, list[str]] = {}
    for rid in universe:
        for key in key_fn(by_id[rid]):
            groups.setdefault(key, []).append(rid)
    for key, members in groups.items():
        if len(members) == len(universe) and len(universe) > 1:
            raise CorpusError(
                f"condition {condition!r} is always true (attribute {key!r} is shared "
                "by every patent); cannot sample negative pairs"
            )
    pairs = set()
    for members in groups.values():
        for i, j in combinations(members, 2):
            pairs.add((min(i, j), max(i, j)))

    def predicate(i: str, j: str) -> bool:
        return bool(key_fn(by_id[i]) & key_fn(by_id[j]))

    return pairs, predicate


def sample_condition_pairs(
    records: Sequence[PatentRecord],
    store: VectorStore,
    condition: str,
    n: int,
    seed: int | None = None,
) -> PairSample:
    """Positive pairs satisfying the condition, matched with an equal-size
    seeded random sample of pairs that violate it.

    Similarities come straight from the stored vectors (not the thresholded
    graph), so sub-threshold values are observable. Sentinel vectors are
    excluded from the pair universe.
    """
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    if seed is None:
        raise ConfigError("a seed is required for pair sampling")
    if n == 0:
        return PairSample(condition)
    by_id = {r.id: r for r in records}
    universe = [rid for rid in store.ids if rid in by_id and not store.is_zero(rid)]
    if len(universe) < 2:
        raise CorpusError("need at least 2 scorable patents to sample pairs")

    positives_set, predicate = _positive_pairs(condition, universe, by_id)
    positives = sorted(positives_set)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if len(positives) > n:
        chosen = rng.choice(len(positives), size=n, replace=False)
        positives = [positives[i] for i in sorted(chosen)]
    elif len(positives) < n:
        warnings.warn(
            f"condition {condition!r}: only {len(positives)} positive pairs exist "
            f"(requested {n}); shrinking both samples",
            stacklevel=2,
        )
    if not positives:
        raise CorpusError(f"condition {condition!r} is never true; no positive pairs exist")

    target = len(positives)
    negatives: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    max_attempts = max(10_000, 200 * target)
    attempts = 0
    while len(negatives) < target and attempts < max_attempts:
        attempts += 1
        i, j = rng.choice(len(universe), size=2, replace=False)
        pair = (min(universe[i], universe[j]), max(universe[i], universe[j]))
        if pair in seen or pair in positives_set or predicate(*pair):
            continue
        seen.add(pair)
        negatives.append(pair)
    if len(negatives) < target:
        if not negatives:
            raise CorpusError(
                f"condition {condition!r} is always true; cannot sample negative pairs"
            )
        raise CorpusError(
            f"condition {condition!r}: found only {len(negatives)} negative pairs "
            f"after {attempts} draws (need {target})"
        )

    def scored(pairs: list[tuple[str, str]]) -> list[tuple[str, str, float]]:
        return [(i, j, cosine(store.vector(i), store.vector(j))) for i, j in pairs]

    return PairSample(condition, scored(positives), scored(negatives))


# -- relational report ---------------------------------------------------------


@dataclass
class RelationalRow:
    condition: str
    mean_shared: float
    mean_not_shared: float
    t_statistic: float
    p_value: float

    @property
    def inverted(self) -> bool:
        """True when the shared-attribute mean fails to exceed the random mean."""
        return self.mean_shared <= self.mean_not_shared


def relational_report(samples: Sequence[PairSample]) -> list[RelationalRow]:
    rows = []
    for sample in samples:
        pos = sample.positive_scores
        neg = sample.negative_scores
        result = welch_t_test(pos, neg)
        rows.append(
            RelationalRow(
                sample.condition,
                float(pos.mean()),
                float(neg.mean()),
                result.statistic,
                result.pvalue,
            )
        )
    return rows


def save_relational_tsv(rows: Sequence[RelationalRow], path) -> None:
    with atomic_write(path, "w") as handle:
        handle.write("condition\tshared\tnot_shared\tt\tp\n")
        for row in rows:
            handle.write(
                f"{row.condition}\t{row.mean_shared:.6f}\t{row.mean_not_shared:.6f}\t"
                f"{row.t_statistic:.6f}\t{row.p_value:.6g}\n"
            )
