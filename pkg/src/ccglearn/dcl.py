"""Discriminative complementary learning: corrected cross-entropy training.

The classifier g outputs a simplex vector per example.  Ordinary labels use
plain cross-entropy; complementary labels use cross-entropy of the
forward-corrected output M^T g against the complementary label.  Both risks
have multi-label variants normalized by the total label count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .diffcore import (DivergenceError, Mlp, MlpSpec, Optimizer,
                       OptimizerConfig, PROB_FLOOR, Tensor, sgd_defaults,
                       softmax_cross_entropy)
from .labels import (Complementary, ComplementaryDataset, Ordinary,
                     TransitionMatrix)
from .priors import check_simplex


class RiskError(ValueError):
    pass


@dataclass
class TrainReport:
    seed: int
    config_hash: str
    train_loss: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    wall_time: float = 0.0

    def append(self, loss: float, acc: float) -> None:
        self.train_loss.append(loss)
        self.test_acc.append(acc)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "test_acc"])
            for i, (l, a) in enumerate(zip(self.train_loss, self.test_acc)):
                writer.writerow([i, repr(l), repr(a)])


def default_classifier_spec(d: int, K: int) -> MlpSpec:
    return MlpSpec(widths=(d, 64, 64, K), activation="relu", head="softmax")


# ---------------------------------------------------------------------------
# Losses and risks
# ---------------------------------------------------------------------------

def _ordinary_ce(model: Mlp, x: np.ndarray, y: np.ndarray) -> Tensor:
    return softmax_cross_entropy(model.forward(x), y)


def _complementary_ce(logits: Tensor, ybar: np.ndarray,
                      transition) -> Tensor:
    """Corrected CE on logits; ``transition`` is a matrix Tensor/array.

    Differentiable through both the logits and (when a Tensor) the matrix.
    """
    probs = logits.softmax()
    m = transition if isinstance(transition, Tensor) else Tensor(np.asarray(transition))
    corrected = (probs @ m).clip_min(PROB_FLOOR)
    return -(corrected.pick(ybar).log().mean())


def ordinary_ce_risk(model: Mlp, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy of the softmax output against ordinary labels."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise RiskError("empty batch")
    return _ordinary_ce(model, x, np.asarray(y, dtype=np.int64)).item()


def complementary_ce_loss(g: np.ndarray, ybar: int,
                          transition: TransitionMatrix) -> float:
    """CE of M^T g against one complementary label, floored at 1e-12."""
    g = check_simplex(g)
    corrected = g @ transition.matrix
    return float(-np.log(max(corrected[ybar], PROB_FLOOR)))


def complementary_risk(model: Mlp, dataset: ComplementaryDataset,
                       transition: TransitionMatrix) -> float:
    """Mean corrected CE over labeled examples, first complementary label only."""
    idx = dataset.indices("complementary")
    if idx.size == 0:
        raise RiskError("dataset carries no complementary labels")
    ybar = np.array([dataset.evidence[i].labels[0] for i in idx], dtype=np.int64)
    logits = model.forward(dataset.features[idx])
    return _complementary_ce(logits, ybar, transition.matrix).item()


def multi_complementary_risk(model: Mlp, dataset: ComplementaryDataset,
                             transition: TransitionMatrix) -> float:
    """Corrected CE summed over every complementary label, divided by the
    total label count (reduces to :func:`complementary_risk` when each
    example carries one label)."""
    rows = []
    labels = []
    for i, e in enumerate(dataset.evidence):
        if isinstance(e, Complementary):
            for lab in e.labels:
                rows.append(i)
                labels.append(lab)
    if not rows:
        raise RiskError("dataset carries no complementary labels")
    logits = model.forward(dataset.features[np.asarray(rows)])
    return _complementary_ce(logits, np.asarray(labels, dtype=np.int64),
                             transition.matrix).item()


def evaluate_accuracy(model: Mlp, x: np.ndarray, y: np.ndarray) -> float:
    """Fraction of argmax-correct predictions; ties break to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise RiskError("empty test set")
    pred = np.argmax(model.predict_proba(x), axis=1)
    return float(np.mean(pred == np.asarray(y, dtype=np.int64)))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _epoch_seed(seed: int, epoch: int) -> int:
    # splitmix64-style mix so streams for different epochs are decoupled
    z = (seed + 0x9E3779B97F4A7C15 * (epoch + 1)) % (1 << 64)
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % (1 << 64)
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % (1 << 64)
    return (z ^ (z >> 31)) % (1 << 64)


def _batch_loss(model: Mlp, dataset: ComplementaryDataset,
                batch_idx: np.ndarray, transition) -> Tensor:
    """Mixed-evidence batch loss with equal per-example weight.

    Ordinary examples contribute plain CE; complementary examples contribute
    the mean corrected CE over their labels.
    """
    ord_rows, ord_labels = [], []
    comp_rows, comp_labels, comp_weights = [], [], []
    for i in batch_idx:
        e = dataset.evidence[i]
        if isinstance(e, Ordinary):
            ord_rows.append(i)
            ord_labels.append(e.label)
        elif isinstance(e, Complementary):
            w = 1.0 / len(e.labels)
            for lab in e.labels:
                comp_rows.append(i)
                comp_labels.append(lab)
                comp_weights.append(w)
    n_units = len(ord_rows) + len(set(comp_rows))
    if n_units == 0:
        raise RiskError("batch carries no labeled examples")
    parts = []
    if ord_rows:
        logits = model.forward(dataset.features[np.asarray(ord_rows)])
        probs = logits.softmax().clip_min(PROB_FLOOR)
        parts.append(-(probs.pick(np.asarray(ord_labels)).log().sum()))
    if comp_rows:
        logits = model.forward(dataset.features[np.asarray(comp_rows)])
        m = transition if isinstance(transition, Tensor) else Tensor(np.asarray(transition))
        corrected = (logits.softmax() @ m).clip_min(PROB_FLOOR)
        weighted = corrected.pick(np.asarray(comp_labels)).log() * Tensor(np.asarray(comp_weights))
        parts.append(-(weighted.sum()))
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total * (1.0 / n_units)


def train_dcl(dataset: ComplementaryDataset, transition: TransitionMatrix,
              cfg: OptimizerConfig | None = None, epochs: int = 40,
              seed: int = 0, spec: MlpSpec | None = None,
              eval_set=None):
    """Train a classifier on mixed ordinary/complementary evidence.

    Deterministic given ``seed``; each epoch reshuffles the labeled pool from
    a seed derived per epoch.  Returns the model and a per-epoch report.
    """
    if cfg is None:
        cfg = sgd_defaults()
    if spec is None:
        K = transition.K
        spec = default_classifier_spec(dataset.d, K)
    rng = np.random.default_rng(seed)
    model = Mlp(spec, rng, name="C")
    report = train_classifier_inplace(model, dataset, transition.matrix, cfg,
                                      epochs, seed, eval_set)
    return model, report


def train_classifier_inplace(model: Mlp, dataset: ComplementaryDataset,
                             transition, cfg: OptimizerConfig, epochs: int,
                             seed: int, eval_set=None,
                             optimizer: Optimizer | None = None) -> TrainReport:
    """Shared epoch loop used by both the DCL baseline and the GAN warm-up."""
    labeled = dataset.indices("labeled")
    if labeled.size == 0:
        raise RiskError("dataset carries no labeled examples")
    opt = optimizer if optimizer is not None else Optimizer(model.parameters(), cfg)
    report = TrainReport(seed=seed, config_hash=f"{cfg.kind}-{cfg.lr}-{epochs}")
    for epoch in range(epochs):
        erng = np.random.default_rng(_epoch_seed(seed, epoch))
        order = labeled[erng.permutation(labeled.size)]
        losses = []
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss = _batch_loss(model, dataset, batch, transition)
            if not np.isfinite(loss.item()):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        acc = (evaluate_accuracy(model, *eval_set) if eval_set is not None
               else float("nan"))
        report.append(float(np.mean(losses)), acc)
    return report
