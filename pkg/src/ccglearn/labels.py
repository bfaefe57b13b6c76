"""Transition matrices, complementary-label generation, and dataset splitting.

A complementary label names a class an example does *not* belong to.  The
K x K transition matrix M has M[i, j] = P(complementary = j | true = i); rows
are stochastic and the diagonal is zero.  Given a classifier output g on the
probability simplex, the forward-corrected output is M^T g, which is the
complementary-label distribution implied by g.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9
COND_LIMIT = 1e6


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise LabelError(f"transition matrix must be K x K with K >= 2, got {m.shape}")
        if np.any(m < 0):
            raise LabelError("transition matrix entries must be nonnegative")
        if np.any(np.abs(np.diag(m)) > 0):
            raise LabelError("transition matrix diagonal must be zero")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise LabelError("transition matrix rows must sum to 1")

    @property
    def K(self) -> int:
        return self.matrix.shape[0]

    def is_full_rank(self, cond_limit: float = COND_LIMIT) -> bool:
        return bool(np.linalg.cond(self.matrix) < cond_limit)


def uniform_transition(K: int) -> TransitionMatrix:
    """Every wrong class equally likely: off-diagonal 1/(K-1), diagonal 0."""
    if K < 2:
        raise LabelError("K must be >= 2")
    m = np.full((K, K), 1.0 / (K - 1))
    np.fill_diagonal(m, 0.0)
    return TransitionMatrix(m)


def restricted_uniform_transition(K: int, m: int, seed: int) -> TransitionMatrix:
    """Per row, m randomly chosen off-diagonal candidate classes get 1/m."""
    if not 1 <= m <= K - 1:
        raise LabelError(f"candidate count m={m} out of range for K={K}")
    rng = np.random.default_rng(seed)
    mat = np.zeros((K, K))
    for i in range(K):
        candidates = np.delete(np.arange(K), i)
        chosen = rng.choice(candidates, size=m, replace=False)
        mat[i, chosen] = 1.0 / m
    return TransitionMatrix(mat)


def random_transition(K: int, seed: int) -> TransitionMatrix:
    """Dirichlet rows over the off-diagonal slots, resampled until well conditioned."""
    if K < 2:
        raise LabelError("K must be >= 2")
    rng = np.random.default_rng(seed)
    while True:
        mat = np.zeros((K, K))
        for i in range(K):
            row = rng.dirichlet(np.ones(K - 1))
            mat[i, np.arange(K) != i] = row
        if np.linalg.cond(mat) < COND_LIMIT:
            return TransitionMatrix(mat)


@dataclass(frozen=True)
class Ordinary:
    label: int


@dataclass(frozen=True)
class Complementary:
    labels: tuple

    def __post_init__(self):
        labs = tuple(int(v) for v in self.labels)
        if not labs:
            raise LabelError("complementary evidence must carry at least one label")
        if len(set(labs)) != len(labs):
            raise LabelError("complementary labels must be distinct")
        object.__setattr__(self, "labels", labs)


def generate_complementary(labels, transition: TransitionMatrix,
                           labels_per_example: int = 1, seed: int = 0,
                           rng: np.random.Generator | None = None):
    """Draw complementary evidence for each true label from its row of M.

    For multiple labels per example the draws are without replacement, with
    the remaining row mass renormalized after each draw; taking all K-1
    labels therefore pins down the ordinary label exactly.
    """
    labels = np.asarray(labels, dtype=np.int64)
    K = transition.K
    c = labels_per_example
    if not 1 <= c <= K - 1:
        raise LabelError(f"labels_per_example={c} out of range for K={K}")
    if rng is None:
        rng = np.random.default_rng(seed)
    out = []
    for y in labels:
        row = transition.matrix[y].copy()
        if np.count_nonzero(row) < c:
            raise LabelError(
                f"row {y} of M has fewer than {c} nonzero entries")
        drawn = []
        for _ in range(c):
            probs = row / row.sum()
            ybar = int(rng.choice(K, p=probs))
            drawn.append(ybar)
            row[ybar] = 0.0
        out.append(Complementary(tuple(drawn)))
    return out


@dataclass
class ComplementaryDataset:
    """Features plus per-example label evidence.

    ``evidence[i]`` is ``Ordinary``, ``Complementary``, or ``None`` for
    unlabeled examples.  Ground-truth labels are retained for evaluation only
    and must be read through :meth:`eval_true_labels`.
    """

    features: np.ndarray
    evidence: list
    r_l: float
    r_c: float
    seed: int
    _true_labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self._true_labels = np.asarray(self._true_labels, dtype=np.int64)
        if len(self.evidence) != self.features.shape[0]:
            raise LabelError("evidence length must match feature count")
        if self._true_labels.shape[0] != self.features.shape[0]:
            raise LabelError("true-label length must match feature count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def eval_true_labels(self) -> np.ndarray:
        """Evaluation-only accessor; training code must not call this."""
        return self._true_labels.copy()

    def indices(self, kind: str) -> np.ndarray:
        if kind == "ordinary":
            pred = lambda e: isinstance(e, Ordinary)
        elif kind == "complementary":
            pred = lambda e: isinstance(e, Complementary)
        elif kind == "labeled":
            pred = lambda e: e is not None
        elif kind == "unlabeled":
            pred = lambda e: e is None
        else:
            raise ValueError(f"unknown evidence kind {kind!r}")
        return np.array([i for i, e in enumerate(self.evidence) if pred(e)],
                        dtype=np.int64)


def split_dataset(features, labels, r_l: float, r_c: float, seed: int,
                  transition: TransitionMatrix | None = None,
                  labels_per_example: int = 1) -> ComplementaryDataset:
    """Partition a fully-labeled pool into ordinary / complementary / unlabeled.

    floor(n * r_l) examples keep some label; of those, floor(labeled * r_c)
    get complementary evidence drawn through ``transition`` (uniform by
    default) and the rest keep their ordinary label.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if not 0 < r_l <= 1:
        raise LabelError("r_l must lie in (0, 1]")
    if not 0 <= r_c <= 1:
        raise LabelError("r_c must lie in [0, 1]")
    n = features.shape[0]
    n_labeled = int(np.floor(n * r_l))
    if n_labeled == 0:
        raise LabelError("r_l too small: labeled set is empty")
    n_comp = int(np.floor(n_labeled * r_c))
    K = int(labels.max()) + 1
    if transition is None:
        transition = uniform_transition(K)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    comp_idx = perm[:n_comp]
    ord_idx = perm[n_comp:n_labeled]
    evidence: list = [None] * n
    comp_evidence = generate_complementary(labels[comp_idx], transition,
                                           labels_per_example, rng=rng)
    for i, ev in zip(comp_idx, comp_evidence):
        evidence[i] = ev
    for i in ord_idx:
        evidence[i] = Ordinary(int(labels[i]))
    return ComplementaryDataset(features=features, evidence=evidence,
                                r_l=r_l, r_c=r_c, seed=seed,
                                _true_labels=labels)


def forward_correct(transition: TransitionMatrix, g: np.ndarray) -> np.ndarray:
    """Map simplex output g to the implied complementary distribution M^T g.

    Accepts a single vector or a batch of row vectors.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape[-1] != transition.K:
        raise LabelError(
            f"dimension mismatch: g has {g.shape[-1]} entries, M is {transition.K} x {transition.K}")
    return g @ transition.matrix


def effective_sample_size(n: float, K: int) -> float:
    """Ordinary-label sample count carrying the same information: n / (K - 1)."""
    if n < 0:
        raise LabelError("n must be nonnegative")
    if K < 2:
        raise LabelError("K must be >= 2")
    return n / (K - 1)


# ---------------------------------------------------------------------------
# Serialization: JSON header line then a raw little-endian f64 feature blob.
# ---------------------------------------------------------------------------

def save_dataset(dataset: ComplementaryDataset, path) -> None:
    evidence_json = []
    for e in dataset.evidence:
        if e is None:
            evidence_json.append(None)
        elif isinstance(e, Ordinary):
            evidence_json.append({"ordinary": e.label})
        else:
            evidence_json.append({"complementary": list(e.labels)})
    header = {
        "n": dataset.n,
        "d": dataset.d,
        "K": int(dataset._true_labels.max()) + 1,
        "r_l": dataset.r_l,
        "r_c": dataset.r_c,
        "seed": dataset.seed,
        "evidence": evidence_json,
        "true_labels": dataset._true_labels.tolist(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())


def load_dataset(path) -> ComplementaryDataset:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    header = json.loads(header_line.decode("utf-8"))
    n, d = header["n"], header["d"]
    features = np.frombuffer(blob, dtype="<f8")
    if features.size != n * d:
        raise LabelError(
            f"feature blob has {features.size} values, expected {n * d}")
    evidence: list = []
    for e in header["evidence"]:
        if e is None:
            evidence.append(None)
        elif "ordinary" in e:
            evidence.append(Ordinary(int(e["ordinary"])))
        else:
            evidence.append(Complementary(tuple(e["complementary"])))
    return ComplementaryDataset(
        features=features.reshape(n, d).copy(),
        evidence=evidence,
        r_l=header["r_l"],
        r_c=header["r_c"],
        seed=header["seed"],
        _true_labels=np.asarray(header["true_labels"], dtype=np.int64),
    )
