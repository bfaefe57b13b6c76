"""Complementary conditional GAN: generator, discriminator, and a classifier
trained through the transition matrix, optimized jointly.

The objective has three components:

  (a) adversarial matching of the data marginal: D scores real features
      against samples from G(z, y); G gets the non-saturating form.
  (b) corrected cross-entropy of M^T C(x) against complementary labels
      (pure discriminative complementary learning).
  (c) ordinary cross-entropy of C on generated samples against their
      conditioning labels; gradients reach both G and C.

Training runs in two stages: a classifier warm-up on (b) alone, then
alternating D / G / C updates on the full objective.  The transition matrix
can be a fixed matrix or a trainable row-softmax parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import (DivergenceError, Mlp, MlpSpec, Optimizer,
                       OptimizerConfig, Tensor, adam_defaults, sgd_defaults)
from .dcl import (TrainReport, _batch_loss, _complementary_ce, _epoch_seed,
                  default_classifier_spec, evaluate_accuracy,
                  train_classifier_inplace)
from .labels import ComplementaryDataset, TransitionMatrix, uniform_transition
from .priors import check_simplex


class GanConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GanLossSpec:
    phi: str = "log"               # log | hinge
    label_smoothing: float = 0.0   # eps for D's real targets, log loss only

    def __post_init__(self):
        if self.phi not in ("log", "hinge"):
            raise GanConfigError(f"unknown phi {self.phi!r}")
        if not 0.0 <= self.label_smoothing <= 0.3:
            raise GanConfigError("label smoothing must lie in [0, 0.3]")


@dataclass
class ScheduleConfig:
    warmup_epochs: int = 40
    joint_epochs: int = 100
    d_steps: int = 1
    batch_size: int = 128
    warmup_opt: OptimizerConfig = field(default_factory=sgd_defaults)
    joint_opt: OptimizerConfig = field(default_factory=adam_defaults)
    loss_spec: GanLossSpec = field(default_factory=GanLossSpec)
    use_unlabeled: bool = False
    # unit weights on (a), (b), (c) unless ablating
    weight_a: float = 1.0
    weight_b: float = 1.0
    weight_c: float = 1.0
    # weight of (c) inside the classifier update; None means weight_c
    weight_c_classifier: float | None = None
    noise_dim: int = 16

    @property
    def wc_classifier(self) -> float:
        return (self.weight_c if self.weight_c_classifier is None
                else self.weight_c_classifier)

    def __post_init__(self):
        if self.warmup_epochs < 0:
            raise GanConfigError("warm-up epochs must be >= 0")
        if self.d_steps < 1:
            raise GanConfigError("need at least one D step per G step")


class TrainableM:
    """Row-stochastic zero-diagonal matrix via softmax over off-diagonal logits."""

    def __init__(self, K: int):
        self.K = K
        # zeros realize the uniform transition (maximum-entropy start)
        self.logits = Tensor(np.zeros((K, K - 1)), requires_grad=True)

    def parameters(self):
        return [self.logits]

    def realize(self) -> Tensor:
        K = self.K
        sm = self.logits.softmax()  # (K, K-1) row softmax
        # scatter each row's K-1 slots into the K columns off the diagonal
        out_rows = []
        for i in range(K):
            scatter = np.zeros((K - 1, K))
            cols = [j for j in range(K) if j != i]
            for slot, j in enumerate(cols):
                scatter[slot, j] = 1.0
            out_rows.append(sm.slice_rows(i, i + 1) @ Tensor(scatter))
        return Tensor.concat(out_rows, axis=0)

    def matrix(self) -> np.ndarray:
        return self.realize().data

    def as_transition(self) -> TransitionMatrix:
        return TransitionMatrix(self.matrix())


@dataclass
class CcganBundle:
    G: Mlp
    D: Mlp
    C: Mlp
    transition: TransitionMatrix | TrainableM
    prior: np.ndarray
    K: int
    noise_dim: int

    def transition_values(self):
        """Matrix as a Tensor (trainable) or ndarray (fixed)."""
        if isinstance(self.transition, TrainableM):
            return self.transition.realize()
        return self.transition.matrix


def make_bundle(K: int, data_dim: int, seed: int,
                prior: np.ndarray | None = None,
                transition: TransitionMatrix | TrainableM | None = None,
                noise_dim: int = 16,
                classifier_spec: MlpSpec | None = None,
                generator_widths=(64, 64),
                discriminator_widths=(64, 64)) -> CcganBundle:
    """Build G, D, C with seeds derived so C matches a bare DCL run.

    C is initialized from the master seed exactly as ``train_dcl`` does, so a
    warm-up-only run reproduces the DCL trajectory bit for bit.
    """
    if prior is None:
        prior = np.full(K, 1.0 / K)
    prior = check_simplex(prior)
    if transition is None:
        transition = uniform_transition(K)
    c_spec = classifier_spec or default_classifier_spec(data_dim, K)
    C = Mlp(c_spec, np.random.default_rng(seed), name="C")
    g_spec = MlpSpec(widths=(noise_dim + K, *generator_widths, data_dim),
                     activation="relu", head="linear")
    d_spec = MlpSpec(widths=(data_dim, *discriminator_widths, 1),
                     activation="leaky_relu", head="sigmoid")
    G = Mlp(g_spec, np.random.default_rng(_epoch_seed(seed, 101)), name="G")
    D = Mlp(d_spec, np.random.default_rng(_epoch_seed(seed, 202)), name="D")
    return CcganBundle(G=G, D=D, C=C, transition=transition, prior=prior,
                       K=K, noise_dim=noise_dim)


# ---------------------------------------------------------------------------
# Sampling and loss components
# ---------------------------------------------------------------------------

def sample_labels(prior: np.ndarray, batch: int,
                  rng: np.random.Generator) -> np.ndarray:
    """I.i.d. categorical draws from the class prior."""
    prior = check_simplex(prior)
    return rng.choice(prior.size, size=batch, p=prior)


def one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= K):
        raise GanConfigError("label out of range for one-hot encoding")
    out = np.zeros((labels.size, K))
    out[np.arange(labels.size), labels] = 1.0
    return out


def generator_forward(G: Mlp, z: np.ndarray, y: np.ndarray, K: int) -> Tensor:
    """G applied to noise concatenated with the one-hot conditioning label."""
    z = np.asarray(z, dtype=np.float64)
    return G.forward(np.concatenate([z, one_hot(y, K)], axis=1))


def loss_component_a(D: Mlp, real: np.ndarray, fake: Tensor,
                     spec: GanLossSpec | None = None):
    """Adversarial losses for the marginal-matching component.

    Returns ``(d_loss, g_loss)``.  ``d_loss`` treats the fake batch as
    constant; ``g_loss`` is the non-saturating generator form (log) or the
    raw-score form (hinge) and differentiates through ``fake``.
    """
    spec = spec or GanLossSpec()
    if np.asarray(real).shape[0] == 0 or fake.data.shape[0] == 0:
        raise GanConfigError("adversarial batches must be nonempty")
    s_real = D.forward(real)
    fake_const = Tensor(fake.data)
    s_fake_d = D.forward(fake_const)
    s_fake_g = D.forward(fake)
    if spec.phi == "log":
        eps = spec.label_smoothing
        # -log D(x) = softplus(-s); -log(1 - D(x)) = softplus(s)
        real_term = ((-s_real).softplus() * (1.0 - eps)
                     + s_real.softplus() * eps).mean()
        d_loss = real_term + s_fake_d.softplus().mean()
        g_loss = (-s_fake_g).softplus().mean()
    else:
        d_loss = (1.0 - s_real).relu().mean() + (1.0 + s_fake_d).relu().mean()
        g_loss = -(s_fake_g.mean())
    return d_loss, g_loss


def loss_component_b(C: Mlp, transition, x: np.ndarray,
                     ybar: np.ndarray) -> Tensor:
    """Corrected complementary CE of C on real features (delegates to the
    discriminative loss)."""
    logits = C.forward(x)
    return _complementary_ce(logits, np.asarray(ybar, dtype=np.int64),
                             transition)


def loss_component_c(C: Mlp, fake: Tensor, y: np.ndarray) -> Tensor:
    """Ordinary CE of C on generated samples against conditioning labels."""
    from .diffcore import softmax_cross_entropy

    return softmax_cross_entropy(C.forward(fake), y)


def m_recovery_error(estimated, true) -> float:
    """Frobenius distance between two transition matrices."""
    a = estimated.matrix() if isinstance(estimated, TrainableM) else \
        np.asarray(getattr(estimated, "matrix", estimated), dtype=np.float64)
    b = np.asarray(getattr(true, "matrix", true), dtype=np.float64)
    if a.shape != b.shape:
        raise GanConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class GanTrainReport(TrainReport):
    d_loss: list = field(default_factory=list)
    g_loss: list = field(default_factory=list)
    m_error: list = field(default_factory=list)


def _labeled_evidence_arrays(dataset: ComplementaryDataset):
    """Rows with complementary evidence, expanded one row per label with
    per-example averaging weights."""
    rows, labels, weights = [], [], []
    for i in dataset.indices("complementary"):
        e = dataset.evidence[i]
        w = 1.0 / len(e.labels)
        for lab in e.labels:
            rows.append(i)
            labels.append(lab)
            weights.append(w)
    return (np.asarray(rows, dtype=np.int64),
            np.asarray(labels, dtype=np.int64),
            np.asarray(weights))


def train_ccgan(dataset: ComplementaryDataset, bundle: CcganBundle,
                schedule: ScheduleConfig | None = None, seed: int = 0,
                eval_set=None, true_transition: TransitionMatrix | None = None,
                real_pool: np.ndarray | None = None):
    """Two-stage training of the full objective.  Deterministic per seed.

    ``real_pool`` optionally widens the adversarial real-data expectation
    (used by the semi-supervised variant); components (b) and (c) only ever
    see labeled data and generated data respectively.
    """
    schedule = schedule or ScheduleConfig()
    C, G, D = bundle.C, bundle.G, bundle.D

    report = GanTrainReport(seed=seed, config_hash=(
        f"ccgan-{schedule.warmup_epochs}-{schedule.joint_epochs}-"
        f"{schedule.joint_opt.lr}"))

    # Stage 1: classifier warm-up on component (b) only.  Shares the DCL
    # epoch loop, so a warm-up-only run equals a DCL run bit for bit.
    if schedule.warmup_epochs > 0:
        warm_transition = (bundle.transition.matrix()
                           if isinstance(bundle.transition, TrainableM)
                           else bundle.transition.matrix)
        warm = train_classifier_inplace(C, dataset, warm_transition,
                                        schedule.warmup_opt,
                                        schedule.warmup_epochs, seed,
                                        eval_set)
        for l, a in zip(warm.train_loss, warm.test_acc):
            report.append(l, a)
            report.d_loss.append(float("nan"))
            report.g_loss.append(float("nan"))
            report.m_error.append(
                m_recovery_error(bundle.transition, true_transition)
                if true_transition is not None else float("nan"))

    if schedule.joint_epochs == 0:
        return bundle, report

    # Stage 2: alternating D / G / C updates on the full objective.
    opt_d = Optimizer(D.parameters(), schedule.joint_opt)
    opt_g = Optimizer(G.parameters(), schedule.joint_opt)
    opt_c = Optimizer(C.parameters(), schedule.joint_opt)
    trainable_m = isinstance(bundle.transition, TrainableM)
    opt_m = (Optimizer(bundle.transition.parameters(), schedule.joint_opt)
             if trainable_m else None)

    comp_rows, comp_labels, comp_weights = _labeled_evidence_arrays(dataset)
    if comp_rows.size == 0 and dataset.indices("ordinary").size == 0:
        raise GanConfigError("dataset carries no labeled examples")
    if real_pool is None:
        real_pool = dataset.features[dataset.indices("labeled")]
    rng = np.random.default_rng(_epoch_seed(seed, 777))
    bs = schedule.batch_size
    n_batches = max(1, real_pool.shape[0] // bs)

    for epoch in range(schedule.joint_epochs):
        d_losses, g_losses, c_losses = [], [], []
        for _ in range(n_batches):
            # --- D steps (component a, ascent == minimize d_loss)
            for _ in range(schedule.d_steps):
                real = real_pool[rng.choice(real_pool.shape[0], size=bs)]
                y = sample_labels(bundle.prior, bs, rng)
                z = rng.standard_normal((bs, bundle.noise_dim))
                fake = generator_forward(G, z, y, bundle.K)
                d_loss, _ = loss_component_a(D, real, Tensor(fake.data),
                                             schedule.loss_spec)
                d_loss = d_loss * schedule.weight_a
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()
                d_losses.append(d_loss.item())

            # --- G step: adversarial part of (a) plus (c)
            y = sample_labels(bundle.prior, bs, rng)
            z = rng.standard_normal((bs, bundle.noise_dim))
            fake = generator_forward(G, z, y, bundle.K)
            _, g_adv = loss_component_a(D, real_pool[:1], fake,
                                        schedule.loss_spec)
            g_total = g_adv * schedule.weight_a + \
                loss_component_c(C, fake, y) * schedule.weight_c
            opt_g.zero_grad()
            opt_c.zero_grad()
            g_total.backward()
            opt_g.step()
            g_losses.append(g_total.item())

            # --- C step: (b) on labeled data plus (c) on fresh fakes
            m_values = bundle.transition_values()
            losses = []
            if comp_rows.size:
                take = rng.choice(comp_rows.size, size=min(bs, comp_rows.size),
                                  replace=False)
                x_b = dataset.features[comp_rows[take]]
                logits = C.forward(x_b)
                m = m_values if isinstance(m_values, Tensor) else Tensor(m_values)
                corrected = (logits.softmax() @ m).clip_min(1e-12)
                picked = corrected.pick(comp_labels[take]).log() * \
                    Tensor(comp_weights[take])
                losses.append(-(picked.mean()) * schedule.weight_b)
            ord_idx = dataset.indices("ordinary")
            if ord_idx.size:
                take = rng.choice(ord_idx.size, size=min(bs, ord_idx.size),
                                  replace=False)
                ord_labels = np.array([dataset.evidence[i].label
                                       for i in ord_idx[take]], dtype=np.int64)
                losses.append(loss_component_c(
                    C, Tensor(dataset.features[ord_idx[take]]), ord_labels)
                    * schedule.weight_b)
            y = sample_labels(bundle.prior, bs, rng)
            z = rng.standard_normal((bs, bundle.noise_dim))
            fake = generator_forward(G, z, y, bundle.K)
            losses.append(loss_component_c(C, Tensor(fake.data), y)
                          * schedule.wc_classifier)
            c_total = losses[0]
            for extra in losses[1:]:
                c_total = c_total + extra
            if not np.isfinite(c_total.item()):
                raise DivergenceError(
                    f"non-finite classifier loss at joint epoch {epoch}")
            opt_c.zero_grad()
            if opt_m is not None:
                opt_m.zero_grad()
            c_total.backward()
            opt_c.step()
            if opt_m is not None:
                opt_m.step()
            c_losses.append(c_total.item())

        acc = (evaluate_accuracy(C, *eval_set) if eval_set is not None
               else float("nan"))
        report.append(float(np.mean(c_losses)), acc)
        report.d_loss.append(float(np.mean(d_losses)))
        report.g_loss.append(float(np.mean(g_losses)))
        report.m_error.append(
            m_recovery_error(bundle.transition, true_transition)
            if true_transition is not None else float("nan"))
    return bundle, report


def train_sccgan(dataset: ComplementaryDataset, bundle: CcganBundle,
                 schedule: ScheduleConfig | None = None, seed: int = 0,
                 eval_set=None, true_transition=None):
    """CCGAN whose adversarial real-data pool also draws unlabeled features.

    Falls back to plain CCGAN (with a warning flag in the report hash) when
    the dataset has no unlabeled examples.
    """
    unlabeled = dataset.indices("unlabeled")
    if unlabeled.size == 0:
        bundle, report = train_ccgan(dataset, bundle, schedule, seed,
                                     eval_set, true_transition)
        report.config_hash += "+no-unlabeled-fallback"
        return bundle, report
    labeled = dataset.indices("labeled")
    pool = dataset.features[np.concatenate([labeled, unlabeled])]
    return train_ccgan(dataset, bundle, schedule, seed, eval_set,
                       true_transition, real_pool=pool)


def generate_samples(bundle: CcganBundle, labels: np.ndarray,
                     seed: int = 0) -> np.ndarray:
    """Draw one generated feature vector per conditioning label."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((labels.size, bundle.noise_dim))
    return generator_forward(bundle.G, z, labels, bundle.K).data
