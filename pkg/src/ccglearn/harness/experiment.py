"""Experiment orchestration: config handling, grid runs, CSV/SVG artifacts.

A grid is the cross product (method x r_l x seed).  Every cell is
deterministic given the resolved config, so rerunning a grid from its
``resolved_config.json`` reproduces the CSVs byte for byte.  Cells may run in
parallel; failures are recorded per cell without killing the grid.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import ccgan as ccgan_mod
from .. import dcl as dcl_mod
from ..diffcore import OptimizerConfig, sgd_defaults
from ..labels import (TransitionMatrix, random_transition,
                      restricted_uniform_transition, split_dataset,
                      uniform_transition)
from ..priors import empirical_complementary_prior, estimate_prior_qp
from . import seeds as seedlib
from .data import bayes_accuracy_oracle, gen_mixture, ring_mixture_spec
from .plotting import emit_scatter_svg, require_2d, write_samples_csv

VALID_METHODS = ("ordinary", "dcl", "ccgan", "sccgan")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    K: int = 8
    ring_radius: float = 2.0
    ring_sigma: float = 0.35
    n: int = 6000
    n_test: int = 4000
    r_l: list = field(default_factory=lambda: [1.0])
    r_c: float = 1.0
    labels_per_example: int = 1
    m_mode: str = "uniform"        # uniform | restricted | random | trainable
    restricted_m: int = 3
    m_seed: int = 7
    methods: list = field(default_factory=lambda: ["dcl"])
    seeds: list = field(default_factory=lambda: [0])
    dcl_epochs: int = 40
    warmup_epochs: int = 40
    joint_epochs: int = 100
    batch_size: int = 128
    sgd_lr: float = 1e-2
    adam_lr: float = 2e-4
    noise_dim: int = 16
    use_estimated_prior: bool = True
    out_dir: str = "out"

    def __post_init__(self):
        for m in self.methods:
            if m not in VALID_METHODS:
                raise ConfigError(f"unknown method {m!r}")
        for r in self.r_l:
            if not 0 < r <= 1:
                raise ConfigError(f"r_l={r} out of range")
        if not 0 <= self.r_c <= 1:
            raise ConfigError(f"r_c={self.r_c} out of range")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.m_mode not in ("uniform", "restricted", "random", "trainable"):
            raise ConfigError(f"unknown m_mode {self.m_mode!r}")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _true_transition(cfg: ExperimentConfig) -> TransitionMatrix:
    if cfg.m_mode == "uniform":
        return uniform_transition(cfg.K)
    if cfg.m_mode == "restricted":
        return restricted_uniform_transition(cfg.K, cfg.restricted_m, cfg.m_seed)
    # random and trainable both generate labels from a random true M
    return random_transition(cfg.K, cfg.m_seed)


def run_cell(cfg: ExperimentConfig, method: str, r_l: float, seed: int) -> dict:
    """Train one (method, r_l, seed) cell and return its summary row."""
    spec = ring_mixture_spec(cfg.K, cfg.ring_radius, cfg.ring_sigma)
    pool_seed = seedlib.derive(seed, 1)
    features, labels = gen_mixture(spec, cfg.n, pool_seed)
    x_test, y_test = gen_mixture(spec, cfg.n_test, seedlib.derive(seed, 2))
    eval_set = (x_test, y_test)

    # nested subsets: smaller r_l pools are prefixes of larger ones
    order = np.random.default_rng(seedlib.derive(seed, 3)).permutation(cfg.n)
    n_sub = int(np.floor(cfg.n * r_l))
    sub = order[:n_sub]

    true_m = _true_transition(cfg)
    row = {"method": method, "r_l": r_l, "seed": seed}

    if method == "ordinary":
        ds = split_dataset(features[sub], labels[sub], 1.0, 0.0,
                           seedlib.derive(seed, 4), true_m)
        model, _ = dcl_mod.train_dcl(
            ds, true_m, OptimizerConfig(kind="sgd", lr=cfg.sgd_lr, momentum=0.9,
                                        weight_decay=5e-4,
                                        batch_size=cfg.batch_size),
            epochs=cfg.dcl_epochs, seed=seedlib.derive(seed, 5),
            eval_set=eval_set)
        row["accuracy"] = dcl_mod.evaluate_accuracy(model, x_test, y_test)
        row["bayes"] = bayes_accuracy_oracle(spec, x_test, y_test)
        return row

    if method == "sccgan":
        # r_l of the pool labeled, the remainder kept as unlabeled features
        ds = split_dataset(features, labels, r_l, cfg.r_c,
                           seedlib.derive(seed, 4), true_m,
                           cfg.labels_per_example)
    else:
        ds = split_dataset(features[sub], labels[sub], 1.0, cfg.r_c,
                           seedlib.derive(seed, 4), true_m,
                           cfg.labels_per_example)

    if method == "dcl":
        model, _ = dcl_mod.train_dcl(
            ds, true_m, OptimizerConfig(kind="sgd", lr=cfg.sgd_lr, momentum=0.9,
                                        weight_decay=5e-4,
                                        batch_size=cfg.batch_size),
            epochs=cfg.dcl_epochs, seed=seedlib.derive(seed, 5),
            eval_set=eval_set)
        row["accuracy"] = dcl_mod.evaluate_accuracy(model, x_test, y_test)
        row["bayes"] = bayes_accuracy_oracle(spec, x_test, y_test)
        return row

    # ccgan / sccgan
    trainable = cfg.m_mode == "trainable"
    transition = ccgan_mod.TrainableM(cfg.K) if trainable else true_m
    if cfg.use_estimated_prior:
        p_bar = empirical_complementary_prior(ds, cfg.K)
        m_for_prior = uniform_transition(cfg.K) if trainable else true_m
        prior = estimate_prior_qp(p_bar, m_for_prior).estimate
    else:
        prior = spec.prior
    schedule = ccgan_mod.ScheduleConfig(
        warmup_epochs=cfg.warmup_epochs, joint_epochs=cfg.joint_epochs,
        batch_size=cfg.batch_size,
        warmup_opt=OptimizerConfig(kind="sgd", lr=cfg.sgd_lr, momentum=0.9,
                                   weight_decay=5e-4,
                                   batch_size=cfg.batch_size),
        joint_opt=OptimizerConfig(kind="adam", lr=cfg.adam_lr, beta1=0.5,
                                  beta2=0.999, batch_size=cfg.batch_size),
        noise_dim=cfg.noise_dim)
    bundle = ccgan_mod.make_bundle(cfg.K, ds.d, seedlib.derive(seed, 5),
                                   prior=prior, transition=transition,
                                   noise_dim=cfg.noise_dim)
    train_fn = ccgan_mod.train_sccgan if method == "sccgan" else ccgan_mod.train_ccgan
    bundle, report = train_fn(ds, bundle, schedule,
                              seed=seedlib.derive(seed, 5),
                              eval_set=eval_set, true_transition=true_m)
    row["accuracy"] = dcl_mod.evaluate_accuracy(bundle.C, x_test, y_test)
    row["bayes"] = bayes_accuracy_oracle(spec, x_test, y_test)
    if trainable:
        row["m_error"] = ccgan_mod.m_recovery_error(bundle.transition, true_m)
    return row


def _cell_wrapper(args):
    cfg_dict, method, r_l, seed = args
    cfg = ExperimentConfig(**cfg_dict)
    try:
        return run_cell(cfg, method, r_l, seed)
    except Exception as exc:  # record per-cell failure, keep the grid alive
        return {"method": method, "r_l": r_l, "seed": seed,
                "accuracy": float("nan"), "error": f"{type(exc).__name__}: {exc}"}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> str:
    """Run the full grid; returns the output directory path."""
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    cfg.to_json(os.path.join(out, "resolved_config.json"))

    cells = [(asdict(cfg), method, r_l, seed)
             for method in cfg.methods
             for r_l in cfg.r_l
             for seed in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_cell_wrapper, cells))
    else:
        rows = [_cell_wrapper(c) for c in cells]
    rows.sort(key=lambda r: (r["method"], r["r_l"], r["seed"]))

    metrics_path = os.path.join(out, "metrics.csv")
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "r_l", "seed", "accuracy", "bayes",
                         "m_error", "error"])
        for r in rows:
            writer.writerow([r["method"], repr(float(r["r_l"])), r["seed"],
                             repr(float(r["accuracy"])),
                             repr(float(r.get("bayes", float("nan")))),
                             repr(float(r.get("m_error", float("nan")))),
                             r.get("error", "")])

    summary_path = os.path.join(out, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "r_l", "mean_accuracy", "std_accuracy",
                         "n_seeds"])
        keys = sorted({(r["method"], r["r_l"]) for r in rows})
        for method, r_l in keys:
            accs = [r["accuracy"] for r in rows
                    if r["method"] == method and r["r_l"] == r_l
                    and "error" not in r]
            if accs:
                writer.writerow([method, repr(float(r_l)),
                                 repr(float(np.mean(accs))),
                                 repr(float(np.std(accs))), len(accs)])
            else:
                writer.writerow([method, repr(float(r_l)), "nan", "nan", 0])
    return out


def dump_generated_samples(cfg: ExperimentConfig, bundle, dataset,
                           out_dir: str, n_per_class: int = 50) -> str:
    """Write a real-vs-generated samples CSV and its SVG scatter."""
    require_2d(dataset.features)
    labels = np.repeat(np.arange(cfg.K), n_per_class)
    gen = ccgan_mod.generate_samples(bundle, labels, seed=12345)
    csv_path = os.path.join(out_dir, "samples.csv")
    true_labels = dataset.eval_true_labels()
    write_samples_csv(csv_path, dataset.features, true_labels, gen, labels)
    svg_path = os.path.join(out_dir, "samples.svg")
    emit_scatter_svg(csv_path, svg_path)
    return csv_path
