"""Command-line entry points for data generation, training, verification,
and plotting."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .. import ccgan as ccgan_mod
from .. import dcl as dcl_mod
from ..diffcore import save_checkpoint
from ..divergence import DiscreteJoint, verify_theorem1_chain
from ..labels import (load_dataset, random_transition, save_dataset,
                      split_dataset, uniform_transition)
from ..priors import empirical_complementary_prior, estimate_prior_qp
from . import seeds as seedlib
from .data import gen_mixture, ring_mixture_spec
from .experiment import ExperimentConfig, dump_generated_samples, run_experiment
from .plotting import emit_scatter_svg


def _cmd_gen_data(args) -> int:
    spec = ring_mixture_spec(args.k, args.radius, args.sigma)
    features, labels = gen_mixture(spec, args.n, args.seed)
    ds = split_dataset(features, labels, args.r_l, args.r_c,
                       seedlib.derive(args.seed, 4),
                       uniform_transition(args.k), args.labels_per_example)
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: n={ds.n} d={ds.d} K={args.k}")
    return 0


def _load_training_inputs(args):
    ds = load_dataset(args.data)
    K = int(ds.eval_true_labels().max()) + 1
    transition = uniform_transition(K)
    spec = ring_mixture_spec(K)
    x_test, y_test = gen_mixture(spec, 2000, seedlib.derive(args.seed, 2))
    return ds, K, transition, (x_test, y_test)


def _cmd_train_dcl(args) -> int:
    ds, K, transition, eval_set = _load_training_inputs(args)
    model, report = dcl_mod.train_dcl(ds, transition, epochs=args.epochs,
                                      seed=args.seed, eval_set=eval_set)
    os.makedirs(args.out, exist_ok=True)
    report.to_csv(os.path.join(args.out, "report.csv"))
    save_checkpoint(os.path.join(args.out, "classifier.ckpt"),
                    model.state_dict())
    print(f"final test accuracy {report.test_acc[-1]:.4f}")
    return 0


def _cmd_train_gan(args, semi: bool) -> int:
    ds, K, transition, eval_set = _load_training_inputs(args)
    p_bar = empirical_complementary_prior(ds, K)
    prior = estimate_prior_qp(p_bar, transition).estimate
    bundle = ccgan_mod.make_bundle(K, ds.d, args.seed, prior=prior,
                                   transition=transition)
    schedule = ccgan_mod.ScheduleConfig(warmup_epochs=args.warmup_epochs,
                                        joint_epochs=args.joint_epochs)
    train = ccgan_mod.train_sccgan if semi else ccgan_mod.train_ccgan
    bundle, report = train(ds, bundle, schedule, seed=args.seed,
                           eval_set=eval_set)
    os.makedirs(args.out, exist_ok=True)
    report.to_csv(os.path.join(args.out, "report.csv"))
    state = {}
    for net in (bundle.G, bundle.D, bundle.C):
        state.update(net.state_dict())
    save_checkpoint(os.path.join(args.out, "bundle.ckpt"), state)
    if ds.d == 2:
        cfg = ExperimentConfig(K=K, out_dir=args.out)
        dump_generated_samples(cfg, bundle, ds, args.out)
    print(f"final test accuracy {report.test_acc[-1]:.4f}")
    return 0


def _cmd_estimate_prior(args) -> int:
    ds = load_dataset(args.data)
    K = int(ds.eval_true_labels().max()) + 1
    transition = uniform_transition(K)
    p_bar = empirical_complementary_prior(ds, K)
    sol = estimate_prior_qp(p_bar, transition)
    print(json.dumps({
        "estimate": sol.estimate.tolist(),
        "residual": sol.residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }, indent=2))
    return 0


def _cmd_verify_bound(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    last_report = None
    for _ in range(args.instances):
        n_x = int(rng.integers(2, 7))
        K = int(rng.integers(2, 5))
        p = DiscreteJoint(rng.dirichlet(np.ones(n_x * K)).reshape(n_x, K))
        q = DiscreteJoint(rng.dirichlet(np.ones(n_x * K)).reshape(n_x, K))
        q_prime = rng.dirichlet(np.ones(K), size=n_x)
        transition = random_transition(K, int(rng.integers(1 << 31)))
        report = verify_theorem1_chain(p, q, q_prime, transition)
        last_report = report
        if not report.all_hold:
            failures += 1
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(last_report.to_json())
    print(f"{args.instances - failures}/{args.instances} instances hold")
    return 0 if failures == 0 else 1


def _cmd_run_grid(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.out:
        cfg.out_dir = args.out
    out = run_experiment(cfg, workers=args.workers)
    print(f"grid complete: {out}")
    return 0


def _cmd_plot(args) -> int:
    emit_scatter_svg(args.samples, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccglearn")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="sample a ring mixture and assign evidence")
    g.add_argument("--k", type=int, default=8)
    g.add_argument("--n", type=int, default=6000)
    g.add_argument("--radius", type=float, default=2.0)
    g.add_argument("--sigma", type=float, default=0.35)
    g.add_argument("--r-l", type=float, default=1.0, dest="r_l")
    g.add_argument("--r-c", type=float, default=1.0, dest="r_c")
    g.add_argument("--labels-per-example", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_gen_data)

    for name, semi in (("train-ccgan", False), ("train-sccgan", True)):
        t = sub.add_parser(name)
        t.add_argument("--data", required=True)
        t.add_argument("--warmup-epochs", type=int, default=40)
        t.add_argument("--joint-epochs", type=int, default=100)
        t.add_argument("--seed", type=int, default=0)
        t.add_argument("--out", required=True)
        t.set_defaults(fn=lambda a, s=semi: _cmd_train_gan(a, s))

    t = sub.add_parser("train-dcl")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=_cmd_train_dcl)

    e = sub.add_parser("estimate-prior")
    e.add_argument("--data", required=True)
    e.set_defaults(fn=_cmd_estimate_prior)

    v = sub.add_parser("verify-bound")
    v.add_argument("--instances", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None)
    v.set_defaults(fn=_cmd_verify_bound)

    r = sub.add_parser("run-grid")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(fn=_cmd_run_grid)

    pl = sub.add_parser("plot")
    pl.add_argument("--samples", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(fn=_cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
