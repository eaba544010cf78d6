"""Command-line surface for the training / attack / detection pipeline.

Subcommands:
    train-baseline  train one of the softmax classifiers on MNIST
    gen-codebook    generate and store a secret codebook
    train-knet      derive + retrain a key network from a baseline
    attack          generate adversarial examples against a baseline
    detect          run the detector over a stored adversarial batch
    sweep           retrain/evaluate key networks across code lengths
    overlap         label-overlap analysis on random or noisy inputs
    report          summarize the artifacts of a run directory

Exit codes: 0 success, 1 validation error (bad flags, missing or
malformed files), 2 runtime failure. Errors are single lines on stderr
of the form ``keynet: error: <message>``.

A JSON config file (--config) may predefine any flag by its dest name;
explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import stat
import sys
import time

import numpy as np

from . import codebook as cb_mod
from . import models
from .attacks import (
    AttackConfig,
    load_adversarial_batch,
    run_attack,
    save_adversarial_batch,
    select_correctly_classified,
)
from .data import IdxFormatError, load_mnist, noisy_variants, random_inputs
from .evaluate import (
    code_length_sweep,
    codebook_fingerprint,
    eval_accuracy,
    eval_detection_rate,
    evaluate_attacks,
    overlap_analysis,
    write_sweep_csv,
)
from .nn import CheckpointError, load_network, save_network


class UsageError(Exception):
    """Validation problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _log(msg):
    print(msg, flush=True)


def _make_run_dir(out_dir, run_name=None):
    """Create out_dir/<run>/ and atomically repoint the `latest` file."""
    name = run_name or time.strftime("%Y%m%d-%H%M%S", time.gmtime())
    run_dir = os.path.join(out_dir, name)
    os.makedirs(run_dir, exist_ok=True)
    pointer = os.path.join(out_dir, "latest")
    tmp = pointer + ".tmp"
    with open(tmp, "w") as f:
        f.write(name + "\n")
    os.replace(tmp, pointer)
    return run_dir


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_data(args):
    if not args.data_dir:
        raise UsageError("--data-dir is required for this command")
    return load_mnist(args.data_dir)


def _train_config(args, default_lr, default_momentum=0.9):
    momentum = args.momentum if args.momentum is not None else default_momentum
    return models.TrainConfig(
        learning_rate=args.lr if args.lr is not None else default_lr,
        batch_size=args.batch_size, epochs=args.epochs,
        seed=args.seed, momentum=momentum,
        optimizer="sgd-momentum" if momentum else "sgd")


def _add_train_flags(p, default_lr, default_momentum=0.9):
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=None,
                   help=f"learning rate (default {default_lr})")
    p.add_argument("--momentum", type=float, default=None,
                   help=f"momentum (default {default_momentum})")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)


def _add_common(p):
    p.add_argument("--out", default="runs", help="base output directory")
    p.add_argument("--run-name", default=None,
                   help="run subdirectory name (default: UTC timestamp)")
    p.add_argument("--data-dir", default=None,
                   help="directory with the four MNIST IDX files")


# ---------------------------------------------------------------- commands

def cmd_train_baseline(args):
    train_set, test_set = _load_data(args)
    run_dir = _make_run_dir(args.out, args.run_name)
    cfg = _train_config(args, default_lr=0.02)
    arch = models.normalize_arch(args.arch)
    net = models.build_network(arch, seed=args.seed)
    _log(f"training {arch} for {cfg.epochs} epochs "
         f"(lr={cfg.learning_rate}, batch={cfg.batch_size}, seed={cfg.seed})")
    history = models.train(net, train_set.images, train_set.labels, cfg,
                           eval_images=test_set.images,
                           eval_labels=test_set.labels, log=_log)
    acc = models.accuracy(net, test_set.images, test_set.labels)
    ckpt = os.path.join(run_dir, f"{arch}.ckpt")
    save_network(net, ckpt, meta={"architecture": arch, "seed": args.seed,
                                  "train_config": cfg.to_dict()})
    _write_json(os.path.join(run_dir, f"{arch}-manifest.json"), {
        "architecture": arch,
        "checkpoint": os.path.basename(ckpt),
        "train_config": cfg.to_dict(),
        "final_metrics": {"test_accuracy": acc,
                          "final_train_loss": history.epoch_loss[-1]
                          if history.epoch_loss else None},
    })
    _log(f"test accuracy: {acc:.4f}")
    _log(f"checkpoint: {ckpt}")
    return 0


def cmd_gen_codebook(args):
    cb = cb_mod.generate_codebook(args.classes, args.t, args.seed)
    cb_mod.save_codebook(cb, args.out_file)
    mode = stat.S_IMODE(os.stat(args.out_file).st_mode)
    if mode & (stat.S_IROTH | stat.S_IRGRP):
        print(f"keynet: warning: codebook {args.out_file} is readable by "
              f"others (mode {oct(mode)}); it is a secret key",
              file=sys.stderr)
    _log(f"codebook {cb.m}x{cb.t} seed={cb.seed} "
         f"fingerprint={codebook_fingerprint(cb)} "
         f"min-distance={cb_mod.min_pairwise_distance(cb)}")
    _log(f"written: {args.out_file}")
    return 0


def cmd_train_knet(args):
    train_set, test_set = _load_data(args)
    run_dir = _make_run_dir(args.out, args.run_name)
    baseline, _ = load_network(args.baseline)
    cb = cb_mod.load_codebook(args.codebook)
    cfg = _train_config(args, default_lr=models.KEY_RETRAIN_LR,
                        default_momentum=models.KEY_RETRAIN_MOMENTUM)
    knet = models.derive_key_network(baseline, cb, seed=args.seed)
    _log(f"retraining key network (t={cb.t}) for {cfg.epochs} epochs "
         f"(lr={cfg.learning_rate})")
    history = models.train(knet, train_set.images, train_set.labels, cfg,
                           codebook=cb, eval_images=test_set.images,
                           eval_labels=test_set.labels, log=_log)
    acc = eval_accuracy(knet, cb, test_set.images, test_set.labels, args.tau)
    ckpt = os.path.join(run_dir, "knet.ckpt")
    save_network(knet, ckpt, meta={"codebook_fingerprint":
                                   codebook_fingerprint(cb),
                                   "seed": args.seed,
                                   "train_config": cfg.to_dict()})
    _write_json(os.path.join(run_dir, "knet-manifest.json"), {
        "baseline_checkpoint": args.baseline,
        "codebook_file": args.codebook,
        "codebook_fingerprint": codebook_fingerprint(cb),
        "checkpoint": os.path.basename(ckpt),
        "train_config": cfg.to_dict(),
        "final_metrics": {"code_match_accuracy": acc,
                          "final_train_loss": history.epoch_loss[-1]
                          if history.epoch_loss else None},
    })
    _log(f"code-match accuracy (tau={args.tau}): {acc:.4f}")
    _log(f"checkpoint: {ckpt}")
    return 0


def _attack_config(args):
    return AttackConfig(
        kind=args.kind, epsilon=args.eps, r=args.r,
        max_iter=args.max_iter, overshoot=args.overshoot,
        kappa=args.kappa, binary_search_steps=args.binary_search_steps,
        max_inner_iter=args.inner_iter, inner_lr=args.inner_lr,
        initial_const=args.initial_const)


def cmd_attack(args):
    _, test_set = _load_data(args)
    run_dir = _make_run_dir(args.out, args.run_name)
    baseline, _ = load_network(args.baseline)
    config = _attack_config(args)
    idx = select_correctly_classified(baseline, test_set.images,
                                      test_set.labels, args.n)
    if len(idx) < args.n:
        _log(f"only {len(idx)} correctly classified test images available")
    _log(f"running {config.describe()} on {len(idx)} images")
    batch = run_attack(baseline, test_set.images[idx], test_set.labels[idx],
                       config, log=_log)
    adv_dir = os.path.join(run_dir, f"adv-{config.kind}")
    save_adversarial_batch(batch, adv_dir)
    _log(f"fooling rate: {batch.fooled.mean():.4f}")
    _log(f"adversarial batch: {adv_dir}")
    return 0


def cmd_detect(args):
    run_dir = _make_run_dir(args.out, args.run_name)
    knet, _ = load_network(args.knet)
    cb = cb_mod.load_codebook(args.codebook)
    batches = [load_adversarial_batch(d) for d in args.adv_dir]
    normal_images = normal_labels = None
    if args.data_dir:
        _, test_set = load_mnist(args.data_dir)
        normal_images, normal_labels = test_set.images, test_set.labels
    report = evaluate_attacks(None, knet, cb, batches, tau=args.tau,
                              normal_images=normal_images,
                              normal_labels=normal_labels)
    report.to_json(os.path.join(run_dir, "report.json"))
    report.to_csv(os.path.join(run_dir, "report.csv"))
    if report.accuracy is not None:
        _log(f"predictive accuracy (tau={args.tau}): {report.accuracy:.4f}")
    for row in report.attack_rows:
        _log(f"{row.attack}: fooling={row.fooling_rate:.4f} "
             f"detection={row.detection_rate:.4f} (n={row.n})")
    _log(f"report: {os.path.join(run_dir, 'report.json')}")
    return 0


def cmd_sweep(args):
    train_set, test_set = _load_data(args)
    run_dir = _make_run_dir(args.out, args.run_name)
    baseline, _ = load_network(args.baseline)
    lengths = [int(v) for v in args.lengths.split(",") if v]
    if not lengths:
        raise UsageError("--lengths must name at least one code length")
    cfg = _train_config(args, default_lr=models.KEY_RETRAIN_LR,
                        default_momentum=models.KEY_RETRAIN_MOMENTUM)
    kinds = [k.strip() for k in args.attacks.split(",") if k.strip()]
    attack_configs = [AttackConfig(kind=k, epsilon=args.eps, kappa=args.kappa,
                                   binary_search_steps=args.binary_search_steps,
                                   max_inner_iter=args.inner_iter)
                      for k in kinds]
    points = code_length_sweep(baseline, lengths, train_set, test_set,
                               attack_configs, cfg, seed=args.seed,
                               n_attack=args.n_attack, tau=args.tau, log=_log)
    write_sweep_csv(points, os.path.join(run_dir, "sweep.csv"))
    _write_json(os.path.join(run_dir, "sweep.json"), [{
        "code_length": p.code_length,
        "accuracy": p.accuracy,
        "detection_rates": p.detection_rates,
        "fooling_rates": p.fooling_rates,
    } for p in points])
    _log(f"sweep results: {os.path.join(run_dir, 'sweep.csv')}")
    return 0


def cmd_overlap(args):
    run_dir = _make_run_dir(args.out, args.run_name)
    reference, _ = load_network(args.reference)
    others = {}
    for path in args.others:
        net, meta = load_network(path)
        name = meta.get("architecture") or os.path.splitext(
            os.path.basename(path))[0]
        others[name] = net
    knet = cb = None
    if args.knet:
        if not args.codebook:
            raise UsageError("--codebook is required with --knet")
        knet, _ = load_network(args.knet)
        cb = cb_mod.load_codebook(args.codebook)
    if args.mode == "random":
        inputs = random_inputs(args.n, args.seed)
    else:
        _, test_set = _load_data(args)
        rng = np.random.default_rng(args.seed)
        base = args.n // args.k
        idx = rng.choice(len(test_set.images), size=base, replace=False)
        inputs = noisy_variants(test_set.images[idx], k=args.k,
                                seed=args.seed)
    counts = overlap_analysis(reference, others, inputs, knet=knet, cb=cb,
                              tau=args.tau)
    payload = {"mode": args.mode, "n": int(len(inputs)), "counts": counts}
    _write_json(os.path.join(run_dir, "overlap.json"), payload)
    for name, count in counts.items():
        _log(f"{name}: {count}/{len(inputs)} overlap "
             f"({count / len(inputs):.2%})")
    return 0


def cmd_report(args):
    found = False
    for root, _, files in sorted(os.walk(args.run)):
        for fname in sorted(files):
            if fname.endswith(".json"):
                found = True
                path = os.path.join(root, fname)
                with open(path) as f:
                    payload = json.load(f)
                _log(f"== {path}")
                _log(json.dumps(payload, indent=2, sort_keys=True))
    if not found:
        raise UsageError(f"no JSON artifacts under {args.run}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser():
    parser = _Parser(prog="keynet",
                     description="key-based network defense pipeline")
    parser.add_argument("--config", default=None,
                        help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-baseline", help="train a softmax classifier")
    _add_common(p)
    p.add_argument("--arch", default="1", help="1|2|3|4 or baselineN")
    _add_train_flags(p, default_lr=0.02)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("gen-codebook", help="generate a secret codebook")
    p.add_argument("--t", type=int, required=True, help="code length in bits")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--out-file", default="codebook.json")
    p.set_defaults(func=cmd_gen_codebook)

    p = sub.add_parser("train-knet", help="derive and retrain a key network")
    _add_common(p)
    p.add_argument("--baseline", required=True, help="baseline checkpoint")
    p.add_argument("--codebook", required=True, help="codebook JSON file")
    p.add_argument("--tau", type=int, default=0)
    _add_train_flags(p, default_lr=models.KEY_RETRAIN_LR,
                     default_momentum=models.KEY_RETRAIN_MOMENTUM)
    p.set_defaults(func=cmd_train_knet)

    p = sub.add_parser("attack", help="generate adversarial examples")
    _add_common(p)
    p.add_argument("--baseline", required=True)
    p.add_argument("--kind", required=True, choices=("fgsm", "deepfool",
                                                     "carlini"))
    p.add_argument("--n", type=int, default=500,
                   help="number of correctly classified test images")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--overshoot", type=float, default=0.02)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--binary-search-steps", type=int, default=6)
    p.add_argument("--inner-iter", type=int, default=200)
    p.add_argument("--inner-lr", type=float, default=5e-2)
    p.add_argument("--initial-const", type=float, default=1e-2)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("detect", help="detect over stored adversarial dirs")
    _add_common(p)
    p.add_argument("--knet", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--adv-dir", action="append", required=True,
                   help="adversarial batch directory (repeatable)")
    p.add_argument("--tau", type=int, default=0)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("sweep", help="code-length sweep")
    _add_common(p)
    p.add_argument("--baseline", required=True)
    p.add_argument("--lengths", default="5,10,20,30,40,50,60")
    p.add_argument("--attacks", default="fgsm,deepfool,carlini")
    p.add_argument("--n-attack", type=int, default=200)
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--kappa", type=float, default=0.0)
    p.add_argument("--binary-search-steps", type=int, default=6)
    p.add_argument("--inner-iter", type=int, default=200)
    p.add_argument("--tau", type=int, default=0)
    _add_train_flags(p, default_lr=models.KEY_RETRAIN_LR,
                     default_momentum=models.KEY_RETRAIN_MOMENTUM)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("overlap", help="label-overlap analysis")
    _add_common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--others", nargs="+", default=[])
    p.add_argument("--knet", default=None)
    p.add_argument("--codebook", default=None)
    p.add_argument("--mode", choices=("random", "noise"), default="random")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--k", type=int, default=100,
                   help="noisy variants per sampled image (noise mode)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=int, default=0)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("report", help="print a run directory's artifacts")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def _apply_config(parser, argv):
    """Load --config JSON (if any) as parser defaults; flags still win."""
    probe = _Parser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config) as f:
            values = json.load(f)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {known.config}")
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {known.config} is not valid JSON: {e}")
    if not isinstance(values, dict):
        raise UsageError(f"config file {known.config} must hold an object")
    for sub in parser._subparsers._group_actions[0].choices.values():
        applicable = {}
        for action in sub._actions:
            if action.dest in values:
                applicable[action.dest] = values[action.dest]
                action.required = False  # the config satisfies it
        sub.set_defaults(**applicable)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"keynet: error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IdxFormatError, CheckpointError,
            cb_mod.CodebookError, ValueError) as e:
        print(f"keynet: error: {e}", file=sys.stderr)
        return 1
    except models.TrainingDiverged as e:
        print(f"keynet: runtime-error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - last-resort runtime failure
        print(f"keynet: runtime-error: {type(e).__name__}: {e}",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
