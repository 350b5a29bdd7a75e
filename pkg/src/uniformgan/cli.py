"""Command line entry point: ``uniformgan <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SphereExperimentConfig, sincos_map, sphere_uniformity_experiment
from .config import ConfigError, DataConfig, load_gan_config, load_scm_config, to_dict
from .data import FeatureFileError, load_features, make_grid, make_ring, save_dataset, save_features, subset
from .gan import DivergenceError, train
from .gradcheck import operator_suite, run_suite
from .regularizers import batch_entropy_metric, entropy_surrogate, pairwise_potential_metric
from .scm import BenchConfig, run_benchmark, sample_scm, MixingNetwork
from .numerics import Rng


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _write_run_header(out: Path, resolved: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(_dump(resolved) + "\n")
    (out / "VERSION").write_text(f"uniformgan {__version__}\n")


def _positive_gamma(value: str) -> float:
    g = float(value)
    if not g > 0 or not math.isfinite(g):
        raise argparse.ArgumentTypeError(f"gamma must be a positive number, got {value}")
    return g


def build_dataset(cfg: DataConfig):
    if cfg.kind == "ring":
        ds = make_ring(cfg.k_modes, cfg.radius, cfg.sigma, cfg.n_per_mode, cfg.seed)
    else:
        ds = make_grid(cfg.side, cfg.spacing, cfg.sigma, cfg.n_per_mode, cfg.seed)
    if cfg.n_classes is not None or cfg.n_per_class is not None:
        n_classes = cfg.n_classes if cfg.n_classes is not None else ds.n_modes
        n_per_class = cfg.n_per_class if cfg.n_per_class is not None else cfg.n_per_mode
        ds = subset(ds, n_classes, n_per_class, cfg.seed)
    return ds


def cmd_train_gan(args) -> int:
    cfg = load_gan_config(args.config)
    reg = cfg.gan.regularizer
    if args.no_ur:
        reg.lambda_g = reg.lambda_d = 0.0
    if args.no_er:
        reg.delta_g = reg.delta_d = 0.0
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.steps is not None:
        cfg.gan.steps = args.steps
    out = Path(cfg.output_dir)
    _write_run_header(out, to_dict(cfg))
    dataset = build_dataset(cfg.data)
    save_dataset(out / "dataset.csv", dataset)
    try:
        result = train(cfg.gan, dataset, out_dir=out)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(_dump(result.summary))
    return 0


def cmd_eval_features(args) -> int:
    feats = load_features(args.input)
    avg = feats.mean(axis=0)
    report = {
        "rows": int(feats.shape[0]),
        "dim": int(feats.shape[1]),
        "gamma": args.gamma,
        "pairwise_potential": pairwise_potential_metric(feats, args.gamma),
        "batch_entropy_metric": batch_entropy_metric(feats) if feats.shape[1] >= 2 else None,
        "average_feature_entropy": entropy_surrogate(avg).item() if feats.shape[1] >= 2 else None,
        "average_feature_circle_potential": pairwise_potential_metric(sincos_map(avg), args.gamma) if feats.shape[1] >= 2 else None,
    }
    print(_dump(report))
    return 0


def cmd_scm_bench(args) -> int:
    cfg = load_scm_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    out = Path(cfg.output_dir)
    _write_run_header(out, to_dict(cfg))
    report = run_benchmark(cfg.scm, cfg.encoder, cfg.bench)
    (out / "report.json").write_text(_dump(report) + "\n")
    if args.dump_pairs:
        pairs = sample_scm(cfg.scm, cfg.bench.n_eval, Rng(cfg.bench.seed).child(2), MixingNetwork(cfg.scm))
        write_pairs(out / "pairs.csv", pairs)
    summary = {k: report[k] for k in ("r2_content", "r2_noise", "alignment_final", "entropy_final")}
    summary["oracle_alignment"] = report["oracle"]["alignment"]
    print(_dump(summary))
    return 0


def write_pairs(path, pairs) -> None:
    cols = {}
    for prefix, arr in (("x_", pairs.x), ("xt_", pairs.x_tilde), ("c_", pairs.c), ("eps_", pairs.eps), ("epst_", pairs.eps_tilde)):
        for j in range(arr.shape[1]):
            cols[f"{prefix}{j}"] = arr[:, j]
    matrix = np.column_stack(list(cols.values()))
    with open(path, "w") as fh:
        header = list(cols) + [f"A_{j}" for j in range(pairs.A.shape[1])]
        fh.write(",".join(header) + "\n")
        for row, mask in zip(matrix, pairs.A):
            fh.write(",".join([f"{v:.17g}" for v in row] + [str(int(b)) for b in mask]) + "\n")


def cmd_sphere(args) -> int:
    cfg = SphereExperimentConfig(
        n_points=args.n, ambient_dim=args.d + 1, gamma=args.gamma, steps=args.steps, seed=args.seed, baseline_trials=args.trials
    )
    report = sphere_uniformity_experiment(cfg)
    points = report.pop("points")
    if args.output_dir:
        out = Path(args.output_dir)
        _write_run_header(out, report["config"])
        (out / "report.json").write_text(_dump(report) + "\n")
        save_features(out / "points.csv", points)
        save_features(out / "trajectory.csv", np.array(report["trajectory"])[:, None], prefix="potential")
    if not args.trajectory:
        report.pop("trajectory")
    print(_dump(report))
    return 0


def cmd_make_data(args) -> int:
    if args.kind == "ring":
        ds = make_ring(args.k_modes, args.radius, args.sigma, args.n_per_mode, args.seed)
    else:
        ds = make_grid(args.side, args.spacing, args.sigma, args.n_per_mode, args.seed)
    if args.n_classes is not None or args.n_per_class is not None:
        ds = subset(ds, args.n_classes or ds.n_modes, args.n_per_class or args.n_per_mode, args.seed)
    save_dataset(args.output, ds)
    print(_dump({"points": len(ds), "modes": ds.n_modes, "output": str(args.output)}))
    return 0


def cmd_gradcheck(args) -> int:
    report = run_suite(args.instances, args.seed)
    report["operators"] = operator_suite(args.instances, args.seed)
    report["passed"] = report["passed"] and all(v < report["tolerance"] for v in report["operators"].values())
    print(_dump(report))
    return 0 if report["passed"] else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uniformgan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"uniformgan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-gan", help="train a toy GAN with uniformity/entropy regularization")
    p.add_argument("--config", required=True)
    p.add_argument("--no-ur", action="store_true", help="disable uniformity regularization")
    p.add_argument("--no-er", action="store_true", help="disable entropy regularization")
    p.add_argument("--output-dir")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("eval-features", help="uniformity and entropy metrics of a feature CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--gamma", type=_positive_gamma, default=2.0)
    p.set_defaults(func=cmd_eval_features)

    p = sub.add_parser("scm-bench", help="train and score the counterfactual-pair encoder")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--dump-pairs", action="store_true")
    p.set_defaults(func=cmd_scm_bench)

    p = sub.add_parser("sphere-uniformity", help="minimize the mean pair potential of points on S^d")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=2, help="sphere dimension (ambient dimension is d+1)")
    p.add_argument("--gamma", type=_positive_gamma, default=2.0)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir")
    p.add_argument("--trajectory", action="store_true", help="include the trajectory in stdout")
    p.set_defaults(func=cmd_sphere)

    p = sub.add_parser("make-data", help="write a toy multi-modal dataset as CSV")
    p.add_argument("kind", choices=["ring", "grid"])
    p.add_argument("--output", required=True)
    p.add_argument("--k-modes", type=int, default=8)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--side", type=int, default=5)
    p.add_argument("--spacing", type=float, default=2.0)
    p.add_argument("--sigma", type=float, default=0.02)
    p.add_argument("--n-per-mode", type=int, default=100)
    p.add_argument("--n-classes", type=int)
    p.add_argument("--n-per-class", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, FeatureFileError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
