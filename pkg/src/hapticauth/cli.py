"""Command-line entry point.

Subcommands cover the whole pipeline: ``synth`` (generate a labeled dataset),
``filter`` (EMA-smoothed variant), ``train-experiment`` (the per-task /
per-user model factories), ``eval-experiment`` (reports from checkpoints),
``sweep`` (training-size curve), and ``gradcheck`` (finite-difference
verification of the engine).  Exit codes: 0 success, 2 usage/config error,
3 data/experiment error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .dataset import (
    DEFAULT_TASKS,
    DatasetManifest,
    ManifestEntry,
    SynthConfig,
    load_dataset,
    save_dataset,
    synth_dataset,
    write_trace_csv,
)
from .errors import ConfigError, DataError, HapticAuthError
from .evaluation import evaluate_experiment, write_experiment_files
from .features import pipeline
from .model import (
    ModelConfig,
    build_model,
    cross_entropy,
    draw_kink_free_batch,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .signal import NormStats, filter_trace
from .trainer import (
    DEFAULT_SWEEP_SIZES,
    TrainConfig,
    TrainedModel,
    TrainHistory,
    split_dataset,
    sweep_training_size,
    train_task_models,
    train_user_id_models,
)

GRADCHECK_THRESHOLD = 1e-4
QUADRATIC_THRESHOLD = 1e-9


def _default_out() -> str | None:
    return os.environ.get("HAPTICAUTH_OUT")


def _prepare_outdir(path_str: str | None, force: bool) -> Path:
    if not path_str:
        raise ConfigError("no output path given (set --out or HAPTICAUTH_OUT)")
    out = Path(path_str)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _prepare_outfile(path_str: str | None, force: bool) -> Path:
    if not path_str:
        raise ConfigError("no output path given (set --out or HAPTICAUTH_OUT)")
    out = Path(path_str)
    if out.exists() and not force:
        raise ConfigError(f"output file {out} exists (use --force to overwrite)")
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


# --- synth ---------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.tasks < 1 or args.tasks > 26:
        raise ConfigError(f"--tasks must be in [1, 26], got {args.tasks}")
    out = _prepare_outdir(args.out, args.force)
    cfg = SynthConfig(
        num_users=args.users,
        tasks=tuple(chr(ord("a") + i) for i in range(args.tasks)),
        trials_per_task=args.trials,
        seed=args.seed,
        duration_range=(args.duration_min, args.duration_max),
    )
    dataset = synth_dataset(cfg)
    save_dataset(dataset, out, sample_rate=cfg.sample_rate)
    print(f"wrote {len(dataset)} traces ({args.users} users x {args.tasks} tasks "
          f"x {args.trials} trials) to {out}")
    return 0


# --- filter --------------------------------------------------------------

def cmd_filter(args) -> int:
    if not (0.0 < args.alpha <= 1.0):
        raise ConfigError(f"--alpha must be in (0, 1], got {args.alpha}")
    manifest = DatasetManifest.load(args.manifest)
    base = Path(args.manifest).parent
    dataset = load_dataset(manifest, base)
    raw = dataset.subset(variant="raw")
    if len(raw) == 0:
        raise DataError("manifest has no raw-variant entries to filter")
    out = _prepare_outdir(args.out, args.force)
    entries = []
    for tr in raw:
        filtered = filter_trace(tr, args.alpha)
        name = f"{tr.user_id}_{tr.task_id}_{tr.trial_index:04d}_filtered.csv"
        (out / name).write_bytes(write_trace_csv(filtered))
        entries.append(ManifestEntry(path=name, user=tr.user_id, task=tr.task_id,
                                     trial=tr.trial_index, variant="filtered"))
    DatasetManifest(entries=entries, sample_rate=manifest.sample_rate).save(out / "manifest.json")
    print(f"filtered {len(entries)} traces (alpha={args.alpha}) into {out}")
    return 0


# --- train-experiment ------------------------------------------------------

def _model_template(args, kind: str) -> ModelConfig:
    seq_len = args.seq_len if args.seq_len is not None else (512 if kind == "user-id" else 64)
    cfg = ModelConfig(
        d_model=args.d_model,
        num_heads=args.heads,
        ffn_dim=args.ffn_dim,
        num_layers=args.layers,
        seq_len=seq_len,
        dropout=args.dropout,
    )
    if not cfg.paper_standard:
        print(f"note: seq_len={seq_len} is non-standard (paper runs use 64 or 512)",
              file=sys.stderr)
    return cfg


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        normalize=not args.no_normalize,
        train_per_class=args.train_per_class,
        test_per_class=args.test_per_class,
    )


def _save_trained(out: Path, tm: TrainedModel, variant: str) -> None:
    meta = {
        "model_id": tm.model_id,
        "kind": tm.kind,
        "group": tm.group,
        "class_labels": tm.class_labels,
        "variant": variant,
        "seed": tm.seed,
        "normalize": tm.stats is not None,
        "train_per_class": len(tm.train_set) // len(tm.class_labels),
        "test_per_class": len(tm.test_set) // len(tm.class_labels),
        "train_size": len(tm.train_set),
        "test_size": len(tm.test_set),
    }
    extras = {}
    if tm.stats is not None:
        extras = {"norm.mean": tm.stats.mean, "norm.std": tm.stats.std}
    save_checkpoint(out / f"{tm.model_id}.ckpt", tm.params, meta=meta, extras=extras)
    history_doc = {
        "model": tm.model_id,
        "config": tm.params.config.to_dict(),
        "epochs": tm.history.to_records(),
    }
    (out / f"{tm.model_id}.history.json").write_text(
        json.dumps(history_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_train_experiment(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    dataset = load_dataset(manifest, Path(args.manifest).parent).subset(variant=args.variant)
    if len(dataset) == 0:
        raise DataError(f"manifest has no {args.variant!r} entries")
    out = _prepare_outdir(args.out, args.force)
    train_cfg = _train_config(args)
    template = _model_template(args, args.kind)
    factory = train_user_id_models if args.kind == "user-id" else train_task_models
    models = factory(dataset, train_cfg, model_template=template, workers=args.workers)
    for tm in models:
        _save_trained(out, tm, args.variant)
        final = tm.history.train_acc[-1]
        print(f"{tm.model_id}: train={len(tm.train_set)} test={len(tm.test_set)} "
              f"final_train_acc={final:.3f}")
    print(f"wrote {len(models)} checkpoints to {out}")
    return 0


# --- eval-experiment -----------------------------------------------------

def _rebuild_test_set(dataset, meta: dict, stats: NormStats | None, seq_len: int):
    kind = meta["kind"]
    group = meta["group"]
    label_index = {lab: i for i, lab in enumerate(meta["class_labels"])}
    if kind == "user-id":
        subset = dataset.subset(variant=meta["variant"], task_id=group)
        label_of = lambda tr: label_index[tr.user_id]
    else:
        subset = dataset.subset(variant=meta["variant"], user_id=group)
        label_of = lambda tr: label_index[tr.task_id]
    if len(subset) == 0:
        raise DataError(f"manifest has no traces for model group {group!r} "
                        f"(variant {meta['variant']!r})")
    _, test_tr = split_dataset(subset, meta["train_per_class"], meta["test_per_class"],
                               meta["seed"])
    return [pipeline(tr, seq_len, stats=stats, label=label_of(tr)) for tr in test_tr]


def cmd_eval_experiment(args) -> int:
    ckpt_dir = Path(args.checkpoints)
    if not ckpt_dir.is_dir():
        raise DataError(f"checkpoint directory not found: {ckpt_dir}")
    if args.models:
        wanted = [m.strip() for m in args.models.split(",") if m.strip()]
        paths = []
        for mid in wanted:
            p = ckpt_dir / f"{mid}.ckpt"
            if not p.exists():
                raise DataError(f"missing checkpoint for model {mid!r}: {p}")
            paths.append(p)
    else:
        paths = sorted(ckpt_dir.glob("*.ckpt"))
        if not paths:
            raise DataError(f"no checkpoints in {ckpt_dir}")
    manifest = DatasetManifest.load(args.manifest)
    dataset = load_dataset(manifest, Path(args.manifest).parent)
    out = _prepare_outdir(args.out, args.force)

    models = []
    for p in paths:
        params, meta, extras = load_checkpoint(p)
        stats = None
        if meta.get("normalize"):
            if "norm.mean" not in extras or "norm.std" not in extras:
                raise DataError(f"checkpoint {p} marked normalized but has no stats tensors")
            stats = NormStats(mean=extras["norm.mean"], std=extras["norm.std"])
        test_set = _rebuild_test_set(dataset, meta, stats, params.config.seq_len)
        models.append(TrainedModel(
            model_id=meta["model_id"], kind=meta["kind"], group=meta["group"],
            class_labels=list(meta["class_labels"]), params=params,
            history=TrainHistory(), stats=stats, train_set=[], test_set=test_set,
            seed=int(meta["seed"]),
        ))
    exp = evaluate_experiment(models)
    write_experiment_files(exp, out, svg=not args.no_svg)
    for r in exp.reports:
        print(f"{r.model_id}: accuracy={r.accuracy:.4f}")
    print(f"mean accuracy {exp.mean_accuracy:.4f}; reports in {out}")
    return 0


# --- sweep -----------------------------------------------------------------

def cmd_sweep(args) -> int:
    sizes = DEFAULT_SWEEP_SIZES
    if args.sizes:
        try:
            sizes = tuple(int(s) for s in args.sizes.split(","))
        except ValueError:
            raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    manifest = DatasetManifest.load(args.manifest)
    dataset = load_dataset(manifest, Path(args.manifest).parent).subset(variant=args.variant)
    if len(dataset) == 0:
        raise DataError(f"manifest has no {args.variant!r} entries")
    users = [u.strip() for u in args.users.split(",")] if args.users else None
    out = _prepare_outfile(args.out, args.force)
    train_cfg = _train_config(args)
    template = _model_template(args, "task")
    points = sweep_training_size(dataset, train_cfg, sizes=sizes,
                                 model_template=template, users=users)
    group_names = sorted(points[0].per_group) if points else []
    lines = ["size,accuracy" + "".join(f",{g}" for g in group_names)]
    for pt in points:
        lines.append(f"{pt.size},{pt.mean_accuracy}"
                     + "".join(f",{pt.per_group[g]}" for g in group_names))
        print(f"size {pt.size:4d}: mean accuracy {pt.mean_accuracy:.4f}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(points)}-row curve to {out}")
    return 0


# --- gradcheck --------------------------------------------------------------

def _quadratic_self_test(eps: float) -> float:
    # coordinates bounded away from 0 keep the relative error at rounding level
    rng = np.random.default_rng(7)
    x = Tensor(rng.uniform(0.5, 2.0, 32) * rng.choice([-1.0, 1.0], 32),
               requires_grad=True, dtype=np.float64)
    f = lambda: ad.tsum(ad.mul(x, x))
    return grad_check(f, [x], eps=eps, num_samples=32, seed=1)


def cmd_gradcheck(args) -> int:
    cfg = ModelConfig(
        d_model=args.d_model,
        num_heads=args.heads,
        ffn_dim=args.ffn_dim,
        num_layers=args.layers,
        num_classes=args.classes,
        seq_len=args.seq_len,
    )
    quad_err = _quadratic_self_test(args.eps)
    print(f"quadratic self-test: max rel error {quad_err:.3e} "
          f"({'ok' if quad_err < QUADRATIC_THRESHOLD else 'FAIL'})")

    params = build_model(cfg, seed=args.seed).astype(np.float64)
    batch, labels = draw_kink_free_batch(params, args.batch, seed=args.seed)

    fault = args.inject_fault

    def f():
        loss = cross_entropy(forward(params, batch), labels)
        if fault:
            # value tracks the weights but the graph does not: verification must fail
            drift = 0.001 * sum(float((t.data ** 2).sum()) for t in params.trainable().values())
            loss = ad.add(loss, Tensor(np.float64(drift), dtype=np.float64))
        return loss

    err = grad_check(f, params.trainable(), eps=args.eps, num_samples=args.samples,
                     seed=args.seed, min_magnitude=args.min_grad)
    ok = quad_err < QUADRATIC_THRESHOLD and err < args.threshold
    print(f"model gradcheck ({args.samples} coords, eps={args.eps}): "
          f"max rel error {err:.3e} ({'ok' if err < args.threshold else 'FAIL'})")
    return 0 if ok else 1


# --- parser ------------------------------------------------------------------

def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--train-per-class", type=int, default=100)
    p.add_argument("--test-per-class", type=int, default=20)
    p.add_argument("--no-normalize", action="store_true",
                   help="feed raw (unnormalized) features, as in the paper's literal pipeline")
    p.add_argument("--d-model", type=int, default=256)
    p.add_argument("--heads", type=int, default=16)
    p.add_argument("--ffn-dim", type=int, default=256)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--seq-len", type=int, default=None,
                   help="resample length (default: 512 for user-id, 64 for task)")
    p.add_argument("--dropout", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hapticauth",
        description="Haptic-biometric authentication pipeline: synthesize, filter, "
                    "train, evaluate, sweep, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", default=_default_out())
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--tasks", type=int, default=len(DEFAULT_TASKS),
                   help="number of letter tasks, labeled a, b, c, ...")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration-min", type=float, default=1.0)
    p.add_argument("--duration-max", type=float, default=2.0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", help="emit the EMA-filtered variant of a dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train-experiment", help="train the per-task or per-user model set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=["user-id", "task"], required=True)
    p.add_argument("--variant", choices=["raw", "filtered"], default="raw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--workers", type=int, default=1,
                   help="parallel model training processes")
    p.add_argument("--force", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_experiment)

    p = sub.add_parser("eval-experiment", help="evaluate checkpoints and write reports")
    p.add_argument("--checkpoints", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--models", default=None,
                   help="comma-separated model ids (default: all in the directory)")
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval_experiment)

    p = sub.add_parser("sweep", help="task-classification accuracy vs training-set size")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--sizes", default=None, help="comma-separated sizes (default 5..100 step 5)")
    p.add_argument("--variant", choices=["raw", "filtered"], default="raw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", default=None, help="restrict to these users (comma-separated)")
    p.add_argument("--force", action="store_true")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference verification of the model gradients")
    p.add_argument("--d-model", type=int, default=256)
    p.add_argument("--heads", type=int, default=16)
    p.add_argument("--ffn-dim", type=int, default=256)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--seq-len", type=int, default=8)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=GRADCHECK_THRESHOLD)
    p.add_argument("--min-grad", type=float, default=1e-6,
                   help="check only coordinates with |analytic gradient| above this; "
                        "smaller ones sit below the finite-difference rounding floor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true",
                   help="corrupt the loss so verification must fail (negative self-test)")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HapticAuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
