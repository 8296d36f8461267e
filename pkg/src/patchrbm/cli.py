"""Command-line front end: train / eval / denoise / bench / inspect.

Exit codes: 0 success, 2 bad configuration or arguments, 3 missing dataset
or checkpoint file, 4 non-finite validation metric, 1 other errors.  The
default output root is $PATCHRBM_OUT (falling back to ./runs).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import describe_checkpoint, load_checkpoint, save_checkpoint
from .classifier import ClassRbmParams, classify, predict_proba
from .data import ImageDataset, SplitSpec, load_array_archive, load_csv, load_idx, split
from .evaluation import (AisConfig, MetricsRecord, accuracy, ais_log_z,
                         balanced_class_weights, log_loss, mean_loglikelihood,
                         mse_per_image, write_metrics_csv, write_metrics_json)
from .rbm import EXACT_ENUM_LIMIT, exact_log_z
from .structure import StructureSpec, build_structure, parse_structure_spec
from .training import (NonFiniteMetricError, TrainConfig, init_params,
                       measure_gradient_time, train, write_history_csv)
from .evaluation import denoise as denoise_images
from . import kernels

TABLE2_STRUCTURES = ("M(4,2)", "M(3,2)", "M(3,2;4,2)", "M(4,1)",
                     "M(4,2;4,1)", "M(3,2;4,1)")


class ConfigError(ValueError):
    pass


def _say(args, *message):
    if not args.quiet:
        print(*message)


def _out_root(args):
    root = args.out or os.environ.get("PATCHRBM_OUT") or "runs"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_dataset(path, labels_path=None):
    """Dispatch on the file kind: IDX, array archive, or CSV."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    name = path.name.lower()
    if path.is_dir() or name.endswith(".npz"):
        ds = load_array_archive(path)
    elif name.endswith(".csv"):
        ds = load_csv(path)
    else:
        ds = load_idx(path)
        if not isinstance(ds, ImageDataset):
            raise ConfigError(f"{path} holds labels, not images")
    if labels_path is not None:
        labels_path = Path(labels_path)
        if not labels_path.exists():
            raise FileNotFoundError(f"labels not found: {labels_path}")
        labels = load_idx(labels_path)
        if isinstance(labels, ImageDataset):
            raise ConfigError(f"{labels_path} holds images, not labels")
        ds = ds.with_labels(labels)
    return ds


# ----------------------------------------------------------------------
# train
# ----------------------------------------------------------------------

_CONFIG_KEYS = {"learning_rate", "momentum", "batch_size", "total_updates",
                "cd_steps", "eval_interval", "objective", "validation_metric",
                "sample_visible", "gradient_path", "ll_mode", "val_ais_runs",
                "val_ais_betas"}
_RUN_KEYS = {"structure", "images", "labels", "train_count", "val_count", "seeds"}


def _read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]  # a run manifest doubles as a config
    unknown = set(raw) - _CONFIG_KEYS - _RUN_KEYS - {"seed"}
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return raw


def _effective_config(args):
    cfg = _read_config_file(args.config) if args.config else {}
    overrides = {"structure": args.structure, "images": args.dataset,
                 "labels": args.labels, "total_updates": args.updates,
                 "learning_rate": args.lr, "momentum": args.momentum,
                 "batch_size": args.batch, "cd_steps": args.cd_steps,
                 "eval_interval": args.eval_interval, "objective": args.objective,
                 "seeds": args.seeds, "train_count": args.train_count,
                 "val_count": args.val_count, "val_ais_runs": args.ais_runs,
                 "val_ais_betas": args.ais_betas}
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    if "structure" not in cfg:
        raise ConfigError("no structure given (config key 'structure' or --structure)")
    if "images" not in cfg:
        raise ConfigError("no dataset given (config key 'images' or --dataset)")
    return cfg


def _seed_list(value):
    if value is None:
        return list(range(10))
    if isinstance(value, int):
        return list(range(value))
    return [int(s) for s in value]


def cmd_train(args):
    cfg = _effective_config(args)
    seeds = _seed_list(cfg.pop("seeds", None))
    dataset = load_dataset(cfg["images"], cfg.get("labels"))

    val_count = cfg.get("val_count", max(1, len(dataset) // 6))
    train_count = cfg.get("train_count", len(dataset) - val_count)
    train_set, val_set, _ = split(dataset, SplitSpec(train_count, val_count))
    spec = parse_structure_spec(cfg["structure"]).with_grid(dataset.height,
                                                            dataset.width)
    structure = build_structure(spec)

    tc_kwargs = {k: cfg[k] for k in _CONFIG_KEYS if k in cfg}
    objective = tc_kwargs.get("objective", "generative")
    if objective == "discriminative":
        if dataset.labels is None:
            raise ConfigError("discriminative training needs a labelled dataset")
        tc_kwargs.setdefault("validation_metric", "logloss")
    n_classes = dataset.n_classes if objective == "discriminative" else None

    out = _out_root(args)
    manifest = {
        "tool_version": __version__,
        "structure": cfg["structure"],
        "config": {**tc_kwargs, "structure": cfg["structure"], "images": cfg["images"],
                   "labels": cfg.get("labels"), "train_count": train_count,
                   "val_count": val_count, "seeds": seeds},
        "datasets": {"images": {"path": str(cfg["images"]),
                                "sha256": _sha256(cfg["images"])}},
        "seeds": seeds,
        "checkpoints": {},
        "metrics": {},
    }
    if cfg.get("labels"):
        manifest["datasets"]["labels"] = {"path": str(cfg["labels"]),
                                          "sha256": _sha256(cfg["labels"])}

    for seed in seeds:
        run_dir = out / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        config = TrainConfig(seed=seed, **tc_kwargs)
        params = init_params(structure, seed=seed, n_classes=n_classes)
        try:
            state = train(params, train_set, val_set, config)
        except NonFiniteMetricError:
            raise
        best_path = run_dir / "best.ckpt"
        final_path = run_dir / "final.ckpt"
        metrics_path = run_dir / "metrics.csv"
        save_checkpoint(state.best_params, best_path)
        save_checkpoint(state.params, final_path)
        write_history_csv(metrics_path, state.history)
        manifest["checkpoints"][str(seed)] = {"best": str(best_path),
                                              "final": str(final_path)}
        manifest["metrics"][str(seed)] = str(metrics_path)
        _say(args, f"seed {seed}: best {state.history[0][1]} "
                   f"{state.best_metric:.6f} at update {state.best_update}")

    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(args, f"wrote {manifest_path}")
    return 0


# ----------------------------------------------------------------------
# eval
# ----------------------------------------------------------------------

def cmd_eval(args):
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    params = load_checkpoint(ckpt_path)
    dataset = load_dataset(args.dataset, args.labels)
    base = params.base if isinstance(params, ClassRbmParams) else params
    if dataset.n_pixels != base.n_v:
        raise ValueError(f"dataset has {dataset.n_pixels} pixels but the model "
                         f"expects {base.n_v}")
    out = _out_root(args)
    model_id = base.structure.spec_string()
    records = []

    if args.mode == "loglikelihood":
        if isinstance(params, ClassRbmParams):
            raise ValueError("loglikelihood mode needs a generative checkpoint")
        if args.exact_z:
            if params.n_v > EXACT_ENUM_LIMIT:
                raise ValueError("--exact-z only works for n_v <= "
                                 f"{EXACT_ENUM_LIMIT}")
            log_z, stderr = exact_log_z(params), 0.0
        else:
            log_z, stderr = ais_log_z(params, AisConfig(n_runs=args.ais_runs,
                                                        n_betas=args.ais_betas,
                                                        seed=args.seed))
        ll = mean_loglikelihood(dataset.images, params, log_z)
        records += [MetricsRecord("log_z", log_z, dataset.tag, model_id, args.seed),
                    MetricsRecord("log_z_stderr", stderr, dataset.tag, model_id, args.seed),
                    MetricsRecord("loglikelihood", ll, dataset.tag, model_id, args.seed)]
        _say(args, f"loglikelihood {ll:.4f} (log Z {log_z:.4f} +- {stderr:.4f})")
    else:
        if not isinstance(params, ClassRbmParams):
            raise ValueError("classify mode needs a classifier checkpoint")
        if dataset.labels is None:
            raise ValueError("classify mode needs a labelled dataset")
        probs = predict_proba(dataset.images, params)
        preds = classify(dataset.images, params)
        labels = dataset.labels
        records.append(MetricsRecord("logloss", log_loss(labels, probs),
                                     dataset.tag, model_id))
        records.append(MetricsRecord("accuracy", accuracy(labels, preds),
                                     dataset.tag, model_id))
        if np.all(np.bincount(labels, minlength=params.n_classes) > 0):
            weights = balanced_class_weights(labels, params.n_classes)
            records.append(MetricsRecord("balanced_logloss",
                                         log_loss(labels, probs, weights),
                                         dataset.tag, model_id))
            records.append(MetricsRecord("balanced_accuracy",
                                         accuracy(labels, preds, balanced=True),
                                         dataset.tag, model_id))
        confusion = np.zeros((params.n_classes, params.n_classes), dtype=np.int64)
        np.add.at(confusion, (labels, preds), 1)
        conf_path = out / "confusion.csv"
        np.savetxt(conf_path, confusion, fmt="%d", delimiter=",")
        _say(args, f"accuracy {records[1].value:.4f}, logloss {records[0].value:.4f}")
        _say(args, f"wrote {conf_path}")

    write_metrics_csv(out / "metrics.csv", records)
    write_metrics_json(out / "metrics.json", records)
    _say(args, f"wrote {out / 'metrics.csv'}")
    return 0


# ----------------------------------------------------------------------
# denoise
# ----------------------------------------------------------------------

def cmd_denoise(args):
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    params = load_checkpoint(ckpt_path)
    if isinstance(params, ClassRbmParams):
        params = params.base
    corrupted = load_dataset(args.corrupted)
    clean = load_dataset(args.clean)
    if len(corrupted) == 0:
        raise ValueError("empty dataset")
    if len(corrupted) != len(clean) or corrupted.n_pixels != clean.n_pixels:
        raise ValueError("corrupted and clean datasets must align index-wise")
    if corrupted.n_pixels != params.n_v:
        raise ValueError(f"dataset has {corrupted.n_pixels} pixels but the model "
                         f"expects {params.n_v}")

    reconstructed = denoise_images(corrupted.images, params, steps=args.steps,
                                   rng=args.seed)
    err_recon = mse_per_image(reconstructed, clean.images)
    err_corrupt = mse_per_image(corrupted.images, clean.images)

    out = _out_root(args)
    per_image = out / "denoise_mse.csv"
    with open(per_image, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "tag", "mse_reconstructed", "mse_corrupted"])
        for i, (er, ec) in enumerate(zip(err_recon, err_corrupt)):
            writer.writerow([i, corrupted.tag, repr(float(er)), repr(float(ec))])
    summary = {corrupted.tag: {"count": len(corrupted),
                               "mean_mse_reconstructed": float(err_recon.mean()),
                               "std_mse_reconstructed": float(err_recon.std()),
                               "mean_mse_corrupted": float(err_corrupt.mean()),
                               "std_mse_corrupted": float(err_corrupt.std())}}
    with open(out / "denoise_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if args.dump_images:
        shaped = reconstructed.reshape(-1, corrupted.height, corrupted.width)
        np.savez(out / "reconstructed.npz", images=shaped)
        _say(args, f"wrote {out / 'reconstructed.npz'}")
    _say(args, f"{corrupted.tag}: mse {err_recon.mean():.5f} reconstructed vs "
               f"{err_corrupt.mean():.5f} corrupted over {len(corrupted)} images")
    _say(args, f"wrote {per_image}")
    return 0


# ----------------------------------------------------------------------
# bench
# ----------------------------------------------------------------------

def cmd_bench(args):
    specs = args.structure or list(TABLE2_STRUCTURES)
    height, width = args.grid
    rng = np.random.default_rng(1)
    batch = rng.random((args.batch, height * width))
    rows = []
    for text in specs:
        spec = parse_structure_spec(text).with_grid(height, width)
        structure = build_structure(spec)
        params = init_params(structure, seed=0)
        for backend in kernels.available_backends():
            stats = measure_gradient_time(params, batch,
                                          repetitions=args.repetitions,
                                          cd_steps=args.cd_steps, backend=backend)
            rows.append([text, structure.n_h, structure.nnz, "sparse", backend,
                         stats["sparse"]["mean"], stats["sparse"]["std"]])
            if backend == kernels.available_backends()[0]:
                rows.append([text, structure.n_h, structure.nnz, "dense", "blas",
                             stats["dense"]["mean"], stats["dense"]["std"]])
    header = ["structure", "n_hidden", "nnz", "path", "backend",
              "mean_seconds", "std_seconds"]
    stdout_writer = csv.writer(sys.stdout)
    stdout_writer.writerow(header)
    for row in rows:
        stdout_writer.writerow([f"{x:.9f}" if isinstance(x, float) else x
                                for x in row])
    if args.out:
        out = _out_root(args) / "bench.csv"
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        _say(args, f"wrote {out}")
    return 0


# ----------------------------------------------------------------------
# inspect
# ----------------------------------------------------------------------

def cmd_inspect(args):
    if args.checkpoint:
        path = Path(args.checkpoint)
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        info = describe_checkpoint(path)
    else:
        height, width = args.grid
        spec = parse_structure_spec(args.structure).with_grid(height, width)
        structure = build_structure(spec)
        info = {"structure": structure.spec_string(), "n_v": structure.n_v,
                "n_h": structure.n_h, "nnz": structure.nnz}
        if not spec.is_dense:
            blocks = []
            for w, t in spec.blocks:
                block = build_structure(StructureSpec(blocks=((w, t),),
                                                      grid=(height, width)))
                blocks.append({"window": w, "stride": t, "n_h": block.n_h,
                               "nnz": block.nnz})
            info["blocks"] = blocks
    print(json.dumps(info, indent=2))
    return 0


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def _grid(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}, expected HxW") from exc


def build_parser():
    parser = argparse.ArgumentParser(
        prog="patchrbm",
        description="Train and evaluate RBMs with patch-restricted connectivity.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model over a list of seeds")
    p.add_argument("--config", help="flat JSON config (or a previous manifest)")
    p.add_argument("--structure", help='e.g. "M(4,2)", "M(3,2;4,2)" or "dense(121)"')
    p.add_argument("--dataset", help="image file (IDX, .npz, directory or CSV)")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--seeds", type=int, help="number of seeds (0..n-1), default 10")
    p.add_argument("--updates", type=int, help="parameter updates per run")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch", type=int, help="mini-batch size")
    p.add_argument("--cd-steps", type=int, dest="cd_steps")
    p.add_argument("--eval-interval", type=int, dest="eval_interval")
    p.add_argument("--ais-runs", type=int, dest="ais_runs",
                   help="AIS chains for validation loglikelihood")
    p.add_argument("--ais-betas", type=int, dest="ais_betas")
    p.add_argument("--objective", choices=["generative", "discriminative"])
    p.add_argument("--train-count", type=int, dest="train_count")
    p.add_argument("--val-count", type=int, dest="val_count")
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels")
    p.add_argument("--mode", choices=["loglikelihood", "classify"], required=True)
    p.add_argument("--ais-runs", type=int, dest="ais_runs", default=1000)
    p.add_argument("--ais-betas", type=int, dest="ais_betas", default=2900)
    p.add_argument("--exact-z", action="store_true", dest="exact_z",
                   help="enumerate Z exactly (tiny models only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("denoise", help="reconstruct corrupted images and score MSE")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corrupted", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--steps", type=int, default=1, help="Gibbs steps (default 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-images", action="store_true", dest="dump_images",
                   help="also write the reconstructions as an .npz archive")
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("bench", help="time sparse vs dense gradient paths")
    p.add_argument("--structure", action="append",
                   help="repeatable; defaults to the six standard patch models")
    p.add_argument("--grid", type=_grid, default=(28, 28))
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--cd-steps", type=int, dest="cd_steps", default=1)
    p.add_argument("--out", help="also write bench.csv under this directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="summarise a checkpoint or a structure")
    p.add_argument("--checkpoint")
    p.add_argument("--structure")
    p.add_argument("--grid", type=_grid, default=(28, 28))
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "inspect" and not (args.checkpoint or args.structure):
        parser.error("inspect needs --checkpoint or --structure")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NonFiniteMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
