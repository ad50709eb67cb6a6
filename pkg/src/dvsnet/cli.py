"""``dvsnet`` command line: ingest, augment, train, eval, ensemble, report.

Settings come from ``--config`` (YAML, see :mod:`dvsnet.config`) and are
overridden by flags.  Exit status is 0 only when every artifact was written.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import pipeline as P
from .checkpoint import CheckpointError
from .config import RunConfig, load_config
from .data.augment import augment_images, materialize
from .data.dataset import SPLITS
from .metrics import ConfusionMatrix, classification_report

log = logging.getLogger("dvsnet")


class CommandError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML run config; flags override its values")
    p.add_argument("--seed", type=int, help="seed recorded in every artifact")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dvsnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dvsnet {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan class folders and assign train/validation/test splits")
    p.add_argument("root", nargs="?", type=Path, help="dataset root with one folder per class")
    p.add_argument("--ratios", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    _common(p)

    p = sub.add_parser("augment", help="write augmented copies of the training split")
    p.add_argument("--data", type=Path, help="dataset.json, its directory, or a class-folder root")
    p.add_argument("--variants", type=int)
    _common(p)

    p = sub.add_parser("train", help="train one architecture")
    p.add_argument("--data", type=Path)
    p.add_argument("--arch", help="e.g. densenet-mini, vgg-mini, se-resnet-mini, densenet201")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=("adam", "rmsprop", "sgd_momentum"))
    p.add_argument("--patience", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--image-size", type=int)
    p.add_argument("--augment-variants", type=int)
    p.add_argument("--record-wall-time", action="store_true",
                   help="add wall time to train_report.json (makes reruns differ)")
    _common(p)

    p = sub.add_parser("eval", help="score a checkpoint, or import a confusion matrix")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--from-confusion", type=Path, metavar="CSV",
                   help="compute metrics from a confusion CSV (rows = predicted)")
    _common(p)

    p = sub.add_parser("ensemble", help="soft-voting fusion of member checkpoints or probability CSVs")
    p.add_argument("members", nargs="+", type=Path, help="*.ckpt files or probs CSVs")
    p.add_argument("--data", type=Path)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--fusion", choices=("mean", "weighted", "trained_linear"), default="mean")
    p.add_argument("--weights", type=float, nargs="+")
    _common(p)

    p = sub.add_parser("report", help="consolidate run directories into report.json and curve CSVs")
    p.add_argument("runs", nargs="+", type=Path)
    _common(p)
    return parser


def run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, out=str(args.out))
    for flag in ("data", "root"):
        if getattr(args, flag, None) is not None:
            cfg = replace(cfg, dataset=str(getattr(args, flag)))
    if getattr(args, "ratios", None):
        cfg = replace(cfg, ratios=tuple(args.ratios))
    if getattr(args, "arch", None):
        cfg = replace(cfg, architecture=args.arch)
    if getattr(args, "image_size", None):
        cfg = replace(cfg, image_size=args.image_size)
    t = {}
    for flag, key in (("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "learning_rate"),
                      ("optimizer", "optimizer"), ("patience", "patience"), ("dropout", "dropout")):
        if getattr(args, flag, None) is not None:
            t[key] = getattr(args, flag)
    if t:
        cfg = replace(cfg, training=replace(cfg.training, **t))
    variants = getattr(args, "augment_variants", None)
    if variants is None:
        variants = getattr(args, "variants", None)
    if variants is not None:
        cfg = replace(cfg, augment=replace(cfg.augment, variants=variants))
    return cfg.with_seed(cfg.seed)


def _need_dataset(cfg: RunConfig) -> dict:
    if not cfg.dataset:
        raise CommandError("no dataset given (use --data or set 'dataset' in the config)")
    return P.load_manifest(cfg.dataset)


def cmd_ingest(args) -> int:
    cfg = run_config(args)
    if not cfg.dataset:
        raise CommandError("no dataset root given")
    manifest = P.build_manifest(cfg.dataset, cfg.seed, cfg.ratios)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    P.write_json(out / "dataset.json", manifest)
    print(P.count_table(manifest))
    return 0


def cmd_augment(args) -> int:
    cfg = run_config(args)
    manifest = _need_dataset(cfg)
    images = augment_images(P.load_images(manifest, "train"), cfg.augment, include_originals=False)
    written = materialize(images, cfg.out, manifest["class_names"])
    print(f"wrote {len(written)} augmented images to {cfg.out}")
    return 0


def cmd_train(args) -> int:
    cfg = run_config(args)
    manifest = _need_dataset(cfg)
    report = P.run_training(cfg, manifest, cfg.out, record_wall_time=args.record_wall_time)
    print(f"best epoch {report['best_epoch']} of {report['epochs_run']}; "
          f"val_loss {report['best_val_loss']:.4f}; checkpoint {Path(cfg.out) / 'model.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    cfg = run_config(args)
    out = Path(cfg.out)
    if args.from_confusion is not None:
        cm = ConfusionMatrix.from_csv(args.from_confusion)
        meta = P.artifact_meta(cfg.seed, {"from_confusion": cm.counts.tolist(), "classes": cm.class_names})
        report = P.write_metrics(cm, out, meta, source=args.from_confusion.name)
    else:
        if args.checkpoint is None:
            raise CommandError("eval needs --checkpoint or --from-confusion")
        report = P.run_eval(args.checkpoint, _need_dataset(cfg), args.split, out)
    print(report.render())
    return 0


def cmd_ensemble(args) -> int:
    cfg = run_config(args)
    if len(args.members) < 2:
        raise CommandError("an ensemble needs at least two members")
    manifest = _need_dataset(cfg)
    ckpt = [m.suffix == ".ckpt" for m in args.members]
    if all(ckpt):
        res = P.ensemble_from_checkpoints(args.members, manifest, args.split, args.fusion, cfg.out,
                                          args.weights, cfg.seed)
    elif not any(ckpt):
        res = P.ensemble_from_csvs(args.members, manifest, args.split, args.fusion, cfg.out,
                                   args.weights, cfg.seed)
    else:
        raise CommandError("members must be all checkpoints or all probability CSVs")
    width = max(len(n) for n in list(res["members"]) + ["ensemble"])
    for name, acc in res["members"].items():
        print(f"{name.ljust(width)}  {acc * 100:.2f}%")
    print(f"{'ensemble'.ljust(width)}  {res['accuracy'] * 100:.2f}%")
    return 0


def cmd_report(args) -> int:
    cfg = run_config(args)
    problems = []
    for d in args.runs:
        miss = P.missing_artifacts(d)
        if miss:
            problems.append(f"{d}: missing {', '.join(miss)}")
    if problems:
        raise CommandError("missing artifacts:\n  " + "\n  ".join(problems))
    report = P.build_report(args.runs, cfg.out)
    for r in report["runs"]:
        print(f"{r['name']}: accuracy {r['accuracy'] * 100:.2f}%, best epoch {r['best_epoch']}")
    return 0


COMMANDS = {"ingest": cmd_ingest, "augment": cmd_augment, "train": cmd_train, "eval": cmd_eval,
            "ensemble": cmd_ensemble, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CommandError, CheckpointError, ValueError, KeyError, FileNotFoundError,
            json.JSONDecodeError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
