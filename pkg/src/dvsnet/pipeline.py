"""End-to-end steps shared by the command line and the experiment scripts.

Every artifact written here carries ``seed``, ``config_digest`` and
``version``: JSON files as keys, CSV files as a leading ``#`` comment line.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from . import __version__
from .architectures import build_model, count_parameters
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .config import RunConfig, config_digest, resolve_architecture
from .data.augment import augment_images
from .data.dataset import SPLITS, LabeledImage, ingest_dataset, split_dataset
from .data.transforms import normalize_batch, resize_image
from .ensemble import (EnsembleSpec, ensemble_predict, fit_linear_fusion, read_probabilities,
                       write_probabilities)
from .metrics import ConfusionMatrix, MetricsReport, classification_report, confusion_matrix
from .training import TrainingHistory, predict_proba, train

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def artifact_meta(seed: int, cfg: dict) -> dict:
    return {"seed": int(seed), "config_digest": config_digest(cfg), "version": __version__}


def comment(meta: dict) -> str:
    return f"dvsnet {meta['version']} seed={meta['seed']} config={meta['config_digest']}"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _write_csv(path, header: Sequence[str], rows, meta: dict | None) -> Path:
    buf = io.StringIO()
    if meta is not None:
        buf.write(f"# {comment(meta)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())
    return Path(path)


def read_csv_rows(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- ingest ------------------------------------------------------------------

def build_manifest(root, seed: int = 0, ratios=(0.7, 0.2, 0.1)) -> dict:
    ds = split_dataset(ingest_dataset(root), ratios, seed)
    split_counts = ds.split_counts()
    totals = {s: sum(c[s] for c in split_counts.values()) for s in SPLITS}
    cfg = {"root": str(Path(root).resolve()), "seed": seed, "ratios": list(ratios)}
    return {
        **artifact_meta(seed, cfg),
        "root": cfg["root"],
        "ratios": list(ratios),
        "class_names": ds.class_names,
        "counts": ds.counts(),
        "total": len(ds.images),
        "splits": split_counts,
        "split_totals": totals,
        "images": [{"file": img.origin, "label": img.label, "split": s}
                   for img, s in sorted(zip(ds.images, ds.splits), key=lambda p: p[0].origin)],
    }


def count_table(manifest: dict) -> str:
    rows = [["class", "images", *SPLITS]]
    for name in manifest["class_names"]:
        sc = manifest["splits"][name]
        rows.append([name, str(manifest["counts"][name]), *(str(sc[s]) for s in SPLITS)])
    rows.append(["total", str(manifest["total"]), *(str(manifest["split_totals"][s]) for s in SPLITS)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
                     for r in rows)


def load_manifest(path) -> dict:
    """Accept ``dataset.json``, a directory holding one, or a raw class-folder root."""
    path = Path(path)
    if path.is_dir() and (path / "dataset.json").exists():
        path = path / "dataset.json"
    if path.is_file():
        return json.loads(path.read_text())
    if path.is_dir():
        return build_manifest(path)
    raise FileNotFoundError(f"dataset {path} not found")


def load_images(manifest: dict, split: str) -> list[LabeledImage]:
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")
    root = Path(manifest["root"])
    out = []
    for e in manifest["images"]:
        if e["split"] != split:
            continue
        f = root / e["file"]
        if not f.exists():
            raise FileNotFoundError(f"dataset file {f} is missing")
        with Image.open(f) as im:
            out.append(LabeledImage(np.asarray(im.convert("RGB"), dtype=np.uint8), e["label"], e["file"]))
    return out


def to_arrays(images: Sequence[LabeledImage], image_size: int):
    """``(x [N,3,S,S] float32, y [N], ids)`` after bilinear resize and /255 scaling."""
    x = normalize_batch([resize_image(im.pixels, (image_size, image_size)) for im in images])
    y = np.asarray([im.label for im in images], dtype=np.int64)
    return x, y, [im.origin for im in images]


# -- train -------------------------------------------------------------------

def write_history(history: TrainingHistory, path, meta: dict) -> Path:
    rows = [[r.epoch, repr(r.train_loss), repr(r.train_accuracy), repr(r.val_loss), repr(r.val_accuracy)]
            for r in history.records]
    return _write_csv(path, HISTORY_COLUMNS, rows, meta)


def run_training(cfg: RunConfig, manifest: dict, out_dir, record_wall_time: bool = False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = len(manifest["class_names"])
    arch = resolve_architecture(cfg.architecture, cfg.image_size, k)
    run_dict = cfg.to_dict()
    del run_dict["out"]  # where results land is not part of the experiment
    run_dict["dataset_digest"] = manifest.get("config_digest")
    meta = artifact_meta(cfg.seed, run_dict)

    train_imgs = load_images(manifest, "train")
    val_imgs = load_images(manifest, "validation")
    if not train_imgs or not val_imgs:
        raise ValueError("training needs non-empty train and validation splits")
    if cfg.augment.variants > 0:
        train_imgs = augment_images(train_imgs, cfg.augment)
    x_tr, y_tr, _ = to_arrays(train_imgs, cfg.image_size)
    x_va, y_va, _ = to_arrays(val_imgs, cfg.image_size)

    model = build_model(arch, seed=cfg.seed)
    start = time.perf_counter()
    model, history = train(model, (x_tr, y_tr), (x_va, y_va), cfg.training)
    elapsed = time.perf_counter() - start

    save_checkpoint(model, out / "model.ckpt", cfg.training, epoch=history.best_epoch,
                    extra={**meta, "class_names": manifest["class_names"], "image_size": cfg.image_size})
    write_history(history, out / "history.csv", meta)
    best = history.records[history.best_epoch - 1] if history.best_epoch else history.records[-1]
    report = {
        **meta,
        "architecture": arch.name or arch.family,
        "parameters": count_parameters(model),
        "best_epoch": history.best_epoch,
        "best_val_loss": best.val_loss,
        "epochs_run": len(history),
        "stopped_early": history.stopped_early,
        "n_train": len(x_tr),
        "n_validation": len(x_va),
        "class_names": manifest["class_names"],
    }
    if record_wall_time:
        report["wall_time_s"] = round(elapsed, 3)
    write_json(out / "train_report.json", report)
    return report


# -- eval --------------------------------------------------------------------

def checkpoint_meta(path) -> dict:
    manifest, _ = read_checkpoint(path)
    return manifest.get("extra") or {}


def member_probabilities(ckpt, manifest: dict, split: str):
    model = load_checkpoint(ckpt)
    k = len(manifest["class_names"])
    if model.config.num_classes != k:
        raise ValueError(f"{ckpt}: checkpoint has {model.config.num_classes} classes, "
                         f"dataset has {k}")
    images = load_images(manifest, split)
    if not images:
        raise ValueError(f"split {split!r} is empty")
    x, y, ids = to_arrays(images, model.config.input_shape[1])
    return predict_proba(model, x).astype(np.float64), y, ids


def write_metrics(cm: ConfusionMatrix, out_dir, meta: dict, **extra) -> MetricsReport:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cm.to_csv(out / "confusion.csv")
    report = classification_report(cm)
    report.to_json(out / "metrics.json", **meta, **extra)
    return report


def run_eval(ckpt, manifest: dict, split: str, out_dir) -> MetricsReport:
    probs, y, ids = member_probabilities(ckpt, manifest, split)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    names = manifest["class_names"]
    cm = confusion_matrix(probs.argmax(axis=1), y, len(names), names)
    meta = checkpoint_meta(ckpt)
    meta = {"seed": meta.get("seed"), "config_digest": meta.get("config_digest"), "version": __version__}
    write_probabilities(Path(out_dir) / "probs.csv", ids, probs, comment(meta))
    return write_metrics(cm, out_dir, meta, split=split, checkpoint=Path(ckpt).name)


# -- ensemble ----------------------------------------------------------------

def fuse(member_probs: list[np.ndarray], y: np.ndarray, names: list[str], spec: EnsembleSpec,
         ids: list[str], out_dir, meta: dict) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = len(names)
    for i, p in enumerate(member_probs):
        if p.shape[1] != k:
            raise ValueError(f"member {spec.members[i]} has {p.shape[1]} classes, expected {k}")
    fused = ensemble_predict(member_probs, spec)
    write_probabilities(out / "fused_probs.csv", ids, fused, comment(meta))
    cm = confusion_matrix(fused.argmax(axis=1), y, k, names)
    report = write_metrics(cm, out, meta, fusion=spec.fusion, members=list(spec.members))
    rows = []
    for name, p in zip(spec.members, member_probs):
        rows.append([name, repr(float(np.mean(p.argmax(axis=1) == y)))])
    rows.append(["ensemble", repr(report.accuracy)])
    _write_csv(out / "members.csv", ("model", "accuracy"), rows, meta)
    return {"accuracy": report.accuracy, "members": {r[0]: float(r[1]) for r in rows[:-1]}}


def ensemble_from_checkpoints(ckpts: list, manifest: dict, split: str, fusion: str, out_dir,
                              weights=None, seed: int = 0) -> dict:
    members, y, ids = [], None, None
    for c in ckpts:
        p, y_c, ids_c = member_probabilities(c, manifest, split)
        if y is not None and ids_c != ids:
            raise ValueError(f"member {c} scored a different sample set")
        members.append(p)
        y, ids = y_c, ids_c
    names = [Path(c).parent.name or Path(c).stem for c in ckpts]
    names = names if len(set(names)) == len(names) else [str(c) for c in ckpts]
    spec = EnsembleSpec(names, fusion, weights)
    if fusion == "trained_linear":
        val = [member_probabilities(c, manifest, "validation") for c in ckpts]
        spec.linear = fit_linear_fusion([v[0] for v in val], val[0][1], seed=seed)
    meta = artifact_meta(seed, {"members": [str(c) for c in ckpts], "fusion": fusion,
                                "weights": weights, "split": split})
    return fuse(members, y, manifest["class_names"], spec, ids, out_dir, meta)


def ensemble_from_csvs(paths: list, manifest: dict, split: str, fusion: str, out_dir,
                       weights=None, seed: int = 0) -> dict:
    labels = {e["file"]: e["label"] for e in manifest["images"]}
    members, ids = [], None
    for p in paths:
        ids_p, probs = read_probabilities(p)
        if ids is not None and ids_p != ids:
            raise ValueError(f"{p}: sample ids differ from the first member")
        ids = ids_p
        members.append(probs)
    missing = [i for i in ids if i not in labels]
    if missing:
        raise ValueError(f"sample {missing[0]!r} is not in the dataset manifest")
    y = np.asarray([labels[i] for i in ids], dtype=np.int64)
    names = [Path(p).parent.name or Path(p).stem for p in paths]
    names = names if len(set(names)) == len(names) else [str(p) for p in paths]
    if fusion == "trained_linear":
        raise ValueError("trained_linear fusion needs member checkpoints (it is fit on the validation split)")
    spec = EnsembleSpec(names, fusion, weights)
    meta = artifact_meta(seed, {"members": [str(p) for p in paths], "fusion": fusion,
                                "weights": weights, "split": split})
    return fuse(members, y, manifest["class_names"], spec, ids, out_dir, meta)


# -- report ------------------------------------------------------------------

REQUIRED = ("history.csv", "metrics.json")


def missing_artifacts(run_dir) -> list[str]:
    return [name for name in REQUIRED if not (Path(run_dir) / name).exists()]


def build_report(run_dirs: list, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    for d in run_dirs:
        d = Path(d)
        hist = read_csv_rows(d / "history.csv")
        metrics = json.loads((d / "metrics.json").read_text())
        tr = d / "train_report.json"
        if tr.exists():
            best_epoch = json.loads(tr.read_text())["best_epoch"]
        else:
            best_epoch = int(min(hist, key=lambda r: float(r["val_loss"]))["epoch"]) if hist else 0
        runs.append({"name": d.resolve().name, "history": hist, "best_epoch": best_epoch,
                     "epochs": len(hist), "accuracy": metrics["accuracy"],
                     "macro": metrics.get("macro", {}), "per_class": metrics.get("per_class", {}),
                     "seed": metrics.get("seed")})
    max_epochs = max((r["epochs"] for r in runs), default=0)
    for curve, cols in (("loss", ("train_loss", "val_loss")), ("accuracy", ("train_acc", "val_acc"))):
        header = ["epoch"] + [f"{r['name']}:{c}" for r in runs for c in cols]
        rows = []
        for e in range(max_epochs):
            row = [e + 1]
            for r in runs:
                row += [r["history"][e][c] if e < r["epochs"] else "" for c in cols]
            rows.append(row)
        _write_csv(out / f"curve_{curve}.csv", header, rows, None)
    ranked = sorted(runs, key=lambda r: (-r["accuracy"], r["name"]))
    _write_csv(out / "comparison.csv", ("model", "accuracy", "macro_precision", "macro_recall", "macro_f1",
                                        "best_epoch"),
               [[r["name"], repr(r["accuracy"]), repr(r["macro"].get("precision")),
                 repr(r["macro"].get("recall")), repr(r["macro"].get("f1")), r["best_epoch"]]
                for r in ranked], None)
    seeds = sorted({r["seed"] for r in runs if r["seed"] is not None})
    meta = artifact_meta(0, {"runs": [r["name"] for r in runs]})
    meta["seed"] = seeds[0] if len(seeds) == 1 else seeds
    report = {**meta, "runs": [{k: v for k, v in r.items() if k != "history"} for r in ranked]}
    write_json(out / "report.json", report)
    return report
