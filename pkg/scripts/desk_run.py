"""Desk-scale end-to-end run through the command line.

Synthesizes a 4-class striped-image dataset, ingests it, trains the five
mini architectures, evaluates each on the test split, fuses three of them
and writes a consolidated report.

    python scripts/desk_run.py --out runs/desk --per-class 120 --epochs 8
"""
import argparse
from pathlib import Path

from dvsnet.cli import main as dvsnet
from dvsnet.data.synthetic import write_dataset

ARCHS = ("vgg-mini", "resnet-mini", "se-resnet-mini", "resnext-mini", "densenet-mini")
MEMBERS = ("densenet-mini", "vgg-mini", "se-resnet-mini")


def step(*argv):
    argv = [str(a) for a in argv]
    print("$ dvsnet " + " ".join(argv))
    if dvsnet(argv) != 0:
        raise SystemExit(f"step failed: {argv[0]}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--per-class", type=int, default=120)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--variants", type=int, default=10, help="augmented copies per training image")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out, seed = args.out, args.seed
    write_dataset(out / "raw", args.per_class, size=args.size, seed=seed)
    step("ingest", out / "raw", "--out", out / "data", "--seed", seed)
    common = ["--data", out / "data", "--seed", seed]
    for arch in ARCHS:
        step("train", *common, "--arch", arch, "--epochs", args.epochs, "--image-size", args.size,
             "--augment-variants", args.variants, "--lr", "1e-3",
             "--out", out / arch)
        step("eval", *common, "--checkpoint", out / arch / "model.ckpt", "--out", out / arch)
    step("ensemble", *[out / m / "model.ckpt" for m in MEMBERS], *common, "--out", out / "ensemble")
    step("report", *[out / a for a in ARCHS], "--out", out / "report", "--seed", seed)
    print(f"\nartifacts under {out.resolve()}")


if __name__ == "__main__":
    main()
