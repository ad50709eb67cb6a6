"""Recompute the reference arithmetic the package is checked against.

Prints the per-class table of the reference ensemble confusion matrix, the
single-model accuracy, the split rule on the reference class sizes, the
valid-padding shape chain and the DenseNet head widths.  No training.

    python scripts/check_reference_arithmetic.py
"""
import numpy as np

from dvsnet.architectures import feature_width, full_profile
from dvsnet.conv import ConvSpec, conv_output_size, receptive_field
from dvsnet.data.dataset import split_counts_for
from dvsnet.metrics import ConfusionMatrix, accuracy, classification_report

CLASSES = ["Benign", "Malignant Early Pre-B", "Malignant Pre-B", "Malignant Pro-B"]
ENSEMBLE_CM = np.array([[1436, 10, 1, 17], [175, 3064, 81, 6], [23, 131, 3088, 2], [23, 1, 2, 2564]])
DENSENET_CM = np.array([[1559, 69, 12, 1], [96, 3180, 4, 1], [1, 6, 3182, 1], [14, 0, 0, 2626]])
CLASS_SIZES = (505, 796, 955, 979)


def main():
    print("ensemble confusion matrix (rows = predicted)")
    print(classification_report(ConfusionMatrix(ENSEMBLE_CM, CLASSES)).render())
    print(f"\nsingle-model accuracy: {accuracy(ConfusionMatrix(DENSENET_CM)):.5f}")

    print("\nsplit rule  n -> train / validation / test")
    rows = [split_counts_for(n) for n in CLASS_SIZES]
    for n, r in zip(CLASS_SIZES, rows):
        print(f"  {n:4d} -> {r[0]} / {r[1]} / {r[2]}")
    print("  total -> " + " / ".join(str(sum(c)) for c in zip(*rows)))

    chain = [224]
    for _ in range(3):
        chain.append(conv_output_size(ConvSpec(chain[-1], 3)))
    print(f"\nthree valid 3x3 convs: {' -> '.join(map(str, chain))}; "
          f"one 7x7: 224 -> {conv_output_size(ConvSpec(224, 7))}; "
          f"receptive field {receptive_field([(3, 1)] * 3)} vs {receptive_field([(7, 1)])}")

    for name in ("densenet201", "densenet161"):
        print(f"{name} features entering the head: {feature_width(full_profile(name))}")


if __name__ == "__main__":
    main()
