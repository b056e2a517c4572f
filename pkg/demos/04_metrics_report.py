"""Confusion matrices, rates, AUC and the result-table layout.

Scores two imbalanced detectors on the same labels and prints the table the
``evaluate`` command produces, with balanced and plain accuracy side by side
to show why they diverge when positives are rare.
"""

import numpy as np

from evmvuln.metrics import confusion, format_table, report


def main():
    rng = np.random.default_rng(4)
    truth = (rng.random(2000) < 0.05).astype(int)
    sharp = np.clip(truth * 0.55 + rng.normal(0.25, 0.15, truth.size), 0, 1)
    vague = np.clip(truth * 0.15 + rng.normal(0.4, 0.2, truth.size), 0, 1)

    rows = []
    for name, scores in (("sharp-detector", sharp), ("vague-detector", vague)):
        cm = confusion(scores >= 0.5, truth)
        rows.append((name, cm, report(cm, scores, truth)))

    print(f"{truth.sum()} positives among {truth.size}\n")
    print(format_table(rows, "balanced"))
    print()
    print(format_table(rows, "plain"))


if __name__ == "__main__":
    main()
