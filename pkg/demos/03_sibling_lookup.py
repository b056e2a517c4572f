"""Nearest-neighbour verdicts and label contradictions over an embedding index.

Builds a small index of labelled points, then shows the three things a
lookup can return: a vote among neighbours inside the distance band, a tie
that resolves to non-vulnerable, and Unknown when nothing is close enough.
Finally it lists pairs of near-identical entries whose labels disagree.
"""

import numpy as np

from evmvuln.sibling import SiblingConfig, TrainingIndex, find_contradictions, sibling_lookup


def show(name, query, index, config=SiblingConfig()):
    v = sibling_lookup(query, index, config)
    band = "-" if v.band_threshold is None else f"{v.band_threshold:.5f}"
    voters = ", ".join(f"{x.id}({x.label}) d={x.distance:.4f}" for x in v.voters) or "none"
    print(f"{name:<22} {v.outcome.value:<14} band {band:<8} voters: {voters}")


def main():
    rng = np.random.default_rng(0)
    entries = [
        ("a", [0.00, 0.00, 0.00], 1),
        ("b", [0.02, 0.00, 0.00], 1),
        ("c", [0.02, 0.00, 0.00], 0),   # same point as b, opposite label
        ("d", [1.00, 1.00, 1.00], 0),
        ("e", [1.00, 1.00, 1.05], 0),
    ]
    entries += [(f"r{i}", rng.normal(3, 0.5, 3).tolist(), int(rng.integers(2))) for i in range(20)]
    index = TrainingIndex.build("reentrancy-eth", entries)
    print(f"index: {len(index)} entries of dimension {index.dimension}\n")

    show("next to a", [0.001, 0.0, 0.0], index)
    show("on the b/c tie", [0.02, 0.0, 0.0], index)
    show("between d and e", [1.0, 1.0, 1.02], index)
    show("far from everything", [-5.0, -5.0, -5.0], index)
    show("tight radius", [0.05, 0.0, 0.0], index, SiblingConfig(max_distance=0.01))

    print("\nlabel contradictions within 0.05:")
    for a, b, d in find_contradictions(index, 0.05):
        print(f"  {a} / {b}  distance {d:.4f}")


if __name__ == "__main__":
    main()
