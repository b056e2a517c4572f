"""Nearest-neighbour labelling against a training embedding index.

A query is judged only when some training embedding lies within
``max_distance``. The voting band is the nearest distance rounded up to the
``step`` grid; every entry inside the band votes and a strict majority of
vulnerable votes makes the verdict vulnerable.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, EmptyIndex


class Outcome(str, enum.Enum):
    VULNERABLE = "Vulnerable"
    NON_VULNERABLE = "NonVulnerable"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class SiblingConfig:
    max_distance: float = 0.1
    step: float = 0.00001

    def __post_init__(self):
        if not 0 < self.step < self.max_distance:
            raise ValueError("need 0 < step < max_distance")


@dataclass(frozen=True)
class Voter:
    id: str
    distance: float
    label: int


@dataclass(frozen=True)
class SiblingVerdict:
    outcome: Outcome
    band_threshold: float | None = None
    voters: tuple[Voter, ...] = ()

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "band_threshold": self.band_threshold,
            "voters": [{"id": v.id, "distance": v.distance, "label": v.label} for v in self.voters],
        }


def euclidean(q, p) -> float:
    q, p = np.asarray(q, dtype=np.float64), np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise DimensionMismatch(f"{q.shape} vs {p.shape}")
    return float(np.linalg.norm(q - p))


@dataclass
class TrainingIndex:
    vulnerability: str
    ids: list[str]
    vectors: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DimensionMismatch("index vectors must form a 2-D array")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("index ids must be unique")
        if not (len(self.ids) == len(self.vectors) == len(self.labels)):
            raise ValueError("ids, vectors and labels differ in length")

    @classmethod
    def build(cls, vulnerability: str, entries: Iterable[tuple[str, Sequence[float], int]]) -> "TrainingIndex":
        entries = list(entries)
        dims = {len(v) for _, v, _ in entries}
        if len(dims) > 1:
            raise DimensionMismatch(f"mixed embedding dimensions {sorted(dims)}")
        dim = dims.pop() if dims else 0
        vectors = np.array([v for _, v, _ in entries], dtype=np.float64).reshape(len(entries), dim)
        return cls(vulnerability, [e[0] for e in entries], vectors, [int(e[2]) for e in entries])

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def distances(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise DimensionMismatch(f"query of shape {q.shape}, index dimension {self.dimension}")
        return np.sqrt(((self.vectors - q) ** 2).sum(axis=1))

    # -- JSONL file: header line, then one entry per line -------------------

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"vulnerability": self.vulnerability, "dimension": self.dimension}) + "\n")
            for i, v, y in zip(self.ids, self.vectors, self.labels):
                fh.write(json.dumps({"id": i, "label": int(y), "vector": v.tolist()}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrainingIndex":
        with open(path) as fh:
            header = json.loads(fh.readline())
            rows = [json.loads(line) for line in fh if line.strip()]
        index = cls.build(header["vulnerability"], ((r["id"], r["vector"], r["label"]) for r in rows))
        if rows and index.dimension != header["dimension"]:
            raise DimensionMismatch(f"header says {header['dimension']}, rows have {index.dimension}")
        return index


def band_threshold(nearest: float, step: float) -> float:
    """Smallest multiple of ``step`` that is >= ``nearest``."""
    m = math.ceil(nearest / step)
    # float division can land one step off either way
    while m > 0 and (m - 1) * step >= nearest:
        m -= 1
    while m * step < nearest:
        m += 1
    return m * step


def vote(voters: Sequence[Voter]) -> Outcome:
    positive = sum(v.label for v in voters)
    return Outcome.VULNERABLE if 2 * positive > len(voters) else Outcome.NON_VULNERABLE


def sibling_lookup(q, index: TrainingIndex, config: SiblingConfig = SiblingConfig()) -> SiblingVerdict:
    if len(index) == 0:
        raise EmptyIndex(f"{index.vulnerability}: index is empty")
    d = index.distances(q)
    nearest = float(d.min())
    if nearest > config.max_distance:
        return SiblingVerdict(Outcome.UNKNOWN)
    t = band_threshold(nearest, config.step)
    inside = sorted(np.flatnonzero(d <= t), key=lambda i: (d[i], index.ids[i]))
    voters = tuple(Voter(index.ids[i], float(d[i]), int(index.labels[i])) for i in inside)
    return SiblingVerdict(vote(voters), t, voters)


def find_contradictions(index: TrainingIndex, epsilon: float, chunk: int = 1024) -> list[tuple[str, str, float]]:
    """Pairs closer than ``epsilon`` whose labels differ, nearest first."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    pos = np.flatnonzero(index.labels == 1)
    neg = np.flatnonzero(index.labels != 1)
    out = []
    for start in range(0, len(pos), chunk):
        rows = pos[start : start + chunk]
        d = cdist(index.vectors[rows], index.vectors[neg])
        for i, j in zip(*np.nonzero(d <= epsilon)):
            a, b = sorted((index.ids[rows[i]], index.ids[neg[j]]))
            out.append((a, b, float(d[i, j])))
    out.sort(key=lambda r: (r[2], r[0], r[1]))
    return out
