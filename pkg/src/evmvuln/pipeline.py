"""Datasets, size routing, model stores, and the sibling-then-classifier decision."""

from __future__ import annotations

import enum
import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cfg import ControlFlowGraph, build_cfg
from .disasm import DisassemblyListing, RawBytecode, disassemble, parse_hex
from .errors import DuplicateAddress, EmptyCode, MalformedHex, MalformedRecord, MissingLabels
from .metrics import ConfusionMatrix, MetricReport, confusion, report
from .grid import SHIPPED, Architecture
from .model import VulnerabilityModel, cc_forward, classify, load_model, train_model
from .n2v import BlockCorpus, DanEncoder, encode_contract_nodes, load_encoder, train_unsupervised
from .nn import TrainConfig
from .sc2v import GraphSample, normalize_adjacency
from .sibling import Outcome, SiblingConfig, SiblingVerdict, TrainingIndex, sibling_lookup

log = logging.getLogger(__name__)

SMALL_LIMIT = 750
TRAINED_LIMIT = 10_000
ENCODER_FILE = "encoder.dlva"


# -- records ------------------------------------------------------------------

@dataclass(frozen=True)
class ContractRecord:
    address: str
    bytecode: RawBytecode
    labels: dict[str, int] | None = None

    def to_json(self) -> dict:
        out = {"address": self.address, "bytecode": self.bytecode.hex()}
        if self.labels is not None:
            out["labels"] = self.labels
        return out


def _record(obj, line: int) -> ContractRecord:
    if not isinstance(obj, dict):
        raise MalformedRecord(line, "expected a JSON object")
    for key in ("address", "bytecode"):
        if not isinstance(obj.get(key), str):
            raise MalformedRecord(line, f"missing or non-string {key!r}")
    try:
        code = parse_hex(obj["bytecode"])
    except MalformedHex as e:
        raise MalformedRecord(line, f"bytecode: {e}") from e
    labels = obj.get("labels")
    if labels is not None:
        if not isinstance(labels, dict) or any(v not in (0, 1) for v in labels.values()):
            raise MalformedRecord(line, "labels must map names to 0 or 1")
        labels = {str(k): int(v) for k, v in labels.items()}
    return ContractRecord(obj["address"], code, labels)


def ingest(path: str | Path) -> list[ContractRecord]:
    """Read a JSONL dataset, one contract per line, preserving order."""
    records, seen = [], set()
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(n, f"invalid JSON ({e.msg})") from e
            rec = _record(obj, n)
            if rec.address in seen:
                raise DuplicateAddress(f"line {n}: address {rec.address} already seen")
            seen.add(rec.address)
            records.append(rec)
    return records


def write_records(records: Iterable[ContractRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json()) + "\n")


@dataclass(frozen=True)
class DatasetSplit:
    train: list[ContractRecord]
    valid: list[ContractRecord]
    test: list[ContractRecord]


def split_dataset(records: Sequence[ContractRecord]) -> DatasetSplit:
    """First 60% train, next 20% validation, the rest test. No shuffling."""
    n = len(records)
    a = 6 * n // 10
    b = a + 2 * n // 10
    return DatasetSplit(list(records[:a]), list(records[a:b]), list(records[b:]))


# -- routing and featurisation ------------------------------------------------

class SizeClass(str, enum.Enum):
    SMALL = "small"
    LARGE = "large"


@dataclass(frozen=True)
class Route:
    size: SizeClass
    oversize: bool = False  # beyond the largest contracts models were trained on


def route_by_size(listing: DisassemblyListing | int) -> Route:
    n = listing if isinstance(listing, int) else len(listing.instructions)
    if n < SMALL_LIMIT:
        return Route(SizeClass.SMALL)
    return Route(SizeClass.LARGE, n > TRAINED_LIMIT)


@dataclass
class Featurized:
    listing: DisassemblyListing
    cfg: ControlFlowGraph
    route: Route
    sample: GraphSample


def featurize(code: RawBytecode, encoder: DanEncoder, label: int = 0, id: str = "") -> Featurized:
    if len(code) == 0:
        raise EmptyCode(f"{id or 'contract'} has no code")
    listing = disassemble(code)
    cfg = build_cfg(listing)
    nodes = encode_contract_nodes(cfg, encoder)
    sample = GraphSample(normalize_adjacency(cfg), nodes.matrix, label, id)
    return Featurized(listing, cfg, route_by_size(listing), sample)


# -- model store ----------------------------------------------------------------

def model_filename(vulnerability: str, size: str) -> str:
    return f"{vulnerability}.{size}.dlva"


def index_filename(vulnerability: str, size: str) -> str:
    return f"{vulnerability}.{size}.jsonl"


@dataclass
class ModelStore:
    encoder: DanEncoder
    models: dict[tuple[str, str], VulnerabilityModel] = field(default_factory=dict)
    indices: dict[tuple[str, str], TrainingIndex] = field(default_factory=dict)

    @classmethod
    def load(cls, models_dir: str | Path, indices_dir: str | Path | None = None) -> "ModelStore":
        models_dir = Path(models_dir)
        store = cls(load_encoder(models_dir / ENCODER_FILE))
        for path in sorted(models_dir.glob("*.dlva")):
            if path.name == ENCODER_FILE:
                continue
            m = load_model(path)
            store.models[(m.vulnerability, m.size_class)] = m
        for vuln, size in store.models:
            ipath = Path(indices_dir or models_dir) / index_filename(vuln, size)
            if ipath.exists():
                store.indices[(vuln, size)] = TrainingIndex.load(ipath)
        return store

    def vulnerabilities(self) -> list[str]:
        return sorted({v for v, _ in self.models})


def build_index(model: VulnerabilityModel, samples: Sequence[GraphSample]) -> TrainingIndex:
    emb = model.embed(samples)
    return TrainingIndex(model.vulnerability, [s.id for s in samples], emb, [s.label for s in samples])


@dataclass
class FitResult:
    encoder: DanEncoder
    model: VulnerabilityModel
    train: list[GraphSample]
    valid: list[GraphSample]
    test: list[GraphSample]


def fit(records: Sequence[ContractRecord], vulnerability: str, size: str = "small",
        config: TrainConfig = TrainConfig(), dan_epochs: int = 15, encoder: DanEncoder | None = None,
        architecture: Architecture = SHIPPED) -> FitResult:
    """Split, train the block encoder if none is given, then train one model.

    The encoder sees every training-split contract regardless of size; the
    model sees only contracts of its own size class.
    """
    labels_array(records, vulnerability)
    split = split_dataset(records)
    if encoder is None:
        cfgs = [build_cfg(disassemble(r.bytecode)) for r in split.train if len(r.bytecode)]
        encoder, dan_log = train_unsupervised(BlockCorpus.from_cfgs(cfgs),
                                              TrainConfig(max_epochs=dan_epochs, seed=config.seed))
        log.info("encoder trained: loss %.4f -> %.4f", dan_log.initial_loss, dan_log.epoch_losses[-1])

    def samples(recs):
        feats = [featurize(r.bytecode, encoder, r.labels[vulnerability], r.address) for r in recs if len(r.bytecode)]
        return [f.sample for f in feats if f.route.size.value == size]

    train, valid, test = samples(split.train), samples(split.valid), samples(split.test)
    model = train_model(train, valid, vulnerability, config, architecture, size_class=size,
                        encoder_ref=encoder.fingerprint())
    return FitResult(encoder, model, train, valid, test)


# -- decision ----------------------------------------------------------------------

UNSUPPORTED = "unsupported"


@dataclass
class Cell:
    verdict: str  # "vulnerable", "non_vulnerable" or "unsupported"
    provenance: str | None = None  # "SD" or "CC"
    probability: float | None = None
    sibling: SiblingVerdict | None = None
    seconds: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        out = {"verdict": self.verdict, "provenance": self.provenance, "probability": self.probability,
               "sibling": None if self.sibling is None else self.sibling.to_dict()}
        if timing:
            out["seconds"] = self.seconds
        return out


@dataclass
class AnalysisRow:
    address: str
    size_class: str | None = None
    oversize: bool = False
    cells: dict[str, Cell] = field(default_factory=dict)
    error: str | None = None
    seconds: float = 0.0

    def to_dict(self, timing: bool = True) -> dict:
        out = {"address": self.address, "size_class": self.size_class, "oversize": self.oversize,
               "error": self.error, "results": {v: c.to_dict(timing) for v, c in self.cells.items()}}
        if timing:
            out["seconds"] = self.seconds
        return out


def decide(sample: GraphSample, model: VulnerabilityModel, index: TrainingIndex | None,
           use_siblings: bool, sibling_config: SiblingConfig = SiblingConfig()) -> Cell:
    """Sibling verdict when one exists within range, otherwise the classifier's."""
    t0 = time.perf_counter()
    emb = model.embed([sample])[0]
    if use_siblings and index is not None and len(index):
        sib = sibling_lookup(emb, index, sibling_config)
        if sib.outcome is not Outcome.UNKNOWN:
            verdict = "vulnerable" if sib.outcome is Outcome.VULNERABLE else "non_vulnerable"
            return Cell(verdict, "SD", None, sib, time.perf_counter() - t0)
    else:
        sib = None
    p = cc_forward(emb, model.cc)
    return Cell(classify(p, model.threshold).value, "CC", p, sib, time.perf_counter() - t0)


def analyze(record: ContractRecord, store: ModelStore, vulnerabilities: Sequence[str] | None = None,
            sibling_config: SiblingConfig = SiblingConfig()) -> AnalysisRow:
    t0 = time.perf_counter()
    row = AnalysisRow(record.address)
    feat = featurize(record.bytecode, store.encoder, id=record.address)
    size = feat.route.size.value
    row.size_class, row.oversize = size, feat.route.oversize
    if feat.route.oversize:
        log.warning("%s: %d instructions exceeds the trained range", record.address, len(feat.listing))
    for vuln in vulnerabilities or store.vulnerabilities():
        model = store.models.get((vuln, size))
        if model is None:
            row.cells[vuln] = Cell(UNSUPPORTED)
            continue
        # small contracts are judged by the classifier alone
        row.cells[vuln] = decide(feat.sample, model, store.indices.get((vuln, size)),
                                 size == SizeClass.LARGE.value, sibling_config)
    row.seconds = time.perf_counter() - t0
    return row


def analyze_batch(records: Iterable[ContractRecord], store: ModelStore,
                  vulnerabilities: Sequence[str] | None = None,
                  sibling_config: SiblingConfig = SiblingConfig()) -> list[AnalysisRow]:
    """One row per record in input order; a failing contract yields an error row."""
    rows = []
    for rec in records:
        try:
            rows.append(analyze(rec, store, vulnerabilities, sibling_config))
        except Exception as e:  # per-contract isolation
            log.debug("analysis of %s failed\n%s", rec.address, traceback.format_exc())
            rows.append(AnalysisRow(rec.address, error=f"{type(e).__name__}: {e}"))
    return rows


# -- evaluation ---------------------------------------------------------------------

MODES = ("cc-only", "sd-easy", "cc-hard", "sd+cc")


@dataclass
class Evaluation:
    vulnerability: str
    mode: str
    matrix: ConfusionMatrix
    report: MetricReport | None
    population: int
    unsupported: int = 0


def evaluate(records: Sequence[ContractRecord], store: ModelStore, mode: str,
             vulnerabilities: Sequence[str] | None = None,
             sibling_config: SiblingConfig = SiblingConfig()) -> list[Evaluation]:
    """Score the chosen decision path on labelled records.

    ``sd-easy`` keeps contracts with a training sibling in range and judges
    them by vote; ``cc-hard`` keeps the rest and judges them by classifier;
    ``sd+cc`` is the full composition; ``cc-only`` ignores siblings.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    vulns = list(vulnerabilities or store.vulnerabilities())
    for r in records:
        missing = [v for v in vulns if not r.labels or v not in r.labels]
        if missing:
            raise MissingLabels(f"{r.address}: no label for {', '.join(missing)}")
    feats = [featurize(r.bytecode, store.encoder, id=r.address) for r in records]
    out = []
    for vuln in vulns:
        preds, truth, scores, unsupported = [], [], [], 0
        for rec, feat in zip(records, feats):
            size = feat.route.size.value
            model = store.models.get((vuln, size))
            if model is None:
                unsupported += 1
                continue
            use_sd = mode != "cc-only" and size == SizeClass.LARGE.value
            cell = decide(feat.sample, model, store.indices.get((vuln, size)), use_sd, sibling_config)
            by_sd = cell.provenance == "SD"
            if (mode == "sd-easy" and not by_sd) or (mode == "cc-hard" and by_sd):
                continue
            preds.append(cell.verdict == "vulnerable")
            truth.append(rec.labels[vuln])
            scores.append(cell.probability)
        cm = confusion(preds, truth)
        cc_scored = preds and all(s is not None for s in scores)
        rep = report(cm, scores if cc_scored else None, truth if cc_scored else None) if cm.total else None
        out.append(Evaluation(vuln, mode, cm, rep, cm.total, unsupported))
    return out


def labels_array(records: Sequence[ContractRecord], vulnerability: str) -> np.ndarray:
    try:
        return np.array([r.labels[vulnerability] for r in records], dtype=np.int64)
    except (KeyError, TypeError) as e:
        raise MissingLabels(f"records lack labels for {vulnerability}") from e
