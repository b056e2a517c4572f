"""Core classifier, joint SC2V+CC training, and vulnerability model files."""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import persist
from .errors import EmptyDataset, ShapeMismatch, SingleClassDataset
from .grid import SHIPPED, Architecture
from .nn import Activation, Adam, BatchNorm, Dense, Dropout, Module, Sequential, TrainConfig, bce_loss, stream
from .nn.functional import sigmoid
from .sc2v import GraphBatch, GraphSample, Sc2vNet

log = logging.getLogger(__name__)

SORTPOOL_K = {"large": 100, "small": 30}
DEFAULT_THRESHOLD = 0.5

VULNERABILITIES_LARGE = (
    "shadowing-state", "suicidal", "uninitialized-state", "arbitrary-send",
    "controlled-array-length", "controlled-delegatecall", "reentrancy-eth", "unchecked-transfer",
    "erc20-interface", "incorrect-equality", "locked-ether", "mapping-deletion",
    "shadowing-abstract", "tautology", "write-after-write", "constant-function-asm",
    "constant-function-state", "divide-before-multiply", "reentrancy-no-eth", "tx-origin",
    "unchecked-lowlevel", "unchecked-send", "uninitialized-local", "unused-return",
    "incorrect-modifier", "shadowing-builtin", "shadowing-local", "variable-scope", "void-cst",
)
_LARGE_ONLY = {
    "mapping-deletion", "shadowing-abstract", "tautology", "write-after-write",
    "constant-function-state", "tx-origin", "variable-scope", "void-cst",
}
VULNERABILITIES_SMALL = tuple(v for v in VULNERABILITIES_LARGE if v not in _LARGE_ONLY)


class Label(str, enum.Enum):
    VULNERABLE = "vulnerable"
    NON_VULNERABLE = "non_vulnerable"


def classify(probability: float, threshold: float = DEFAULT_THRESHOLD) -> Label:
    return Label.VULNERABLE if probability >= threshold else Label.NON_VULNERABLE


class CoreClassifier(Module):
    """Dense -> BatchNorm -> activation -> Dropout per hidden layer, then a sigmoid unit."""

    def __init__(self, input_dim: int, hidden: Sequence[int] = (1024, 512), activation: str = "relu",
                 dropout: float = 0.5, rng=None, seed: int = 0):
        rng = rng if rng is not None else stream(seed, "cc-init")
        self.input_dim = input_dim
        layers: list[Module] = []
        width = input_dim
        for i, h in enumerate(hidden, start=1):
            layers += [Dense(width, h, rng, f"cc.dense{i}"), BatchNorm(h, f"cc.bn{i}"),
                       Activation(activation), Dropout(dropout)]
            width = h
        layers.append(Dense(width, 1, rng, f"cc.dense{len(hidden) + 1}"))
        self.net = Sequential(*layers)

    def parameters(self):
        return self.net.parameters()

    def buffers(self):
        return self.net.buffers()

    def set_buffer(self, name, value, loaded=True):
        self.net.set_buffer(name, value, loaded)

    def train(self, mode: bool = True):
        self.training = mode
        self.net.train(mode)
        return self

    def norm_layers(self) -> list[BatchNorm]:
        return [l for l in self.net.layers if isinstance(l, BatchNorm)]

    def forward(self, x: np.ndarray, rng=None) -> np.ndarray:
        if x.shape[-1] != self.input_dim:
            raise ShapeMismatch(f"embedding width {x.shape[-1]}, classifier expects {self.input_dim}")
        self._p = sigmoid(self.net.forward(x, rng))[:, 0]
        return self._p

    def backward(self, dp: np.ndarray) -> np.ndarray:
        p = self._p
        return self.net.backward((dp * p * (1 - p))[:, None])


def cc_forward(embedding, cc: CoreClassifier, mode: str = "infer", rng=None) -> float:
    """Probability for one embedding (a vector or a ContractEmbedding)."""
    vec = np.asarray(getattr(embedding, "vector", embedding))
    was = cc.training
    cc.train(mode == "train")
    try:
        return float(cc.forward(vec[None, :].astype(cc.parameters()[0].value.dtype), rng)[0])
    finally:
        cc.train(was)


@dataclass
class TrainingHistory:
    initial_loss: float
    train_losses: list[float] = field(default_factory=list)
    valid_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    single_class: bool = False


class VulnerabilityModel:
    def __init__(self, vulnerability: str, size_class: str, architecture: Architecture = SHIPPED,
                 seed: int = 0, encoder_ref: str = "", threshold: float = DEFAULT_THRESHOLD):
        if size_class not in SORTPOOL_K:
            raise ValueError(f"size class must be one of {sorted(SORTPOOL_K)}")
        self.vulnerability, self.size_class = vulnerability, size_class
        self.architecture, self.seed = architecture, seed
        self.encoder_ref, self.threshold = encoder_ref, threshold
        rng = stream(seed, "init")
        self.sc2v = Sc2vNet(architecture.sc2v_config(SORTPOOL_K[size_class]), rng)
        self.cc = CoreClassifier(self.sc2v.config.embedding_dim, architecture.dense_hidden,
                                 architecture.activation, rng=rng)
        self.history: TrainingHistory | None = None

    @property
    def embedding_dim(self) -> int:
        return self.sc2v.config.embedding_dim

    def parameters(self):
        return [*self.sc2v.parameters(), *self.cc.parameters()]

    def train(self, mode: bool = True):
        self.sc2v.train(mode)
        self.cc.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {p.name: p.value for p in self.parameters()}
        out.update(self.cc.buffers())
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if tensors[p.name].shape != p.shape:
                raise ShapeMismatch(f"{p.name}: stored {tensors[p.name].shape}, expected {p.shape}")
            p.value = tensors[p.name].astype(np.float32, copy=True)
            p.grad = np.zeros_like(p.value)
        for name in self.cc.buffers():
            self.cc.set_buffer(name, tensors[name].astype(np.float32, copy=True))

    # -- inference --------------------------------------------------------

    def forward(self, samples: Sequence[GraphSample], rng=None) -> np.ndarray:
        emb = self.sc2v.forward_batch(GraphBatch.of(samples))
        return self.cc.forward(emb, rng)

    def backward(self, dp: np.ndarray) -> None:
        self.sc2v.backward_batch(self.cc.backward(dp))

    def recalibrate(self, samples: Sequence[GraphSample], chunk: int = 512) -> None:
        """Replace normalisation statistics with exact ones over ``samples``.

        Batches are normalised with their own statistics as in training,
        dropout is off, and no parameter changes.
        """
        self.eval()
        norms = self.cc.norm_layers()
        for bn in norms:
            bn.train(True)
            bn.begin_census()
        emb = self.embed(samples)
        for bn in norms:
            bn.train(True)
        for i in range(0, len(samples), chunk):
            self.cc.forward(emb[i : i + chunk])
        for bn in norms:
            bn.end_census()
        self.eval()

    def embed(self, samples: Sequence[GraphSample], chunk: int = 256) -> np.ndarray:
        self.eval()
        parts = [self.sc2v.forward_batch(GraphBatch.of(samples[i : i + chunk]))
                 for i in range(0, len(samples), chunk)]
        return np.concatenate(parts) if parts else np.zeros((0, self.embedding_dim), np.float32)

    def predict_proba(self, samples: Sequence[GraphSample], chunk: int = 256) -> np.ndarray:
        self.eval()
        parts = [self.forward(samples[i : i + chunk]) for i in range(0, len(samples), chunk)]
        return np.concatenate(parts) if parts else np.zeros(0, np.float32)

    def predict(self, samples: Sequence[GraphSample]) -> list[Label]:
        return [classify(p, self.threshold) for p in self.predict_proba(samples)]

    def metadata(self) -> dict:
        return {
            "kind": "vulnerability-model",
            "vulnerability": self.vulnerability,
            "size_class": self.size_class,
            "architecture": self.architecture.to_dict(),
            "threshold": self.threshold,
            "seed": self.seed,
            "encoder_ref": self.encoder_ref,
        }


def _loss(model: VulnerabilityModel, samples: Sequence[GraphSample]) -> float:
    y = np.array([s.label for s in samples], dtype=np.float32)
    return bce_loss(model.predict_proba(samples), y)[0]


def _snapshot(model: VulnerabilityModel) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in model.named_tensors().items()}


def train_model(train: Sequence[GraphSample], valid: Sequence[GraphSample], vulnerability: str,
                config: TrainConfig = TrainConfig(), architecture: Architecture = SHIPPED,
                size_class: str = "large", encoder_ref: str = "", recalibrate: bool = True) -> VulnerabilityModel:
    """Jointly fit SC2V and the classifier with BCE, early-stopping on validation loss.

    The returned model carries the weights of the best validation epoch and
    a ``history`` describing the run.
    """
    if not train or not valid:
        raise EmptyDataset("training and validation sets must both be non-empty")
    model = VulnerabilityModel(vulnerability, size_class, architecture, config.seed, encoder_ref)
    labels = np.array([s.label for s in train], dtype=np.float32)
    single = len(np.unique(labels)) < 2
    if single:
        warnings.warn(f"{vulnerability}: training labels are all {int(labels[0])}", SingleClassDataset)
    history = TrainingHistory(initial_loss=_loss(model, train), single_class=single)
    best_loss, best = np.inf, _snapshot(model)
    opt = Adam(model.parameters(), config.learning_rate)
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = stream(config.seed, "shuffle", epoch).permutation(len(train))
        drop = stream(config.seed, "dropout", epoch)
        model.train()
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            p = model.forward([train[i] for i in idx], drop)
            _, dp = bce_loss(p, labels[idx])
            model.backward(dp)
            opt.step()
        if recalibrate:
            model.recalibrate(train, config.batch_size)
        history.train_losses.append(_loss(model, train))
        history.valid_losses.append(v := _loss(model, valid))
        log.info("%s epoch %d train %.4f valid %.4f", vulnerability, epoch, history.train_losses[-1], v)
        if v < best_loss:
            best_loss, best, stale = v, _snapshot(model), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    model.load_tensors(best)
    model.history = history
    model.eval()
    return model


def save_model(model: VulnerabilityModel, path: str | Path) -> None:
    persist.save(path, model.metadata(), model.named_tensors())


def load_model(path: str | Path) -> VulnerabilityModel:
    meta, tensors = persist.load(path)
    if meta.get("kind") != "vulnerability-model":
        raise ValueError(f"{path} holds a {meta.get('kind')!r}, not a vulnerability model")
    model = VulnerabilityModel(
        meta["vulnerability"], meta["size_class"], Architecture.from_dict(meta["architecture"]),
        meta["seed"], meta["encoder_ref"], meta["threshold"],
    )
    model.load_tensors(tensors)
    return model.eval()
