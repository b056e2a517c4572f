"""Basic-block encoder: opcode "sentences" to unit-norm 512-vectors.

A deep averaging network: mean of token embeddings, two tanh dense layers,
L2 normalisation. Trained without labels by contrasting each block with a
CFG neighbour against uniformly drawn blocks.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cfg import BasicBlock, ControlFlowGraph
from .errors import EmptyCorpus
from .nn import Adam, Dense, TrainConfig, stream
from .nn.functional import tanh_grad_from_output
from .nn.layers import Parameter
from .opcodes import OPCODES

log = logging.getLogger(__name__)

OUTPUT_DIM = 512
EMBED_DIM = 128
NEGATIVES = 8
SCORE_SCALE = 10.0  # cosine scores are divided by a 0.1 temperature before the softmax


class TokenVocab:
    PAD, UNK = "PAD", "UNK"

    def __init__(self, tokens: Sequence[str] | None = None):
        if tokens is None:
            tokens = (
                [self.PAD, self.UNK]
                + [info.mnemonic for _, info in sorted(OPCODES.items())]
                + [f"IMM_{v:02X}" for v in range(256)]
                + [f"PUSHDATA_{n}" for n in range(2, 33)]
            )
        self.tokens = list(tokens)
        self.ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self.ids) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.ids

    def id(self, token: str) -> int:
        return self.ids.get(token, self.ids[self.UNK])

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TokenVocab":
        return cls([line for line in Path(path).read_text().splitlines() if line])


DEFAULT_VOCAB = TokenVocab()


def tokenize_block(block: BasicBlock | Iterable) -> list[str]:
    """One token per mnemonic plus one per PUSH immediate.

    PUSH1 immediates keep their byte value (``IMM_xx``); wider immediates
    collapse to a length class (``PUSHDATA_n``). Undefined bytes become UNK.
    """
    instructions = block.instructions if isinstance(block, BasicBlock) else block
    out = []
    for ins in instructions:
        if ins.unknown_opcode:
            out.append(TokenVocab.UNK)
            continue
        out.append(ins.mnemonic)
        n = len(ins.immediate)
        if n == 1:
            out.append(f"IMM_{ins.immediate[0]:02X}")
        elif n > 1:
            out.append(f"PUSHDATA_{n}")
    return out


@dataclass
class NodeEmbeddingMatrix:
    ids: list[int]
    matrix: np.ndarray  # (len(ids), 512) float32

    def row(self, block_id: int) -> np.ndarray:
        return self.matrix[self.ids.index(block_id)]


class DanEncoder:
    def __init__(self, vocab: TokenVocab = DEFAULT_VOCAB, seed: int = 0,
                 embed_dim: int = EMBED_DIM, out_dim: int = OUTPUT_DIM):
        rng = stream(seed, "dan-init")
        self.vocab = vocab
        self.embedding = Parameter(
            rng.normal(0, 1 / np.sqrt(embed_dim), (len(vocab), embed_dim)).astype(np.float32),
            "dan.embedding",
        )
        self.hidden1 = Dense(embed_dim, out_dim, rng, "dan.hidden1")
        self.hidden2 = Dense(out_dim, out_dim, rng, "dan.hidden2")
        # nonzero biases keep the empty-block image away from the origin
        self.hidden1.b.value[:] = rng.uniform(-0.1, 0.1, out_dim)
        self.hidden2.b.value[:] = rng.uniform(-0.1, 0.1, out_dim)
        self.seed = seed

    def parameters(self) -> list[Parameter]:
        return [self.embedding, *self.hidden1.parameters(), *self.hidden2.parameters()]

    def named_tensors(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.parameters()}

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.value = tensors[p.name].copy()
            p.grad = np.zeros_like(p.value)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.name.encode())
            h.update(np.ascontiguousarray(p.value, dtype="<f4").tobytes())
        return h.hexdigest()[:16]

    # -- forward/backward over a batch of token-id lists --------------------

    def _bag(self, batch: Sequence[Sequence[int]]) -> np.ndarray:
        bag = np.zeros((len(batch), len(self.vocab)), np.float32)
        for i, ids in enumerate(batch):
            if len(ids):
                np.add.at(bag[i], np.asarray(ids), 1.0)
                bag[i] /= len(ids)
        return bag

    def forward(self, batch: Sequence[Sequence[int]]) -> np.ndarray:
        self._bag_cache = bag = self._bag(batch)
        mean = bag @ self.embedding.value
        h1 = np.tanh(self.hidden1.forward(mean))
        h2 = np.tanh(self.hidden2.forward(h1))
        norm = np.maximum(np.linalg.norm(h2, axis=1, keepdims=True), 1e-12)
        z = h2 / norm
        self._cache = (h1, h2, norm, z)
        return z

    def backward(self, dz: np.ndarray) -> None:
        h1, h2, norm, z = self._cache
        dh2 = (dz - z * (z * dz).sum(axis=1, keepdims=True)) / norm
        dh1 = self.hidden2.backward(dh2 * tanh_grad_from_output(h2))
        dmean = self.hidden1.backward(dh1 * tanh_grad_from_output(h1))
        self.embedding.grad += self._bag_cache.T @ dmean

    def encode_ids(self, batch: Sequence[Sequence[int]], chunk: int = 4096) -> np.ndarray:
        if not batch:
            return np.zeros((0, self.hidden2.W.shape[1]), np.float32)
        return np.concatenate([self.forward(batch[i : i + chunk]) for i in range(0, len(batch), chunk)])


def encode_block(tokens: Sequence[str], encoder: DanEncoder) -> np.ndarray:
    return encoder.encode_ids([encoder.vocab.encode(tokens)])[0]


def encode_contract_nodes(cfg: ControlFlowGraph, encoder: DanEncoder) -> NodeEmbeddingMatrix:
    ids = cfg.node_ids()
    seqs = [encoder.vocab.encode(tokenize_block(cfg.nodes[i])) for i in ids]
    # identical blocks share one row computation
    uniq: dict[tuple[int, ...], int] = {}
    order = [uniq.setdefault(tuple(s), len(uniq)) for s in seqs]
    rows = encoder.encode_ids([list(k) for k in uniq])
    return NodeEmbeddingMatrix(ids, rows[np.asarray(order, dtype=np.int64)] if ids else rows)


# -- unsupervised training --------------------------------------------------

@dataclass
class BlockCorpus:
    """Deduplicated blocks plus, per contract, block indices and adjacency."""

    blocks: list[tuple[int, ...]] = field(default_factory=list)
    contracts: list[tuple[np.ndarray, list[tuple[int, int]]]] = field(default_factory=list)

    @classmethod
    def from_cfgs(cls, cfgs: Iterable[ControlFlowGraph], vocab: TokenVocab = DEFAULT_VOCAB) -> "BlockCorpus":
        corpus = cls()
        index: dict[tuple[int, ...], int] = {}
        for cfg in cfgs:
            ids = cfg.node_ids()
            pos = {nid: i for i, nid in enumerate(ids)}
            rows = []
            for nid in ids:
                key = tuple(vocab.encode(tokenize_block(cfg.nodes[nid])))
                if key not in index:
                    index[key] = len(corpus.blocks)
                    corpus.blocks.append(key)
                rows.append(index[key])
            pairs = [(pos[a], pos[b]) for a, b in cfg.edges if a != b]
            corpus.contracts.append((np.asarray(rows, dtype=np.int64), pairs))
        return corpus

    def anchors(self) -> list[tuple[int, list[int]]]:
        """(global block index, neighbour block indices) for every block with a neighbour."""
        out = []
        for rows, pairs in self.contracts:
            nbrs: dict[int, set[int]] = {}
            for a, b in pairs:
                nbrs.setdefault(a, set()).add(b)
                nbrs.setdefault(b, set()).add(a)
            for local in sorted(nbrs):
                out.append((int(rows[local]), [int(rows[j]) for j in sorted(nbrs[local])]))
        return out


def contrastive_loss(encoder: DanEncoder, blocks: Sequence[tuple[int, ...]], triples: np.ndarray,
                     backward: bool = False) -> float:
    """Softmax cross-entropy of (anchor, positive, negatives...) rows, positive first."""
    uniq, inverse = np.unique(triples, return_inverse=True)
    inverse = inverse.reshape(triples.shape)
    z = encoder.forward([blocks[i] for i in uniq])
    za = z[inverse[:, 0]]
    zc = z[inverse[:, 1:]]  # (A, 1+m, d)
    scores = SCORE_SCALE * np.einsum("ad,acd->ac", za, zc)
    scores -= scores.max(axis=1, keepdims=True)
    ex = np.exp(scores)
    prob = ex / ex.sum(axis=1, keepdims=True)
    n = len(triples)
    loss = float(-np.log(np.maximum(prob[:, 0], 1e-30)).mean())
    if backward:
        ds = prob.copy()
        ds[:, 0] -= 1
        ds *= SCORE_SCALE / n
        dza = np.einsum("ac,acd->ad", ds, zc)
        dzc = ds[:, :, None] * za[:, None, :]
        dz = np.zeros_like(z)
        np.add.at(dz, inverse[:, 0], dza)
        np.add.at(dz, inverse[:, 1:].reshape(-1), dzc.reshape(-1, z.shape[1]))
        encoder.backward(dz)
    return loss


def sample_triples(anchors, n_blocks: int, rng: np.random.Generator, negatives: int = NEGATIVES) -> np.ndarray:
    rows = np.empty((len(anchors), 2 + negatives), dtype=np.int64)
    for i, (a, nbrs) in enumerate(anchors):
        rows[i, 0] = a
        rows[i, 1] = nbrs[rng.integers(len(nbrs))]
    rows[:, 2:] = rng.integers(n_blocks, size=(len(anchors), negatives))
    return rows


@dataclass
class DanTrainingLog:
    initial_loss: float
    epoch_losses: list[float]


def train_unsupervised(corpus: BlockCorpus | Iterable[ControlFlowGraph], config: TrainConfig,
                       encoder: DanEncoder | None = None) -> tuple[DanEncoder, DanTrainingLog]:
    if not isinstance(corpus, BlockCorpus):
        corpus = BlockCorpus.from_cfgs(corpus)
    anchors = corpus.anchors()
    if not anchors:
        raise EmptyCorpus("corpus has no CFG edges to learn from")
    encoder = encoder or DanEncoder(seed=config.seed)
    opt = Adam(encoder.parameters(), config.learning_rate)
    probe = sample_triples(anchors, len(corpus.blocks), stream(config.seed, "dan-probe"))
    initial = contrastive_loss(encoder, corpus.blocks, probe)
    losses = []
    for epoch in range(config.max_epochs):
        rng = stream(config.seed, "dan-epoch", epoch)
        order = rng.permutation(len(anchors))
        triples = sample_triples([anchors[i] for i in order], len(corpus.blocks), rng)
        for start in range(0, len(triples), config.batch_size):
            contrastive_loss(encoder, corpus.blocks, triples[start : start + config.batch_size], backward=True)
            opt.step()
        losses.append(contrastive_loss(encoder, corpus.blocks, probe))
        log.info("dan epoch %d loss %.4f", epoch + 1, losses[-1])
    return encoder, DanTrainingLog(initial, losses)


def save_encoder(encoder: DanEncoder, path: str | Path) -> None:
    from . import persist

    meta = {"kind": "dan-encoder", "seed": encoder.seed, "vocab": encoder.vocab.tokens,
            "fingerprint": encoder.fingerprint()}
    persist.save(path, meta, encoder.named_tensors())


def load_encoder(path: str | Path) -> DanEncoder:
    from . import persist

    meta, tensors = persist.load(path)
    if meta.get("kind") != "dan-encoder":
        raise ValueError(f"{path} holds a {meta.get('kind')!r}, not an encoder")
    vocab = TokenVocab(meta["vocab"])
    emb = tensors["dan.embedding"]
    encoder = DanEncoder(vocab, meta["seed"], emb.shape[1], tensors["dan.hidden2.W"].shape[1])
    encoder.load_tensors(tensors)
    return encoder
