"""Graph-level contract embedding: GCN layers, SortPooling and a Conv1D head.

Graphs of a minibatch are stacked into one block-diagonal propagation
matrix so the GCN layers run as a handful of large products.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .cfg import ControlFlowGraph
from .errors import ShapeMismatch
from .n2v import OUTPUT_DIM, NodeEmbeddingMatrix
from .nn import Activation, Conv1D, Flatten, MaxPool1D, Module, Parameter, Sequential, stream
from .nn.functional import ACTIVATIONS
from .nn.layers import glorot


@dataclass(frozen=True)
class Sc2vConfig:
    gcn_sizes: tuple[int, ...] = (256, 128, 1)
    sortpool_k: int = 100
    conv_channels: int = 96
    conv2_kernel: int = 8
    gcn_activation: str = "tanh"
    conv_activation: str = "relu"
    aggregation: str = "sort-top-k"
    conv_layers: int = 2
    input_dim: int = OUTPUT_DIM

    def __post_init__(self):
        if self.aggregation == "sort-top-k" and self.gcn_sizes[-1] != 1:
            raise ValueError("the last GCN layer must have width 1 (the sort channel)")
        if self.aggregation not in ("sort-top-k", "mean", "sum"):
            raise ValueError(f"unknown aggregation {self.aggregation}")

    @property
    def concat_width(self) -> int:
        return sum(self.gcn_sizes)

    @property
    def pooled_rows(self) -> int:
        return self.sortpool_k if self.aggregation == "sort-top-k" else 1

    def head_geometry(self) -> list[tuple[str, int]]:
        """Sequence of (stage, length) the head passes through."""
        length = self.pooled_rows
        stages = [("conv1", length)]
        for _ in range(self.conv_layers - 1):
            if length >= 2:
                length //= 2
                stages.append(("pool", length))
            length = length - min(self.conv2_kernel, length) + 1
            stages.append(("conv", length))
        return stages

    @property
    def embedding_dim(self) -> int:
        return self.head_geometry()[-1][1] * self.conv_channels


LARGE = Sc2vConfig(sortpool_k=100)
SMALL = Sc2vConfig(sortpool_k=30)
PRESETS = {"large": LARGE, "small": SMALL}


@dataclass
class NormalizedAdjacency:
    n: int
    matrix: sp.csr_matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def normalize_adjacency(graph: ControlFlowGraph | tuple[int, Sequence[tuple[int, int]]]) -> NormalizedAdjacency:
    """D^-1/2 (A_sym + I) D^-1/2 with edges symmetrised and one self-loop per node.

    ``graph`` is a CFG (nodes indexed in ascending block-id order) or an
    ``(n, edges)`` pair over indices ``0..n-1``.
    """
    if isinstance(graph, ControlFlowGraph):
        ids = graph.node_ids()
        pos = {nid: i for i, nid in enumerate(ids)}
        n, edges = len(ids), [(pos[a], pos[b]) for a, b in graph.edges]
    else:
        n, edges = graph
    pairs = {(a, b) for a, b in edges if a != b}
    pairs |= {(b, a) for a, b in pairs}
    rows = np.fromiter((a for a, _ in pairs), dtype=np.int64, count=len(pairs))
    cols = np.fromiter((b for _, b in pairs), dtype=np.int64, count=len(pairs))
    A = sp.coo_matrix((np.ones(len(pairs)), (rows, cols)), shape=(n, n)).tocsr() + sp.identity(n, format="csr")
    deg = np.asarray(A.sum(axis=1)).ravel()
    dinv = sp.diags(1 / np.sqrt(deg))
    return NormalizedAdjacency(n, (dinv @ A @ dinv).astype(np.float32).tocsr())


@dataclass
class GraphSample:
    """One contract ready for SC2V: normalised adjacency, node features, label."""

    adjacency: NormalizedAdjacency
    features: np.ndarray
    label: int = 0
    id: str = ""
    _propagated: np.ndarray | None = field(default=None, repr=False)

    @property
    def propagated(self) -> np.ndarray:
        # the first propagation step is constant while node features are frozen
        if self._propagated is None:
            self._propagated = np.asarray(self.adjacency.matrix @ self.features, dtype=np.float32)
        return self._propagated


@dataclass
class GraphBatch:
    adjacency: sp.csr_matrix
    propagated: np.ndarray
    offsets: np.ndarray  # len B+1

    @classmethod
    def of(cls, samples: Sequence[GraphSample]) -> "GraphBatch":
        offsets = np.cumsum([0] + [s.adjacency.n for s in samples])
        adj = sp.block_diag([s.adjacency.matrix for s in samples], format="csr")
        prop = np.concatenate([s.propagated for s in samples]) if samples else np.zeros((0, 0), np.float32)
        return cls(adj, prop, offsets)

    def __len__(self) -> int:
        return len(self.offsets) - 1


def gcn_stack(adjacency: NormalizedAdjacency, H0: np.ndarray, weights: Sequence[np.ndarray],
              activation: str = "tanh"):
    """Single-graph GCN: returns (H1, ..., HL, Hcat)."""
    if H0.shape[0] != adjacency.n:
        raise ShapeMismatch(f"{H0.shape[0]} feature rows for {adjacency.n} nodes")
    act = ACTIVATIONS[activation][0]
    layers, H = [], H0
    for W in weights:
        if H.shape[1] != W.shape[0]:
            raise ShapeMismatch(f"GCN input width {H.shape[1]} vs weight {W.shape}")
        H = act(adjacency.matrix @ (H @ W))
        layers.append(H)
    return (*layers, np.concatenate(layers, axis=1))


def sort_pool(hcat: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Keep the k rows with the largest last-column value, ascending.

    Ties are ordered by row index; graphs smaller than k get zero rows
    prepended. Returns (pooled[k, C], source row per output row or -1).
    """
    n = hcat.shape[0]
    order = np.argsort(hcat[:, -1], kind="stable")[-k:]
    src = np.full(k, -1, dtype=np.int64)
    src[k - len(order):] = order
    pooled = np.zeros((k, hcat.shape[1]), dtype=hcat.dtype)
    pooled[k - len(order):] = hcat[order]
    return pooled, src


def build_head(config: Sc2vConfig, rng) -> Sequential:
    C = config.concat_width
    layers: list[Module] = [Conv1D(C, 1, config.conv_channels, C, rng, "sc2v.conv1"),
                            Activation(config.conv_activation)]
    length = config.pooled_rows
    for i in range(2, config.conv_layers + 1):
        if length >= 2:
            layers.append(MaxPool1D(2, 2))
            length //= 2
        kernel = min(config.conv2_kernel, length)
        layers += [Conv1D(kernel, config.conv_channels, config.conv_channels, 1, rng, f"sc2v.conv{i}"),
                   Activation(config.conv_activation)]
        length = length - kernel + 1
    layers.append(Flatten())
    return Sequential(*layers)


class Sc2vNet(Module):
    def __init__(self, config: Sc2vConfig = LARGE, rng=None, seed: int = 0):
        rng = rng if rng is not None else stream(seed, "sc2v-init")
        self.config = config
        widths = (config.input_dim, *config.gcn_sizes)
        self.gcn = [
            Parameter(glorot(rng, a, b, (a, b)), f"sc2v.gcn{i + 1}.W")
            for i, (a, b) in enumerate(zip(widths, widths[1:]))
        ]
        self.head = build_head(config, rng)
        self._act, self._dact = ACTIVATIONS[config.gcn_activation]

    def parameters(self):
        return [*self.gcn, *self.head.parameters()]

    def train(self, mode: bool = True):
        self.training = mode
        self.head.train(mode)
        return self

    # -- batched forward/backward ------------------------------------------

    def pool(self, batch: GraphBatch, hcat: np.ndarray):
        cfg = self.config
        B, C = len(batch), hcat.shape[1]
        pooled = np.zeros((B, cfg.pooled_rows, C), dtype=hcat.dtype)
        src = np.full((B, cfg.pooled_rows), -1, dtype=np.int64)
        for b in range(B):
            lo, hi = batch.offsets[b], batch.offsets[b + 1]
            if cfg.aggregation == "sort-top-k":
                pooled[b], local = sort_pool(hcat[lo:hi], cfg.sortpool_k)
                src[b] = np.where(local >= 0, local + lo, -1)
            elif cfg.aggregation == "mean":
                pooled[b, 0] = hcat[lo:hi].mean(axis=0)
            else:
                pooled[b, 0] = hcat[lo:hi].sum(axis=0)
        return pooled, src

    def forward_batch(self, batch: GraphBatch) -> np.ndarray:
        P = batch.propagated.astype(self.gcn[0].value.dtype, copy=False)
        props, outs = [], []
        for i, W in enumerate(self.gcn):
            if i:
                P = np.asarray(batch.adjacency @ outs[-1])
            props.append(P)
            outs.append(self._act(P @ W.value))
        hcat = np.concatenate(outs, axis=1)
        pooled, src = self.pool(batch, hcat)
        self._cache = (batch, props, outs, src, hcat.shape)
        B = len(batch)
        return self.head.forward(pooled.reshape(B, -1, 1))

    def backward_batch(self, d_embedding: np.ndarray) -> None:
        batch, props, outs, src, hshape = self._cache
        dpooled = self.head.backward(d_embedding).reshape(len(batch), self.config.pooled_rows, -1)
        dh = np.zeros(hshape, dtype=dpooled.dtype)
        if self.config.aggregation == "sort-top-k":
            valid = src >= 0
            dh[src[valid]] = dpooled[valid]
        else:
            for b in range(len(batch)):
                lo, hi = batch.offsets[b], batch.offsets[b + 1]
                scale = 1.0 / (hi - lo) if self.config.aggregation == "mean" else 1.0
                dh[lo:hi] += dpooled[b, 0] * scale
        widths = [W.shape[1] for W in self.gcn]
        splits = np.split(dh, np.cumsum(widths)[:-1], axis=1)
        carry = None
        for i in range(len(self.gcn) - 1, -1, -1):
            dX = splits[i] if carry is None else splits[i] + carry
            dZ = dX * self._dact(None, outs[i])
            self.gcn[i].grad += props[i].T @ dZ
            if i:
                carry = np.asarray(batch.adjacency @ (dZ @ self.gcn[i].value.T))

    def embed(self, samples: Sequence[GraphSample]) -> np.ndarray:
        return self.forward_batch(GraphBatch.of(samples))


@dataclass
class ContractEmbedding:
    vector: np.ndarray
    size_class: str

    def __len__(self) -> int:
        return len(self.vector)


def conv_head(pooled: np.ndarray, net: Sc2vNet) -> np.ndarray:
    k, C = pooled.shape
    if (k, C) != (net.config.pooled_rows, net.config.concat_width):
        raise ShapeMismatch(f"pooled {pooled.shape} for config {net.config}")
    return net.head.forward(pooled.reshape(1, -1, 1))[0]


def embed_contract(cfg: ControlFlowGraph, nodes: NodeEmbeddingMatrix, net: Sc2vNet,
                   size_class: str = "large") -> ContractEmbedding:
    if nodes.ids != cfg.node_ids():
        raise ShapeMismatch("node embedding rows do not match CFG nodes")
    sample = GraphSample(normalize_adjacency(cfg), nodes.matrix)
    was = net.training
    net.eval()
    vec = net.embed([sample])[0]
    net.train(was)
    return ContractEmbedding(vec, size_class)


def config_for(size_class: str, **overrides) -> Sc2vConfig:
    return replace(PRESETS[size_class], **overrides)
