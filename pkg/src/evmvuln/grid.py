"""Hyperparameter grid and the architecture each grid point describes."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, fields

from .sc2v import Sc2vConfig


@dataclass(frozen=True)
class HyperGrid:
    gcn_layer_counts: tuple[int, ...] = (2, 3, 4)
    neuron_sizes: tuple[int, ...] = (128, 256)
    aggregations: tuple[str, ...] = ("mean", "sum", "sort-top-k")
    conv1d_counts: tuple[int, ...] = (1, 2, 3)
    dense_counts: tuple[int, ...] = (1, 2, 3)
    dense_sizes: tuple[int, ...] = (256, 512, 1024)
    activations: tuple[str, ...] = ("relu", "tanh")


@dataclass(frozen=True, order=True)
class Architecture:
    """One grid point.

    GCN widths halve from ``neuron_size`` and end in a single channel;
    dense hidden widths halve from ``dense_size`` before the 1-unit output.
    ``activation`` drives the conv and dense layers; GCN layers use tanh.
    """

    gcn_layers: int = 3
    neuron_size: int = 256
    aggregation: str = "sort-top-k"
    conv_layers: int = 2
    dense_layers: int = 3
    dense_size: int = 1024
    activation: str = "relu"

    @property
    def gcn_sizes(self) -> tuple[int, ...]:
        return tuple(self.neuron_size >> i for i in range(self.gcn_layers - 1)) + (1,)

    @property
    def dense_hidden(self) -> tuple[int, ...]:
        return tuple(self.dense_size >> i for i in range(self.dense_layers - 1))

    def sc2v_config(self, sortpool_k: int) -> Sc2vConfig:
        return Sc2vConfig(
            gcn_sizes=self.gcn_sizes,
            sortpool_k=sortpool_k,
            conv_activation=self.activation,
            aggregation=self.aggregation,
            conv_layers=self.conv_layers,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


SHIPPED = Architecture()


def enumerate_grid(grid: HyperGrid = HyperGrid()) -> list[Architecture]:
    axes = [sorted(getattr(grid, f.name)) for f in fields(grid)]
    return [Architecture(*combo) for combo in itertools.product(*axes)]
