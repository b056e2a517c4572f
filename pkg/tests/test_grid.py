import itertools

import numpy as np
import pytest

from evmvuln.grid import SHIPPED, Architecture, HyperGrid, enumerate_grid
from evmvuln.model import VulnerabilityModel


def test_grid_has_972_distinct_points():
    grid = enumerate_grid()
    assert len(grid) == 972 == len(set(grid))


def test_grid_is_the_full_product():
    g = HyperGrid()
    axes = [g.gcn_layer_counts, g.neuron_sizes, g.aggregations, g.conv1d_counts,
            g.dense_counts, g.dense_sizes, g.activations]
    assert set(enumerate_grid()) == {Architecture(*c) for c in itertools.product(*axes)}


def test_enumeration_order_is_stable():
    assert enumerate_grid() == enumerate_grid()
    assert enumerate_grid() == sorted(enumerate_grid())


def test_shipped_point_is_on_the_grid():
    assert SHIPPED in set(enumerate_grid())
    assert SHIPPED.gcn_sizes == (256, 128, 1)
    assert SHIPPED.dense_hidden == (1024, 512)


def test_dict_roundtrip():
    for arch in enumerate_grid()[::97]:
        assert Architecture.from_dict(arch.to_dict()) == arch


@pytest.mark.parametrize("index", [0, 17, 333, 500, 971])
def test_every_sampled_point_builds_and_runs(index):
    from evmvuln.sc2v import GraphSample, normalize_adjacency

    arch = enumerate_grid()[index]
    model = VulnerabilityModel("suicidal", "small", arch)
    rng = np.random.default_rng(index)
    s = GraphSample(normalize_adjacency((5, [(0, 1), (1, 2), (3, 4)])), rng.normal(size=(5, 512)).astype(np.float32))
    p = model.predict_proba([s, s])
    assert p.shape == (2,) and ((0 <= p) & (p <= 1)).all()
    assert model.embed([s]).shape == (1, model.embedding_dim)
