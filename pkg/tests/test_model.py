import warnings

import numpy as np
import pytest

from evmvuln import persist
from evmvuln.errors import EmptyDataset, ShapeMismatch, SingleClassDataset
from evmvuln.grid import Architecture
from evmvuln.model import (
    DEFAULT_THRESHOLD, VULNERABILITIES_LARGE, VULNERABILITIES_SMALL, CoreClassifier, Label, VulnerabilityModel,
    cc_forward, classify, load_model, save_model, train_model,
)
from evmvuln.nn import TrainConfig, stream
from evmvuln.sc2v import GraphSample, normalize_adjacency

TINY = Architecture(gcn_layers=2, neuron_size=128, aggregation="sort-top-k", conv_layers=1,
                    dense_layers=2, dense_size=256)


def toy_samples(n, seed, separable=True):
    """Label 1 graphs carry a shifted feature on one node."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        k = int(rng.integers(3, 9))
        edges = [(j, j + 1) for j in range(k - 1)]
        x = rng.normal(0, 0.1, size=(k, 512)).astype(np.float32)
        y = i % 2
        if y and separable:
            x[0, :32] += 1.0
        out.append(GraphSample(normalize_adjacency((k, edges)), x, y, f"c{seed}-{i}"))
    return out


def test_vulnerability_lists():
    assert len(VULNERABILITIES_LARGE) == 29 == len(set(VULNERABILITIES_LARGE))
    assert len(VULNERABILITIES_SMALL) == 21
    assert set(VULNERABILITIES_SMALL) < set(VULNERABILITIES_LARGE)


def test_classify_threshold_is_inclusive():
    assert classify(DEFAULT_THRESHOLD) is Label.VULNERABLE
    assert classify(np.nextafter(0.5, 0)) is Label.NON_VULNERABLE
    assert classify(0.3, threshold=0.25) is Label.VULNERABLE


def test_core_classifier_structure_and_modes():
    cc = CoreClassifier(16, (8, 4), rng=stream(0, "t"))
    names = [p.name for p in cc.parameters()]
    assert names[:4] == ["cc.dense1.W", "cc.dense1.b", "cc.bn1.gamma", "cc.bn1.beta"]
    assert names[-2:] == ["cc.dense3.W", "cc.dense3.b"]
    cc.eval()
    x = np.random.default_rng(0).normal(size=(5, 16)).astype(np.float32)
    p = cc.forward(x)
    assert p.shape == (5,) and ((p > 0) & (p < 1)).all()
    assert cc_forward(x[0], cc) == pytest.approx(float(p[0]), abs=1e-6)
    assert not cc.training


def test_model_embedding_dims():
    assert VulnerabilityModel("suicidal", "large").embedding_dim == 4128
    assert VulnerabilityModel("suicidal", "small").embedding_dim == 768
    with pytest.raises(ValueError):
        VulnerabilityModel("suicidal", "medium")


CFG = TrainConfig(learning_rate=1e-3, batch_size=16, max_epochs=12, early_stop_patience=3, seed=0)


@pytest.fixture(scope="module")
def trained():
    train, valid, test = toy_samples(48, 1), toy_samples(16, 2), toy_samples(20, 3)
    return train_model(train, valid, "suicidal", CFG, TINY, "small"), train, valid, test


def test_training_learns_separable_toy(trained):
    model, train, _, test = trained
    h = model.history
    assert h.train_losses[-1] < h.initial_loss
    acc = np.mean([(p == Label.VULNERABLE) == bool(s.label) for p, s in zip(model.predict(test), test)])
    assert acc >= 0.9


def test_returned_weights_are_from_the_best_epoch(trained):
    model, _, valid, _ = trained
    h = model.history
    assert h.best_epoch == 1 + int(np.argmin(h.valid_losses))
    from evmvuln.model import _loss
    assert _loss(model, valid) == pytest.approx(min(h.valid_losses), rel=1e-5)
    assert len(h.valid_losses) <= CFG.max_epochs
    if len(h.valid_losses) < CFG.max_epochs:
        assert len(h.valid_losses) - h.best_epoch == CFG.early_stop_patience


def test_training_is_deterministic(trained):
    model, train, valid, _ = trained
    again = train_model(train, valid, "suicidal", CFG, TINY, "small")
    assert persist.dumps(model.metadata(), model.named_tensors()) == persist.dumps(again.metadata(), again.named_tensors())


def test_empty_and_single_class():
    with pytest.raises(EmptyDataset):
        train_model([], toy_samples(4, 0), "x", CFG, TINY, "small")
    ones = [s for s in toy_samples(20, 0) if s.label == 1]
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        m = train_model(ones, ones[:3], "x", TrainConfig(max_epochs=2, batch_size=8), TINY, "small")
    assert any(issubclass(x.category, SingleClassDataset) for x in w)
    assert m.history.single_class


def test_save_load_is_bit_identical(trained, tmp_path):
    model, _, _, test = trained
    save_model(model, tmp_path / "m.dlva")
    back = load_model(tmp_path / "m.dlva")
    assert back.metadata() == model.metadata()
    assert np.array_equal(back.predict_proba(test), model.predict_proba(test))
    assert (tmp_path / "m.dlva").read_bytes() == persist.dumps(model.metadata(), model.named_tensors())


def test_load_rejects_other_kinds(tmp_path):
    persist.save(tmp_path / "e.dlva", {"kind": "dan-encoder"}, {})
    with pytest.raises(ValueError):
        load_model(tmp_path / "e.dlva")


def test_load_rejects_wrong_shapes():
    m = VulnerabilityModel("suicidal", "small", TINY)
    tensors = dict(m.named_tensors())
    tensors["cc.dense1.W"] = np.zeros((3, 3), np.float32)
    with pytest.raises(ShapeMismatch):
        m.load_tensors(tensors)


def test_recalibrate_sets_population_statistics(trained):
    model, train, _, _ = trained
    model.recalibrate(train)
    emb = model.embed(train)
    dense1 = model.cc.net.layers[0]
    h = emb @ dense1.W.value + dense1.b.value
    bn = model.cc.norm_layers()[0]
    assert np.allclose(bn.running_mean, h.mean(0), atol=1e-4)
    assert np.allclose(bn.running_var, h.var(0), rtol=1e-3, atol=1e-6)
