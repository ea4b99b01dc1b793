import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kandgcnn.data import synth_dataset
from kandgcnn.errors import ConfigError, ContractError, NonFiniteError
from kandgcnn.model import Model, ModelConfig
from kandgcnn.numerics import finite_diff_check
from kandgcnn import train as train_mod
from kandgcnn.train import (
    EpochRecord,
    TrainConfig,
    batches,
    cross_entropy,
    evaluate,
    metrics,
    prepare_batch,
    train_loop,
)


def test_uniform_logits():
    loss, grad = cross_entropy(np.zeros((2, 4)), [1, 3])
    assert abs(loss - math.log(4)) < 1e-15
    expected = np.full((2, 4), 0.25)
    expected[0, 1] -= 1
    expected[1, 3] -= 1
    np.testing.assert_allclose(grad, expected / 2, atol=1e-16)


def test_confident_logits():
    loss, _ = cross_entropy(np.array([[10.0, -10.0]]), [0])
    assert loss >= 0
    np.testing.assert_allclose(loss, math.log1p(math.exp(-20.0)), rtol=1e-6)


def test_cross_entropy_fd(rng):
    logits = rng.normal(size=(5, 6))
    labels = rng.integers(0, 6, 5)
    _, grad = cross_entropy(logits, labels)
    assert finite_diff_check(lambda z: cross_entropy(z, labels)[0], logits, grad) < 1e-6


@settings(max_examples=50)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 7)),
              elements=st.floats(-50, 50)), st.data())
def test_loss_properties(logits, data):
    labels = data.draw(st.lists(st.integers(0, logits.shape[1] - 1),
                                min_size=logits.shape[0], max_size=logits.shape[0]))
    loss, grad = cross_entropy(logits, labels)
    assert loss >= 0
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-12)


def test_invalid_label():
    with pytest.raises(ContractError):
        cross_entropy(np.zeros((1, 3)), [3])


def test_metrics_examples():
    assert metrics([0, 1, 2], [0, 1, 2]) == (1.0, 1.0)
    oa, mca = metrics([1, 1, 0], [1, 0, 0])
    assert oa == pytest.approx(2 / 3) and mca == pytest.approx(0.75)
    assert metrics([2, 1, 2, 0], [2, 2, 2, 2]) == (0.5, 0.5)
    with pytest.raises(ContractError):
        metrics([], [])


def test_batches_drop_last():
    assert [len(b) for b in batches(10, 4, drop_last=True)] == [4, 4]
    assert [len(b) for b in batches(10, 4)] == [4, 4, 2]


def test_augmentation_only_on_train(rng):
    clouds = rng.normal(size=(4, 8, 3))
    idx = np.array([2, 0])
    np.testing.assert_array_equal(prepare_batch(clouds, idx, rng, train=False), clouds[idx])
    assert not np.array_equal(prepare_batch(clouds, idx, rng, train=True), clouds[idx])


def test_epoch_record_line_round_trip():
    rec = EpochRecord(3, 0.001, 1.25, 0.5, 0.25, 1.5, 0.125, 0.1, 2.0)
    assert EpochRecord.from_line(rec.to_line()) == rec


def tiny_setup(seed=0):
    tr = synth_dataset(4, 24, seed=seed, split="train")
    te = synth_dataset(2, 24, seed=seed, split="test")
    cfg = ModelConfig(k=3, edge_hidden=6, embedding=12, num_classes=4)
    return tr, te, Model(cfg, np.random.default_rng([seed, 0]))


def test_zero_lr_keeps_parameters(tmp_path):
    tr, te, model = tiny_setup()
    before = [p.value.copy() for p in model.parameters()]
    train_loop(model, tr, te, TrainConfig(epochs=1, lr=0.0, points=24, k=3, batch_size=4))
    for b, p in zip(before, model.parameters()):
        np.testing.assert_array_equal(b, p.value)


def test_deterministic_records(tmp_path):
    cfg = TrainConfig(epochs=2, points=24, k=3, batch_size=4, seed=5)
    runs = []
    for name in ("a", "b"):
        tr, te, model = tiny_setup()
        out = tmp_path / name
        out.mkdir()
        recs = train_loop(model, tr, te, cfg, out_dir=out, log_path=out / "epochs.log")
        runs.append((recs, out))
    strip = lambda r: {k: v for k, v in vars(r).items() if k != "wall_seconds"}  # noqa: E731
    assert [strip(r) for r in runs[0][0]] == [strip(r) for r in runs[1][0]]
    for name in ("best.kdk", "final.kdk"):
        assert (runs[0][1] / name).read_bytes() == (runs[1][1] / name).read_bytes()


def test_constant_learning_rate():
    tr, te, model = tiny_setup()
    recs = train_loop(model, tr, te, TrainConfig(epochs=3, points=24, k=3, batch_size=4))
    assert {r.lr for r in recs} == {0.001}
    for r in recs:
        assert 0 <= r.train_oa <= 1 and 0 <= r.test_mca <= 1


def test_cosine_schedule_is_opt_in():
    cfg = TrainConfig(epochs=10, lr_schedule="cosine")
    assert cfg.lr_at(0) == cfg.lr and cfg.lr_at(5) < cfg.lr
    assert TrainConfig().lr_at(200) == TrainConfig().lr


def test_non_finite_loss_aborts(monkeypatch):
    tr, te, model = tiny_setup()
    monkeypatch.setattr(train_mod, "cross_entropy", lambda logits, y: (float("nan"), logits * 0))
    with pytest.raises(NonFiniteError, match="epoch 1, batch 0"):
        train_loop(model, tr, te, TrainConfig(epochs=1, points=24, k=3, batch_size=4))


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(momentum=1.0)
    tr, te, model = tiny_setup()
    with pytest.raises(ConfigError):
        train_loop(model, tr, te, TrainConfig(epochs=1, points=24, k=5))


def test_evaluate_keeps_partial_batch():
    tr, te, model = tiny_setup()
    x = te.stacked()
    loss_a, oa_a, _ = evaluate(model, x, te.labels, batch_size=3)
    loss_b, oa_b, _ = evaluate(model, x, te.labels, batch_size=8)
    assert oa_a == oa_b
    assert loss_a == pytest.approx(loss_b, rel=1e-12)


def test_augmentation_flag_controls_train_batches(monkeypatch):
    calls = []
    original = train_mod.prepare_batch

    def spy(clouds, idx, rng=None, train=False):
        calls.append(train)
        return original(clouds, idx, rng, train)

    monkeypatch.setattr(train_mod, "prepare_batch", spy)
    for flag in (True, False):
        calls.clear()
        tr, te, model = tiny_setup()
        train_loop(model, tr, te, TrainConfig(epochs=1, points=24, k=3, batch_size=4, augment=flag))
        assert calls and set(calls) == {flag}
