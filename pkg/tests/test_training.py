import io
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialectid.data import Batch, LabelSet, Vocab, make_batches
from dialectid.errors import ConfigError, NumericError
from dialectid.model import ModelConfig, forward_classify, init_model, param_blocks
from dialectid.training import (
    TrainConfig,
    adam_step,
    batch_loss,
    clip_global_norm,
    evaluate_split,
    gradient_norm,
    init_adam_state,
    init_sgd_state,
    loss_and_gradients,
    sgd_step,
    train,
    zero_gradients,
)

LOG_LINE = re.compile(
    r"^epoch=(\d+) train_loss=(\S+) train_acc=(\S+) dev_acc=(\S+)$"
)


def text_model(classes=2, seed=0, cell="lstm", bidirectional=True, readout="last"):
    vocab = Vocab(("<pad>", "<unk>", "a", "b", "c", "d"))
    labels = LabelSet([f"c{i}" for i in range(classes)])
    cfg = ModelConfig(mode="char", cell=cell, bidirectional=bidirectional,
                      embed_dim=3, hidden_dim=4, readout_mode=readout)
    return init_model(cfg, labels, vocab=vocab, seed=seed)


def sample_pairs(classes=2, n=8, seed=0, lo=2, hi=6):
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        length = int(rng.integers(lo, hi + 1))
        ids = rng.integers(2, 6, size=length).astype(np.int64)
        pairs.append((ids, i % classes))
    return pairs


def one_batch(pairs):
    (batch,) = make_batches(pairs, batch_size=len(pairs))
    return batch


def test_train_config_validation():
    TrainConfig().validate()
    for bad in (
        dict(optimizer="rmsprop"),
        dict(learning_rate=0.0),
        dict(learning_rate=float("inf")),
        dict(batch_size=0),
        dict(epochs=0),
        dict(momentum=1.0),
        dict(beta1=1.0),
        dict(eps=0.0),
        dict(clip_norm=-1.0),
        dict(max_seq_len=0),
    ):
        with pytest.raises(ConfigError):
            TrainConfig(**bad).validate()


def test_sgd_step_plain():
    blocks = {"w": np.array([1.0])}
    grads = {"w": np.array([2.0])}
    state = {"v": {"w": np.zeros(1)}}
    sgd_step(blocks, grads, state, learning_rate=0.1)
    assert blocks["w"][0] == pytest.approx(0.8, abs=0)


def test_sgd_step_momentum_recurrence():
    blocks = {"w": np.array([1.0])}
    state = {"v": {"w": np.zeros(1)}}
    theta, v = 1.0, 0.0
    for _ in range(3):
        g = 2.0 * theta   # gradient of theta^2
        sgd_step(blocks, {"w": np.array([g])}, state, 0.1, momentum=0.9)
        v = 0.9 * v + g
        theta = theta - 0.1 * v
        assert blocks["w"][0] == pytest.approx(theta, abs=1e-15)


def test_adam_first_step_is_signed_learning_rate():
    cfg = TrainConfig(learning_rate=0.05)
    blocks = {"w": np.array([1.0, -3.0])}
    grads = {"w": np.array([0.4, -0.2])}
    state = {"m": {"w": np.zeros(2)}, "v": {"w": np.zeros(2)}, "t": 0}
    adam_step(blocks, grads, state, cfg)
    # bias correction makes m_hat = g, v_hat = g^2 on step one, so the move
    # is -lr * g / (|g| + eps): learning-rate-sized, opposite the gradient
    g = np.array([0.4, -0.2])
    expected = np.array([1.0, -3.0]) - 0.05 * g / (np.abs(g) + cfg.eps)
    np.testing.assert_array_equal(blocks["w"], expected)
    assert state["t"] == 1


def test_zero_gradient_steps_are_no_ops():
    for opt in ("sgd", "adam"):
        blocks = {"w": np.array([1.5, -2.5])}
        grads = {"w": np.zeros(2)}
        if opt == "sgd":
            sgd_step(blocks, grads, {"v": {"w": np.zeros(2)}}, 0.3)
        else:
            adam_step(blocks, grads, {"m": {"w": np.zeros(2)}, "v": {"w": np.zeros(2)}, "t": 0},
                      TrainConfig())
        np.testing.assert_array_equal(blocks["w"], [1.5, -2.5])


def test_optimizer_steps_repin_pad_row():
    m = text_model()
    blocks = param_blocks(m)
    grads = zero_gradients(m)
    grads["embedding.table"][:] = 1.0
    sgd_step(blocks, grads, init_sgd_state(m), 0.1)
    np.testing.assert_array_equal(m.embedding.table[0], np.zeros(3))
    grads2 = zero_gradients(m)
    grads2["embedding.table"][:] = 1.0
    adam_step(blocks, grads2, init_adam_state(m), TrainConfig())
    np.testing.assert_array_equal(m.embedding.table[0], np.zeros(3))


def test_gradient_norm_matches_flat_norm(rng):
    grads = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=7)}
    flat = np.concatenate([grads["a"].ravel(), grads["b"]])
    assert gradient_norm(grads) == pytest.approx(np.linalg.norm(flat), rel=1e-15)


@given(st.integers(min_value=0, max_value=2 ** 32 - 1),
       st.floats(min_value=0.01, max_value=10.0))
def test_clip_norm_contract(seed, threshold):
    rng = np.random.default_rng(seed)
    grads = {"a": rng.normal(size=5), "b": rng.normal(size=(2, 3))}
    before = gradient_norm(grads)
    snapshot = {k: v.copy() for k, v in grads.items()}
    clip_global_norm(grads, threshold)
    after = gradient_norm(grads)
    if before > threshold:
        assert abs(after - threshold) < 1e-12
        # direction preserved: all blocks scaled by the same factor
        scale = threshold / before
        for k in grads:
            np.testing.assert_allclose(grads[k], snapshot[k] * scale, rtol=1e-15)
    else:
        for k in grads:
            np.testing.assert_array_equal(grads[k], snapshot[k])


def test_clip_rejects_bad_threshold():
    with pytest.raises(ConfigError):
        clip_global_norm({"a": np.ones(2)}, 0.0)


@pytest.mark.parametrize("classes", [2, 5, 14])
def test_fresh_model_loss_is_log_class_count(classes):
    m = text_model(classes=classes)
    batch = one_batch(sample_pairs(classes=classes, n=6))
    assert abs(batch_loss(m, batch) - math.log(classes)) < 1e-12
    loss, _ = loss_and_gradients(m, batch)
    assert abs(loss - math.log(classes)) < 1e-12


def test_first_reported_batch_loss_is_log_class_count():
    m = text_model(classes=5)
    pairs = sample_pairs(classes=5, n=10)
    _, report = train(m, pairs, config=TrainConfig(epochs=1, batch_size=4),
                      log_stream=io.StringIO())
    assert abs(report.first_batch_loss - math.log(5)) < 1e-12


def test_batch_duplication_invariance():
    m = text_model()
    pairs = sample_pairs(n=5)
    base = one_batch(pairs)
    quad = one_batch(pairs * 4)
    loss1, grads1 = loss_and_gradients(m, base)
    loss4, grads4 = loss_and_gradients(m, quad)
    assert loss1 == loss4
    for name in grads1:
        np.testing.assert_allclose(grads1[name], grads4[name], rtol=0, atol=1e-12)


def test_padding_neutrality():
    m = text_model(readout="mean")
    batch = one_batch(sample_pairs(n=4))
    wider = Batch(
        labels=batch.labels,
        ids=np.concatenate([batch.ids, np.zeros((len(batch), 3), dtype=np.int64)], axis=1),
        mask=np.concatenate([batch.mask, np.zeros((len(batch), 3), dtype=bool)], axis=1),
    )
    loss_a, grads_a = loss_and_gradients(m, batch)
    loss_b, grads_b = loss_and_gradients(m, wider)
    assert loss_a == loss_b
    for name in grads_a:
        np.testing.assert_array_equal(grads_a[name], grads_b[name], err_msg=name)


@settings(max_examples=100)
@given(st.integers(min_value=0, max_value=2 ** 32 - 1),
       st.integers(min_value=1, max_value=4))
def test_padding_neutrality_randomized(seed, extra):
    # appending masked-off PAD columns never changes the loss or any gradient
    m = text_model(seed=seed % 7, readout="mean" if seed % 2 else "last")
    batch = one_batch(sample_pairs(n=3, seed=seed))
    wider = Batch(
        labels=batch.labels,
        ids=np.concatenate(
            [batch.ids, np.zeros((len(batch), extra), dtype=np.int64)], axis=1),
        mask=np.concatenate(
            [batch.mask, np.zeros((len(batch), extra), dtype=bool)], axis=1),
    )
    loss_a, grads_a = loss_and_gradients(m, batch)
    loss_b, grads_b = loss_and_gradients(m, wider)
    assert loss_a == loss_b
    for name in grads_a:
        np.testing.assert_array_equal(grads_a[name], grads_b[name], err_msg=name)


def test_pad_embedding_gradient_is_zero():
    m = text_model()
    _, grads = loss_and_gradients(m, one_batch(sample_pairs(n=6)))
    np.testing.assert_array_equal(grads["embedding.table"][0], np.zeros(3))


def test_one_training_step_reduces_loss():
    m = text_model(classes=2, seed=1)
    batch = one_batch(sample_pairs(classes=2, n=8, seed=1))
    before = batch_loss(m, batch)
    blocks = param_blocks(m)
    _, grads = loss_and_gradients(m, batch)
    sgd_step(blocks, grads, init_sgd_state(m), learning_rate=0.5)
    assert batch_loss(m, batch) < before


def test_sgd_on_convex_quadratic_is_monotone():
    blocks = {"w": np.array([3.0, -4.0])}
    state = {"v": {"w": np.zeros(2)}}
    values = []
    for _ in range(20):
        values.append(0.5 * float(np.dot(blocks["w"], blocks["w"])))
        sgd_step(blocks, {"w": blocks["w"].copy()}, state, 0.2)
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-3 * values[0]


def test_train_is_deterministic_and_logs_round_trip():
    logs = []
    finals = []
    for _ in range(2):
        m = text_model(classes=3, seed=2)
        pairs = sample_pairs(classes=3, n=12, seed=2)
        stream = io.StringIO()
        m, report = train(m, pairs, config=TrainConfig(epochs=3, batch_size=4, seed=5),
                          log_stream=stream)
        logs.append(stream.getvalue())
        finals.append({k: v.copy() for k, v in param_blocks(m).items()})
    assert logs[0] == logs[1]
    for name in finals[0]:
        np.testing.assert_array_equal(finals[0][name], finals[1][name])
    lines = logs[0].strip().split("\n")
    assert len(lines) == 3
    for line in lines:
        match = LOG_LINE.match(line)
        assert match, line
        for text in match.groups()[1:]:
            assert repr(float(text)) == text   # shortest round-trip form


def test_train_restores_best_dev_parameters():
    m = text_model(classes=2, seed=3)
    pairs = sample_pairs(classes=2, n=16, seed=3)
    dev = sample_pairs(classes=2, n=8, seed=4)
    m, report = train(m, pairs, dev,
                      TrainConfig(epochs=6, batch_size=4, learning_rate=0.1,
                                  optimizer="sgd", early_stop_patience=0),
                      log_stream=io.StringIO())
    acc, _ = evaluate_split(m, dev)
    assert acc == max(report.dev_accs)
    assert report.best_epoch == report.dev_accs.index(max(report.dev_accs)) + 1


def test_train_early_stops_on_stale_dev():
    m = text_model(classes=2, seed=3)
    pairs = sample_pairs(classes=2, n=8, seed=3)
    # tiny learning rate: dev accuracy will not improve after epoch 1
    m, report = train(m, pairs, pairs,
                      TrainConfig(epochs=50, batch_size=8, learning_rate=1e-12,
                                  early_stop_patience=2),
                      log_stream=io.StringIO())
    assert report.epochs_run == 3   # epoch 1 sets best, then 2 stale epochs
    assert report.epochs_run < 50


def test_train_empty_set_rejected():
    with pytest.raises(ValueError):
        train(text_model(), [], config=TrainConfig(epochs=1))


def test_train_numeric_failure_names_epoch_and_batch():
    m = text_model()
    m.fwd.w_xi[:] = np.nan
    with pytest.raises(NumericError, match=r"epoch 1 batch 0"):
        train(m, sample_pairs(n=4), config=TrainConfig(epochs=1, batch_size=2),
              log_stream=io.StringIO())


def test_evaluate_split_tie_breaks_to_lowest_id():
    m = text_model(classes=5)   # fresh model: exactly uniform probabilities
    pairs = [(np.array([2, 3], dtype=np.int64), 0) for _ in range(10)]
    acc, outcome = evaluate_split(m, pairs)
    assert acc == 1.0
    assert outcome == [(0, 0)] * 10
    with pytest.raises(ValueError):
        evaluate_split(m, [])


def test_evaluate_split_reports_pairs():
    m = text_model(classes=2, seed=6)
    pairs = sample_pairs(classes=2, n=6, seed=6)
    acc, outcome = evaluate_split(m, pairs)
    assert len(outcome) == 6
    assert acc == sum(g == p for g, p in outcome) / 6
    assert all(g == y for (g, _), (_, y) in zip(outcome, pairs))


def test_loss_and_gradients_covers_all_blocks():
    for cell in ("lstm", "rnn"):
        for bidi in (True, False):
            m = text_model(cell=cell, bidirectional=bidi)
            _, grads = loss_and_gradients(m, one_batch(sample_pairs(n=4)))
            assert set(grads) == set(param_blocks(m))
            assert all(np.isfinite(g).all() for g in grads.values())


def test_dense_mode_training_smoke():
    labels = LabelSet(["p", "q"])
    cfg = ModelConfig(mode="dense", cell="rnn", bidirectional=False,
                      hidden_dim=4, frame_size=80, readout_mode="mean")
    m = init_model(cfg, labels, seed=0)
    rng = np.random.default_rng(0)
    pairs = [(rng.normal(size=400), i % 2) for i in range(6)]
    m, report = train(m, pairs, config=TrainConfig(epochs=2, batch_size=3),
                      log_stream=io.StringIO())
    assert report.epochs_run == 2
    assert abs(report.first_batch_loss - math.log(2)) < 1e-12
