# coding=utf-8

# Licence: BSD 3 clause

import numpy as np

from ..data import DataConfig, SkeletonDataset, generate_synthetic
from ..engine import Parameter, Tensor, cross_entropy, no_grad, softmax_array
from ..errors import ContractError, DimensionError, LabelError
from ..network import NetworkConfig, build_network, encode_checkpoint, state_dict
from ..training import (Metrics, OptimizerState, TrainConfig, evaluate, fit, fuse_scores, lr_at_epoch,
                        metrics_from_scores, sgd_nesterov_step, topk_accuracy, train_epoch)
from .fixtures import *


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(0)
    return SkeletonDataset(rng.normal(size=(10, 4, 8, 5, 1)), [i % 3 for i in range(10)], 3)


# --- Schedule and configuration

def test_step_schedule():
    cfg = TrainConfig()
    lrs = [lr_at_epoch(cfg, epoch) for epoch in range(cfg.epochs)]
    assert np.allclose(lrs[:50], 0.1) and np.allclose(lrs[50:70], 0.01)
    assert np.allclose(lrs[70:90], 0.001) and np.allclose(lrs[90:], 0.0001)
    with pytest.raises(ContractError):
        lr_at_epoch(cfg, 110)


def test_linear_lr_scaling():
    assert TrainConfig(batch_size=48).initial_lr == 0.1
    scaled = TrainConfig(batch_size=48, lr_scaling_batch=24)
    assert scaled.initial_lr == pytest.approx(0.2)
    assert lr_at_epoch(scaled, 60) == pytest.approx(0.02)


def test_train_config_problems():
    assert TrainConfig().problems() == []
    cfg = TrainConfig(lr=-1, momentum=1.0, batch_size=0, epochs=10, decay_epochs=(5, 3), decay_factor=0,
                      weight_decay=-0.1, lr_scaling_batch=0, precision='float16')
    assert cfg.problems() == [
        'train.batch_size: must be a positive integer, got 0',
        'train.lr: must be a non-negative number, got -1',
        'train.momentum: must be in [0, 1), got 1.0',
        'train.weight_decay: must be non-negative, got -0.1',
        'train.decay_factor: must be in (0, 1], got 0',
        'train.decay_epochs: must be strictly increasing integers, got [5, 3]',
        'train.lr_scaling_batch: must be null or a positive integer, got 0',
        'train.precision: must be "float32" or "float64", got \'float16\'']
    assert TrainConfig(epochs=50).problems() == [
        'train.decay_epochs: [50, 70, 90] must all be smaller than epochs (50)']
    assert 'progress' not in TrainConfig(progress=True).what().id()


# --- Optimizer

def test_nesterov_steps():
    p = Parameter([1.0], name='p')
    cfg = TrainConfig(momentum=0.9)
    state = OptimizerState([p])
    for expected in (0.905, 0.7695):
        p.grad = np.array([0.5])
        sgd_nesterov_step([p], state, 0.1, cfg)
        assert p.data.tolist() == pytest.approx([expected])
    assert state.velocities['p'].tolist() == pytest.approx([0.95])
    assert state.steps == 2


def test_weight_decay():
    p = Parameter([2.0], name='p')
    state = OptimizerState([p])
    p.grad = np.array([0.0])
    sgd_nesterov_step([p], state, 0.1, TrainConfig(momentum=0.0, weight_decay=0.5))
    assert p.data.tolist() == pytest.approx([1.9])


def test_optimizer_contracts():
    p, q = Parameter([1.0], name='p'), Parameter([1.0], name='q')
    state = OptimizerState([p])
    with pytest.raises(ContractError) as excinfo:
        sgd_nesterov_step([p], state, 0.1, TrainConfig())
    assert 'parameter p has no gradient' in str(excinfo.value)
    q.grad = np.zeros(1)
    with pytest.raises(ContractError):
        sgd_nesterov_step([q], state, 0.1, TrainConfig())
    p.grad = np.zeros(2)
    with pytest.raises(DimensionError):
        sgd_nesterov_step([p], state, 0.1, TrainConfig())
    with pytest.raises(ContractError):
        OptimizerState([p, Parameter([0.0], name='p')])


def test_zero_learning_rate_keeps_parameters(tiny_net, tiny_dataset):
    parameters = tiny_net.parameters()
    before = [p.data.copy() for p in parameters]
    state = OptimizerState(parameters)
    cfg = TrainConfig(lr=0.0, batch_size=4, epochs=1, decay_epochs=())
    train_epoch(tiny_net, tiny_dataset, cfg, state, epoch=0, window=6)
    assert state.steps == 3
    assert any(v.any() for v in state.velocities.values())
    assert all(np.array_equal(p.data, old) for p, old in zip(parameters, before))


# --- Metrics

def test_topk_accuracy():
    scores = np.array([[0.1, 0.6, 0.3], [0.5, 0.5, 0.0], [0.2, 0.3, 0.5], [0.7, 0.2, 0.1]])
    labels = [1, 1, 0, 2]
    assert topk_accuracy(scores, labels, 1) == 0.25
    # ties go to the lower class index
    assert topk_accuracy(scores, labels, 2) == 0.5
    assert topk_accuracy(scores, labels, 3) == 1.0
    with pytest.raises(ContractError):
        topk_accuracy(scores, labels, 4)
    with pytest.raises(DimensionError):
        topk_accuracy(scores, labels[:3], 1)


def test_metrics_from_scores():
    scores = np.array([[0.8, 0.1, 0.1], [0.3, 0.6, 0.1], [0.2, 0.5, 0.3]])
    metrics = metrics_from_scores(scores, [0, 1, 2])
    assert metrics.top1 == pytest.approx(2 / 3)
    assert metrics.top5 == 1.0
    assert metrics.loss == pytest.approx(-np.mean(np.log([0.8, 0.6, 0.3])))
    assert metrics.confusion.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 0]]
    assert metrics.num_samples == 3
    assert list(metrics.as_dict()) == ['loss', 'top1', 'top5']
    assert metrics == metrics_from_scores(scores, [0, 1, 2])
    assert metrics != metrics_from_scores(scores, [0, 1, 1])
    with pytest.raises(LabelError):
        metrics_from_scores(scores, [0, 3, 1])


def test_random_scores_are_at_chance():
    rng = np.random.default_rng(4)
    scores = rng.dirichlet(np.ones(10), size=10000)
    labels = rng.integers(0, 10, size=10000)
    metrics = metrics_from_scores(scores, labels)
    assert metrics.top1 == pytest.approx(0.1, abs=0.02)
    assert metrics.top5 == pytest.approx(0.5, abs=0.03)


def test_fusion():
    rng = np.random.default_rng(2)
    scores = rng.dirichlet(np.ones(5), size=8)
    assert np.array_equal(fuse_scores([scores]), scores)
    assert np.allclose(fuse_scores([scores, scores, scores]), scores)
    other = rng.dirichlet(np.ones(5), size=8)
    assert np.allclose(fuse_scores([scores, other]).sum(axis=1), 1)
    with pytest.raises(DimensionError):
        fuse_scores([scores, other[:4]])
    with pytest.raises(ContractError):
        fuse_scores([])


def test_fusion_is_no_worse_than_the_weakest_stream():
    rng = np.random.default_rng(5)
    labels = rng.integers(0, 6, size=2000)
    # four streams of increasing quality
    streams = [softmax_array(signal * np.eye(6)[labels] + rng.normal(size=(2000, 6)))
               for signal in (0.5, 1.0, 1.5, 2.0)]
    singles = [topk_accuracy(scores, labels, 1) for scores in streams]
    assert topk_accuracy(fuse_scores(streams), labels, 1) >= min(singles)


# --- Loops

def test_train_epoch_is_deterministic(tiny_config, tiny_dataset):
    cfg = TrainConfig(lr=0.01, batch_size=4, epochs=2, decay_epochs=(), seed=3)
    runs = []
    for _ in range(2):
        net = build_network(tiny_config)
        state = OptimizerState(net.parameters())
        metrics = train_epoch(net, tiny_dataset, cfg, state, epoch=1, window=6)
        runs.append((metrics, state_dict(net)))
        # 10 samples in batches of 4: the last partial batch is kept
        assert state.steps == 3
        assert metrics.num_samples == 10
    (a, state_a), (b, state_b) = runs
    assert a == b
    assert all(np.array_equal(state_a[name], state_b[name]) for name in state_a)
    assert not np.array_equal(state_a['fc.weight'], build_network(tiny_config).child('fc').parameter('weight').data)


def test_evaluate(tiny_net, tiny_dataset):
    before = {name: value.copy() for name, value in state_dict(tiny_net).items()}
    metrics, scores = evaluate(tiny_net, tiny_dataset, batch_size=3)
    assert scores.shape == (10, 3) and scores.dtype == np.float64
    assert np.allclose(scores.sum(axis=1), 1)
    assert metrics == metrics_from_scores(scores, tiny_dataset.labels)
    after = state_dict(tiny_net)
    assert all(np.array_equal(before[name], after[name]) for name in before)
    again, _ = evaluate(tiny_net, tiny_dataset, batch_size=10)
    assert again.loss == pytest.approx(metrics.loss, abs=1e-12)


def test_evaluate_repeats_bitwise(tiny_net, tiny_dataset):
    first, scores = evaluate(tiny_net, tiny_dataset, batch_size=4, window=6)
    again, rescored = evaluate(tiny_net, tiny_dataset, batch_size=4, window=6)
    assert np.array_equal(scores, rescored)
    assert first == again


def full_batch_loss(net, dataset):
    net.train()
    with no_grad():
        x, y = dataset.batch(range(len(dataset)))
        return cross_entropy(net(Tensor(x)), y).item()


def test_one_synthetic_epoch_lowers_the_loss(chain5):
    sequences = generate_synthetic(3, 16, chain5, 16, seed=0)
    dataset = SkeletonDataset.from_sequences(sequences, 3, chain5, DataConfig(frames=16, persons=1))
    net = build_network(NetworkConfig(tiny_blocks(in_channels=3), topology='chain:5', num_classes=3,
                                      in_channels=3, max_persons=1, seed=7, strict=False))
    before = full_batch_loss(net, dataset)
    cfg = TrainConfig(lr=0.01, batch_size=8, epochs=1, decay_epochs=())
    train_epoch(net, dataset, cfg, OptimizerState(net.parameters()), epoch=0)
    assert full_batch_loss(net, dataset) < before


def test_reproducible_runs_write_identical_checkpoints(tiny_config, tiny_dataset):
    cfg = TrainConfig(lr=0.01, batch_size=4, epochs=2, decay_epochs=(1,), seed=5)
    checkpoints = []
    for _ in range(2):
        net = build_network(tiny_config)
        fit(net, tiny_dataset, cfg, val_set=tiny_dataset, window=6)
        checkpoints.append(encode_checkpoint(state_dict(net)))
    assert checkpoints[0] == checkpoints[1]
    assert checkpoints[0] != encode_checkpoint(state_dict(build_network(tiny_config)))


def test_fit_history(tiny_net, tiny_dataset):
    cfg = TrainConfig(lr=0.01, batch_size=5, epochs=3, decay_epochs=(2,))
    seen = []
    state = fit(tiny_net, tiny_dataset, cfg, val_set=tiny_dataset, on_epoch=lambda s, record: seen.append(record))
    assert state.epoch == 3 and state.history == seen
    assert [record['epoch'] for record in state.history] == [1, 2, 3]
    assert [record['lr'] for record in state.history] == pytest.approx([0.01, 0.01, 0.001])
    assert list(state.last) == ['epoch', 'lr', 'loss', 'top1', 'top5', 'val_loss', 'val_top1', 'val_top5']
    assert state.optimizer.steps == 6
    assert all(np.isfinite(record['loss']) for record in state.history)
    without_val = fit(build_network(tiny_net.cfg), tiny_dataset, TrainConfig(batch_size=5, epochs=1,
                                                                             decay_epochs=()))
    assert 'val_loss' not in without_val.last


def test_metrics_repr():
    metrics = Metrics(0.5, 1.0, 0.25, np.eye(2, dtype=np.int64))
    assert repr(metrics) == 'Metrics(loss=0.250000, top1=0.5000, top5=1.0000)'
