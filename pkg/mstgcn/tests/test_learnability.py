# coding=utf-8
"""End to end: a small multi-scale network learns a separable synthetic task."""

# Licence: BSD 3 clause

import time

from ..data import DataConfig, SkeletonDataset, generate_synthetic
from ..engine import precision
from ..network import NetworkConfig, build_network
from ..training import OptimizerState, TrainConfig, evaluate, train_epoch
from .fixtures import *


@pytest.mark.slow
def test_synthetic_task_is_learnt(chain9):
    start = time.time()
    # one call, so train and validation share the rest pose; labels cycle, so the split is balanced
    sequences = generate_synthetic(4, 35, chain9, 64, seed=0)
    data_cfg = DataConfig(frames=64, persons=1)
    train_set = SkeletonDataset.from_sequences(sequences[:100], 4, chain9, data_cfg)
    val_set = SkeletonDataset.from_sequences(sequences[100:], 4, chain9, data_cfg)
    cfg = TrainConfig(lr=0.05, batch_size=16, epochs=200, decay_epochs=(150,), seed=0)
    with precision('float32'):
        net = build_network(NetworkConfig.from_preset('mstgcn-8c-2s', topology='chain:9', num_classes=4,
                                                      max_persons=1))
        optimizer = OptimizerState(net.parameters())
        reached = None
        for epoch in range(cfg.epochs):
            if train_epoch(net, train_set, cfg, optimizer, epoch).top1 >= 0.99:
                reached = epoch + 1
                break
        assert reached is not None
        metrics, _ = evaluate(net, val_set)
    assert metrics.top1 >= 0.9
    assert time.time() - start < 600
