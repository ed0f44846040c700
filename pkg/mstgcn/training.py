# coding=utf-8
"""Optimization loop, evaluation metrics and score-level fusion."""

# Licence: BSD 3 clause

import logging
from collections import OrderedDict

import numpy as np
from toolz import partition_all
from tqdm import tqdm

from .engine import Tensor, backward, cross_entropy, no_grad, softmax_array
from .errors import ContractError, DimensionError, LabelError
from .misc import derive_seed
from .what import whatable

_log = logging.getLogger(__package__)


@whatable(non_id_keys=('progress',))
class TrainConfig(object):
    """SGD with Nesterov momentum and a step learning rate schedule.

    `lr_scaling_batch`, when set to a reference batch size B, scales the initial
    learning rate linearly: lr0 = lr * batch_size / B.
    """

    def __init__(self, lr=0.1, momentum=0.9, batch_size=24, epochs=110, decay_epochs=(50, 70, 90),
                 decay_factor=0.1, weight_decay=0.0, lr_scaling_batch=None, precision='float32', seed=0,
                 progress=False):
        super(TrainConfig, self).__init__()
        self.lr = lr
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.decay_epochs = list(decay_epochs)
        self.decay_factor = decay_factor
        self.weight_decay = weight_decay
        self.lr_scaling_batch = lr_scaling_batch
        self.precision = precision
        self.seed = seed
        self.progress = progress

    @property
    def initial_lr(self):
        if self.lr_scaling_batch:
            return self.lr * self.batch_size / self.lr_scaling_batch
        return self.lr

    def problems(self, where='train'):
        problems = []
        for field in ('batch_size', 'epochs'):
            value = getattr(self, field)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                problems.append('%s.%s: must be a positive integer, got %r' % (where, field, value))
        if not isinstance(self.lr, (int, float)) or self.lr < 0:
            problems.append('%s.lr: must be a non-negative number, got %r' % (where, self.lr))
        if not isinstance(self.momentum, (int, float)) or not 0 <= self.momentum < 1:
            problems.append('%s.momentum: must be in [0, 1), got %r' % (where, self.momentum))
        if not isinstance(self.weight_decay, (int, float)) or self.weight_decay < 0:
            problems.append('%s.weight_decay: must be non-negative, got %r' % (where, self.weight_decay))
        if not isinstance(self.decay_factor, (int, float)) or not 0 < self.decay_factor <= 1:
            problems.append('%s.decay_factor: must be in (0, 1], got %r' % (where, self.decay_factor))
        decay = self.decay_epochs
        if any(not isinstance(d, int) for d in decay) or any(b <= a for a, b in zip(decay, decay[1:])):
            problems.append('%s.decay_epochs: must be strictly increasing integers, got %r' % (where, decay))
        elif isinstance(self.epochs, int) and decay and decay[-1] >= self.epochs:
            problems.append('%s.decay_epochs: %r must all be smaller than epochs (%r)' % (where, decay, self.epochs))
        if self.lr_scaling_batch is not None and (not isinstance(self.lr_scaling_batch, int) or
                                                  self.lr_scaling_batch < 1):
            problems.append('%s.lr_scaling_batch: must be null or a positive integer, got %r' %
                            (where, self.lr_scaling_batch))
        if self.precision not in ('float32', 'float64'):
            problems.append('%s.precision: must be "float32" or "float64", got %r' % (where, self.precision))
        return problems


def lr_at_epoch(cfg, epoch):
    """lr0 * decay_factor ** (number of decay epochs already reached).

    Examples
    --------
    >>> cfg = TrainConfig()
    >>> [round(lr_at_epoch(cfg, epoch), 10) for epoch in (0, 49, 50, 70, 90)]
    [0.1, 0.1, 0.01, 0.001, 0.0001]
    """
    if not 0 <= epoch < cfg.epochs:
        raise ContractError('epoch %r outside [0, %d)' % (epoch, cfg.epochs))
    reached = sum(1 for d in cfg.decay_epochs if epoch >= d)
    return cfg.initial_lr * cfg.decay_factor ** reached


class OptimizerState(object):
    """One velocity buffer per parameter, plus a step counter."""

    def __init__(self, parameters):
        super(OptimizerState, self).__init__()
        self.velocities = OrderedDict((p.name, np.zeros_like(p.data)) for p in parameters)
        if len(self.velocities) != len(parameters):
            raise ContractError('parameter names must be unique')
        self.steps = 0


def sgd_nesterov_step(parameters, state, lr, cfg):
    """One SGD step with Nesterov momentum, in place.

        d = g + weight_decay * p
        v = momentum * v + d
        p = p - lr * (d + momentum * v)
    """
    for parameter in parameters:
        if parameter.grad is None:
            raise ContractError('parameter %s has no gradient' % parameter.name)
        if parameter.grad.shape != parameter.shape:
            raise DimensionError.mismatch('gradient of %s' % parameter.name, parameter.shape, parameter.grad.shape)
        try:
            velocity = state.velocities[parameter.name]
        except KeyError:
            raise ContractError('parameter %s has no velocity buffer' % parameter.name)
        d = parameter.grad
        if cfg.weight_decay:
            d = d + cfg.weight_decay * parameter.data
        velocity *= cfg.momentum
        velocity += d
        parameter.data = parameter.data - (lr * (d + cfg.momentum * velocity)).astype(parameter.data.dtype)
    state.steps += 1


# --- Metrics

class Metrics(object):
    """Top-1 / top-5 accuracy, mean loss and confusion counts (rows: labels, columns: predictions)."""

    def __init__(self, top1, top5, loss, confusion):
        super(Metrics, self).__init__()
        self.top1 = top1
        self.top5 = top5
        self.loss = loss
        self.confusion = confusion

    @property
    def num_samples(self):
        return int(self.confusion.sum())

    def as_dict(self):
        return OrderedDict((('loss', self.loss), ('top1', self.top1), ('top5', self.top5)))

    def __eq__(self, other):
        return (isinstance(other, Metrics) and self.as_dict() == other.as_dict() and
                np.array_equal(self.confusion, other.confusion))

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'Metrics(loss=%.6f, top1=%.4f, top5=%.4f)' % (self.loss, self.top1, self.top5)


def topk_accuracy(scores, labels, k):
    """Fraction of samples whose label is among the k best scored classes (ties: lower index first).

    Examples
    --------
    >>> topk_accuracy(np.array([[0.1, 0.7, 0.2]]), [1], 1)
    1.0
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    if scores.ndim != 2 or len(scores) != len(labels):
        raise DimensionError.mismatch('topk_accuracy', scores.shape, labels.shape)
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= scores.shape[1]:
        raise ContractError('k must be in [1, %d], got %r' % (scores.shape[1], k))
    if not len(labels):
        return 0.0
    best = np.argsort(-scores, axis=1, kind='stable')[:, :k]
    return float((best == labels[:, None]).any(axis=1).mean())


def metrics_from_scores(scores, labels):
    """Metrics of a [N, K] matrix of class probabilities; the loss is the mean negative log-likelihood."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = scores.shape[1]
    for sample, label in enumerate(labels):
        if not 0 <= label < num_classes:
            raise LabelError(int(label), num_classes, sample)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, scores.argmax(axis=1)), 1)
    likelihood = scores[np.arange(len(labels)), labels]
    loss = float(-np.log(np.maximum(likelihood, np.finfo(np.float64).tiny)).mean())
    return Metrics(topk_accuracy(scores, labels, 1), topk_accuracy(scores, labels, min(5, num_classes)),
                   loss, confusion)


def fuse_scores(score_matrices):
    """Unweighted mean of per-stream class probabilities.

    Examples
    --------
    >>> fuse_scores([np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])])
    array([[0.5, 0.5]])
    """
    score_matrices = [np.asarray(scores, dtype=np.float64) for scores in score_matrices]
    if not score_matrices:
        raise ContractError('nothing to fuse')
    for scores in score_matrices[1:]:
        if scores.shape != score_matrices[0].shape:
            raise DimensionError.mismatch('fuse_scores', score_matrices[0].shape, scores.shape)
    return np.mean(score_matrices, axis=0)


# --- Loops

def train_epoch(net, dataset, cfg, state, epoch, window=None):
    """One pass over the shuffled training set; returns the training Metrics.

    The shuffle order derives from seed ^ epoch and every random crop from (seed ^ epoch, sample index);
    the last partial batch is kept.
    """
    if not len(dataset):
        raise ContractError('cannot train on an empty dataset')
    lr = lr_at_epoch(cfg, epoch)
    epoch_seed = derive_seed(cfg.seed, epoch)
    order = np.random.default_rng(epoch_seed).permutation(len(dataset))
    parameters = net.parameters()
    net.train()
    scores, labels, total_loss = [], [], 0.0
    batches = list(partition_all(cfg.batch_size, order))
    for batch in tqdm(batches, desc='epoch %d' % epoch, disable=not cfg.progress, leave=False):
        x, y = dataset.batch(batch, window=window, mode='random', seed=epoch_seed)
        net.zero_grad()
        logits = net(Tensor(x))
        loss = cross_entropy(logits, y)
        backward(loss, parameters)
        sgd_nesterov_step(parameters, state, lr, cfg)
        total_loss += loss.item() * len(y)
        scores.append(softmax_array(logits.data.astype(np.float64)))
        labels.append(y)
        _log.debug('epoch %d batch of %d: loss %.6f', epoch, len(y), loss.item())
    metrics = metrics_from_scores(np.concatenate(scores), np.concatenate(labels))
    metrics.loss = total_loss / len(dataset)
    return metrics


def evaluate(net, dataset, batch_size=64, window=None):
    """Eval-mode forward over the whole dataset.

    Returns
    -------
    (Metrics, scores) where scores is the [N, K] float64 matrix of class probabilities.
    """
    net.eval()
    scores = []
    with no_grad():
        for batch in partition_all(batch_size, range(len(dataset))):
            x, _ = dataset.batch(batch, window=window, mode='center')
            scores.append(softmax_array(net(Tensor(x)).data.astype(np.float64)))
    scores = np.concatenate(scores) if scores else np.zeros((0, dataset.num_classes))
    return metrics_from_scores(scores, dataset.labels), scores


class TrainState(object):
    """Everything a training run carries from epoch to epoch."""

    def __init__(self, net, cfg):
        super(TrainState, self).__init__()
        self.net = net
        self.cfg = cfg
        self.optimizer = OptimizerState(net.parameters())
        self.epoch = 0
        self.history = []

    @property
    def last(self):
        return self.history[-1] if self.history else None


def fit(net, train_set, cfg, val_set=None, window=None, on_epoch=None):
    """Trains for cfg.epochs epochs, evaluating on val_set after each one.

    `on_epoch(state, record)` is called with every history record, an ordered dict with
    epoch (1-based), lr, training metrics and, if there is a validation set, val_* metrics.
    """
    state = TrainState(net, cfg)
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        metrics = train_epoch(net, train_set, cfg, state.optimizer, epoch, window=window)
        record = OrderedDict((('epoch', epoch + 1), ('lr', lr)))
        record.update(metrics.as_dict())
        if val_set is not None:
            val_metrics, _ = evaluate(net, val_set, window=window)
            record.update(('val_' + key, value) for key, value in val_metrics.as_dict().items())
        state.epoch = epoch + 1
        state.history.append(record)
        _log.info('epoch %d/%d finished: loss %.6f, top1 %.4f', epoch + 1, cfg.epochs, metrics.loss, metrics.top1)
        if on_epoch is not None:
            on_epoch(state, record)
    return state
