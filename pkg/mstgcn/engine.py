# coding=utf-8
"""Dense tensors with reverse-mode differentiation.

A `Tensor` wraps a numpy array. Operations on tensors that require gradients record, on
their result, the parent tensors and a vector-Jacobian product; `backward` walks that
record in reverse topological order and accumulates gradients into the leaves.

Precision is a global setting: 32-bit floats by default, 64-bit for verification.

Examples
--------
>>> with precision('float64'):
...     w = Parameter([1.0, 2.0], name='w')
...     x = Tensor([3.0, 4.0])
...     loss = (w * x).sum()
...     backward(loss)
...     print(w.grad)
[3. 4.]
"""

# Licence: BSD 3 clause

import os
from contextlib import contextmanager

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, LabelError

MAX_RANK = 5
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1

_PRECISIONS = {'float32': np.float32, 'float64': np.float64}
_STATE = {'dtype': np.float32,
          'grad_enabled': True,
          'debug': os.environ.get('MSTGCN_DEBUG', '') not in ('', '0')}


# --- Global settings

def set_precision(name):
    """Sets the engine floating point precision ("float32" or "float64")."""
    try:
        _STATE['dtype'] = _PRECISIONS[name]
    except KeyError:
        raise ConfigError('unknown precision "%s", use one of %r' % (name, sorted(_PRECISIONS)))


def get_precision():
    return np.dtype(_STATE['dtype'])


@contextmanager
def precision(name):
    """Temporarily switches the engine precision."""
    old = _STATE['dtype']
    set_precision(name)
    try:
        yield
    finally:
        _STATE['dtype'] = old


@contextmanager
def no_grad():
    """Operations inside this context do not record anything for backward."""
    old = _STATE['grad_enabled']
    _STATE['grad_enabled'] = False
    try:
        yield
    finally:
        _STATE['grad_enabled'] = old


def set_debug(enabled=True):
    """In debug mode every operation checks its output for NaN / Inf."""
    _STATE['debug'] = bool(enabled)


# --- Tensors

class Tensor(object):
    """A dense array of rank at most 5 with an optional gradient accumulator."""

    __slots__ = ('data', 'requires_grad', 'grad', '_parents', '_vjp', '__weakref__')

    def __init__(self, data, requires_grad=False):
        super(Tensor, self).__init__()
        self.data = np.asarray(data, dtype=_STATE['dtype'])
        if self.data.ndim > MAX_RANK:
            raise DimensionError('tensors have rank at most %d, got shape %r' % (MAX_RANK, self.data.shape))
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return '%s(shape=%r, requires_grad=%r)' % (self.__class__.__name__, self.shape, self.requires_grad)

    # ---- Operators

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def relu(self):
        return relu(self)


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ('name',)

    def __init__(self, data, name=None):
        super(Parameter, self).__init__(np.array(data, dtype=_STATE['dtype']), requires_grad=True)
        self.name = name

    def __repr__(self):
        return 'Parameter(%r, shape=%r)' % (self.name, self.shape)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data, parents, vjp, op):
    """Wraps the output of an operation, recording it for backward when needed."""
    out = Tensor(data)
    if _STATE['debug'] and not np.all(np.isfinite(out.data)):
        raise ContractError('%s produced non-finite values' % op)
    if _STATE['grad_enabled'] and any(parent.requires_grad for parent in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


# --- Backward

def _topological(root):
    """Post-order of the recorded graph under root (parents before children)."""
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        stack.extend((parent, False) for parent in node._parents
                     if parent.requires_grad and id(parent) not in visited)
    return order


def backward(loss, parameters=None):
    """Accumulates d(loss)/d(leaf) into the `grad` of every leaf tensor reachable from loss.

    Parameters
    ----------
    loss : Tensor
      A scalar produced by engine operations.

    parameters : iterable of Tensor or None
      If given, parameters the loss does not depend upon get a zero gradient
      (instead of no gradient at all).
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError('backward needs a scalar loss, got shape %r' % (getattr(loss, 'shape', None),))
    if loss.requires_grad:
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(_topological(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, parent_grad in zip(node._parents, node._vjp(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad
    for parameter in parameters or ():
        if parameter.grad is None:
            parameter.grad = np.zeros_like(parameter.data)


# --- Elementwise and shape operations

def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise DimensionError.mismatch(op, a.shape, b.shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim == 0 and a.ndim > 0:
        a, b = b, a
    if a.ndim == 0:
        return _result(a.data + b.data, (a, b),
                       lambda g: (g.sum(), g), 'add')
    _same_shape('add', a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g), 'add')


def mul(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        factor = float(b)
        return _result(a.data * factor, (a,), lambda g: (g * factor,), 'mul')
    _same_shape('mul', a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), 'mul')


def getitem(x, index):
    """Basic slicing (no repeated indices)."""
    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[index] += g
        return gx,
    return _result(x.data[index], (x,), vjp, 'getitem')


def reshape(x, shape):
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), 'reshape')


def transpose(x, axes):
    inverse = tuple(np.argsort(axes))
    return _result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),), 'transpose')


def tsum(x, axis=None):
    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, x.shape).copy(),
        return np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),
    return _result(x.data.sum(axis=axis), (x,), vjp, 'sum')


def tmean(x, axis=None):
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(tsum(x, axis), 1.0 / count)


def concat(tensors, axis=1):
    """Concatenates tensors along an axis (channels by default)."""
    tensors = [as_tensor(t) for t in tensors]
    offsets = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                   lambda g: tuple(np.split(g, offsets, axis=axis)), 'concat')


def relu(x):
    positive = x.data > 0
    return _result(np.where(positive, x.data, 0), (x,), lambda g: (g * positive,), 'relu')


# --- Graph convolution building blocks

def graph_contract(x, a):
    """Right-multiplies the joint axis of x by a joint-by-joint matrix.

    out[n, c, t, v] = sum_w x[n, c, t, w] a[w, v]

    Examples
    --------
    >>> with precision('float64'):
    ...     out = graph_contract(Tensor([[[[1.0, 2.0]]]]), Tensor([[0.0, 1.0], [1.0, 0.0]]))
    >>> out.data.ravel()
    array([2., 1.])
    """
    num_joints = x.shape[-1]
    if a.ndim != 2 or a.shape != (num_joints, num_joints):
        raise DimensionError.mismatch('graph_contract', x.shape, a.shape)

    def vjp(g):
        gx = g @ a.data.T if x.requires_grad else None
        ga = (x.data.reshape(-1, num_joints).T @ g.reshape(-1, num_joints)) if a.requires_grad else None
        return gx, ga

    return _result(x.data @ a.data, (x, a), vjp, 'graph_contract')


def pointwise_conv(x, w, b=None):
    """A 1x1 convolution: out[n, o, t, v] = b[o] + sum_i w[o, i] x[n, i, t, v]."""
    if x.ndim != 4 or w.ndim != 2 or w.shape[1] != x.shape[1]:
        raise DimensionError.mismatch('pointwise_conv', x.shape, w.shape)
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError.mismatch('pointwise_conv bias', w.shape, b.shape)
    out = np.einsum('oi,nitv->notv', w.data, x.data, optimize=True)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def vjp(g):
        gx = np.einsum('oi,notv->nitv', w.data, g, optimize=True) if x.requires_grad else None
        gw = np.einsum('notv,nitv->oi', g, x.data, optimize=True) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, vjp, 'pointwise_conv')


def temporal_conv(x, w, b=None, stride=1):
    """A (K x 1) convolution along time with zero padding K // 2 and the given stride.

    x is [N, C_in, T, V], w is [C_out, C_in, K]; the output has ceil(T / stride) frames.
    """
    if w.ndim != 3 or x.ndim != 4 or w.shape[1] != x.shape[1]:
        raise DimensionError.mismatch('temporal_conv', x.shape, w.shape)
    kernel_size = w.shape[2]
    if kernel_size % 2 == 0:
        raise ConfigError('temporal kernel size must be odd, got %d' % kernel_size)
    if int(stride) != stride or stride < 1:
        raise ConfigError('temporal stride must be a positive integer, got %r' % (stride,))
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError.mismatch('temporal_conv bias', w.shape, b.shape)

    pad = kernel_size // 2
    num_frames = x.shape[2]
    out_frames = (num_frames - 1) // stride + 1
    span = stride * (out_frames - 1) + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (0, 0)))

    out = np.zeros((x.shape[0], w.shape[0], out_frames, x.shape[3]), dtype=xp.dtype)
    for k in range(kernel_size):
        out += np.einsum('oi,nitv->notv', w.data[:, :, k], xp[:, :, k:k + span:stride], optimize=True)
    if b is not None:
        out += b.data[None, :, None, None]

    def vjp(g):
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for k in range(kernel_size):
                gxp[:, :, k:k + span:stride] += np.einsum('oi,notv->nitv', w.data[:, :, k], g, optimize=True)
            gx = gxp[:, :, pad:pad + num_frames]
        if w.requires_grad:
            gw = np.stack([np.einsum('notv,nitv->oi', g, xp[:, :, k:k + span:stride], optimize=True)
                           for k in range(kernel_size)], axis=-1)
        gb = g.sum(axis=(0, 2, 3)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, vjp, 'temporal_conv')


class RunningMoments(object):
    """Per-channel running mean and variance of a batch normalization layer."""

    def __init__(self, num_channels, momentum=BN_MOMENTUM):
        super(RunningMoments, self).__init__()
        self.momentum = momentum
        self.mean = np.zeros(num_channels, dtype=_STATE['dtype'])
        self.var = np.ones(num_channels, dtype=_STATE['dtype'])

    def update(self, batch_mean, batch_var):
        self.mean = ((1 - self.momentum) * self.mean + self.momentum * batch_mean).astype(self.mean.dtype)
        self.var = ((1 - self.momentum) * self.var + self.momentum * batch_var).astype(self.var.dtype)


def batch_norm(x, scale, shift, moments, training=True, eps=BN_EPSILON):
    """Normalizes every channel (axis 1) over all the other axes.

    Training mode normalizes with the (biased) batch moments and updates the running moments
    with the unbiased batch variance; evaluation mode uses the running moments.
    """
    num_channels = x.shape[1]
    if scale.shape != (num_channels,) or shift.shape != (num_channels,):
        raise DimensionError.mismatch('batch_norm', x.shape, scale.shape)
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, num_channels) + (1,) * (x.ndim - 2)
    count = x.size // num_channels

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        moments.update(mean, var * count / (count - 1) if count > 1 else var)
    else:
        mean, var = moments.mean, moments.var
    inv_std = (1.0 / np.sqrt(var + eps)).reshape(bshape)
    xhat = (x.data - mean.reshape(bshape)) * inv_std
    out = xhat * scale.data.reshape(bshape) + shift.data.reshape(bshape)

    def vjp(g):
        gx = None
        if x.requires_grad:
            gxhat = g * scale.data.reshape(bshape)
            if training:
                gx = inv_std / count * (count * gxhat -
                                        gxhat.sum(axis=axes, keepdims=True) -
                                        xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
            else:
                gx = gxhat * inv_std
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _result(out, (x, scale, shift), vjp, 'batch_norm')


# --- Heads

def global_avg_pool(x):
    """Averages [N, C, T, V] over time and joints into [N, C]."""
    if x.ndim != 4:
        raise DimensionError('global_avg_pool expects [N, C, T, V], got %r' % (x.shape,))
    count = x.shape[2] * x.shape[3]
    return _result(x.data.mean(axis=(2, 3)), (x,),
                   lambda g: (np.broadcast_to(g[:, :, None, None] / count, x.shape).copy(),),
                   'global_avg_pool')


def linear(x, w, b=None):
    """out = x w^T + b, for x [N, I] and w [O, I]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError.mismatch('linear', x.shape, w.shape)
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def vjp(g):
        return (g @ w.data if x.requires_grad else None,
                g.T @ x.data if w.requires_grad else None,
                g.sum(axis=0) if b is not None else None)

    return _result(out, (x, w) if b is None else (x, w, b), vjp, 'linear')


def softmax_array(z):
    """Row-wise softmax of a plain array (max-subtracted)."""
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x):
    """Softmax along the last axis.

    Examples
    --------
    >>> with precision('float64'):
    ...     print(softmax(Tensor([0.0, 0.0, 0.0])).data)
    [0.33333333 0.33333333 0.33333333]
    """
    s = softmax_array(x.data)
    return _result(s, (x,), lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),), 'softmax')


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under softmax(logits).

    Examples
    --------
    >>> with precision('float64'):
    ...     loss = cross_entropy(Tensor([[1.0, 2.0, 3.0]]), [2])
    >>> bool(np.isclose(loss.item(), np.log(np.exp(1) + np.exp(2) + np.exp(3)) - 3))
    True
    """
    labels = np.asarray(labels, dtype=np.int64).ravel()
    num_samples, num_classes = logits.shape
    if labels.shape != (num_samples,):
        raise DimensionError.mismatch('cross_entropy', logits.shape, labels.shape)
    for sample, label in enumerate(labels):
        if not 0 <= label < num_classes:
            raise LabelError(int(label), num_classes, sample)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(num_samples)
    loss = -log_probs[rows, labels].mean()

    def vjp(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1
        return grad * (g / num_samples),

    return _result(loss, (logits,), vjp, 'cross_entropy')
