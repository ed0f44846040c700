# coding=utf-8
"""Graph convolution layers and the building blocks of the network.

Layers hold named parameters, named buffers (batch normalization running moments) and
named child layers; full names are dotted paths such as "block3.msgc.frag2.w_centrifugal".

Multi-scale modules split their input along channels into s fragments and process them
hierarchically: fragment i sees its own slice plus the output of fragment i - 1, so the
receptive field of the last fragments grows with i.
"""

# Licence: BSD 3 clause

from collections import OrderedDict

import numpy as np

from .engine import (Parameter, RunningMoments, Tensor, batch_norm, concat, graph_contract,
                     pointwise_conv, relu, temporal_conv)
from .errors import ConfigError, DimensionError
from .graph import SUBSET_NAMES
from .what import whatable

MASK_KINDS = ('additive', 'multiplicative')
SPATIAL_KINDS = ('regular', 'ms')
TEMPORAL_KINDS = ('regular', 'mt')
FUSED_KINDS = ('none', 'str')


# --- Layer plumbing

class Layer(object):
    """Base class of every layer: registries of parameters, buffers and children."""

    def __init__(self):
        super(Layer, self).__init__()
        self._parameters = OrderedDict()
        self._buffers = OrderedDict()
        self._children = OrderedDict()
        self.training = True

    def add_parameter(self, name, data):
        parameter = Parameter(data, name=name)
        self._parameters[name] = parameter
        return parameter

    def add_child(self, name, layer):
        self._children[name] = layer
        return layer

    def parameter(self, name):
        return self._parameters[name]

    def child(self, name):
        return self._children[name]

    def children(self):
        return list(self._children.values())

    def named_parameters(self, prefix=''):
        """Yields (dotted name, Parameter) in registration order, depth first."""
        for name, parameter in self._parameters.items():
            yield prefix + name, parameter
        for name, child in self._children.items():
            for item in child.named_parameters(prefix + name + '.'):
                yield item

    def parameters(self):
        return [parameter for _, parameter in self.named_parameters()]

    def named_buffers(self, prefix=''):
        """Yields (dotted name, array) for the non-trainable state."""
        for name, (holder, attribute) in self._buffers.items():
            yield prefix + name, getattr(holder, attribute)
        for name, child in self._children.items():
            for item in child.named_buffers(prefix + name + '.'):
                yield item

    def set_buffer(self, dotted_name, value):
        head, _, rest = dotted_name.partition('.')
        if rest:
            return self._children[head].set_buffer(rest, value)
        holder, attribute = self._buffers[head]
        current = getattr(holder, attribute)
        if current.shape != np.shape(value):
            raise DimensionError.mismatch('buffer %s' % dotted_name, current.shape, np.shape(value))
        setattr(holder, attribute, np.asarray(value, dtype=current.dtype).copy())

    def num_parameters(self):
        return sum(parameter.size for parameter in self.parameters())

    def train(self, mode=True):
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for parameter in self.parameters():
            parameter.zero_grad()

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):  # pragma: no cover
        raise NotImplementedError()


def uniform_init(rng, shape, fan_in):
    """Fan-in scaled uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def split_channels(x, s):
    """Splits [N, C, ...] into s equal channel fragments, in index order."""
    width = x.shape[1] // s
    return [x[:, i * width:(i + 1) * width] for i in range(s)]


def subsample(x, stride):
    """Keeps every stride-th frame, starting at frame 0."""
    return x if stride == 1 else x[:, :, ::stride]


# --- Single scale units

class SpatialGraphConv(Layer):
    """Partitioned spatial graph convolution with learnable masks.

    Y = sum_p W_p X (A_p + M_p)   (additive masks, the default)
    Y = sum_p W_p X (A_p * M_p)   (multiplicative masks)

    The three normalized subset matrices A_p are frozen; the masks M_p are trainable.
    """

    def __init__(self, in_channels, out_channels, adjacency, rng, mask='additive'):
        super(SpatialGraphConv, self).__init__()
        if mask not in MASK_KINDS:
            raise ConfigError('unknown mask kind "%s", use one of %r' % (mask, MASK_KINDS))
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.mask = mask
        self.adjacency = [Tensor(a) for a in adjacency.subsets]
        num_joints = adjacency.num_joints
        for subset in SUBSET_NAMES:
            self.add_parameter('w_' + subset, uniform_init(rng, (out_channels, in_channels), in_channels))
        for subset in SUBSET_NAMES:
            neutral = np.zeros if mask == 'additive' else np.ones
            self.add_parameter('m_' + subset, neutral((num_joints, num_joints)))
        self.add_parameter('bias', np.zeros(out_channels))

    def weights(self):
        return [self.parameter('w_' + subset) for subset in SUBSET_NAMES]

    def masks(self):
        return [self.parameter('m_' + subset) for subset in SUBSET_NAMES]

    def effective_adjacency(self):
        if self.mask == 'additive':
            return [a + m for a, m in zip(self.adjacency, self.masks())]
        return [a * m for a, m in zip(self.adjacency, self.masks())]

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError('SpatialGraphConv(%d->%d) got input shape %r' %
                                 (self.in_channels, self.out_channels, x.shape))
        out = None
        last = len(SUBSET_NAMES) - 1
        for p, (a, w) in enumerate(zip(self.effective_adjacency(), self.weights())):
            y = pointwise_conv(graph_contract(x, a), w, self.parameter('bias') if p == last else None)
            out = y if out is None else out + y
        return out


class TemporalGraphConv(Layer):
    """A (K x 1) convolution along time, the temporal counterpart of the spatial graph convolution.

    Neighbouring frames of the same joint are the temporal neighbourhood, so the partitioned
    temporal adjacency reduces to an ordinary convolution window of K frames.
    """

    def __init__(self, in_channels, out_channels, rng, kernel_size=9, stride=1):
        super(TemporalGraphConv, self).__init__()
        if kernel_size % 2 == 0:
            raise ConfigError('temporal kernel size must be odd, got %d' % kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.add_parameter('weight', uniform_init(rng, (out_channels, in_channels, kernel_size),
                                                  in_channels * kernel_size))
        self.add_parameter('bias', np.zeros(out_channels))

    def forward(self, x):
        return temporal_conv(x, self.parameter('weight'), self.parameter('bias'), self.stride)


class Pointwise(Layer):
    """A 1x1 convolution, optionally preceded by temporal subsampling."""

    def __init__(self, in_channels, out_channels, rng, stride=1):
        super(Pointwise, self).__init__()
        self.stride = stride
        self.add_parameter('weight', uniform_init(rng, (out_channels, in_channels), in_channels))
        self.add_parameter('bias', np.zeros(out_channels))

    def forward(self, x):
        return pointwise_conv(subsample(x, self.stride), self.parameter('weight'), self.parameter('bias'))


class BatchNorm(Layer):
    """Per-channel batch normalization with running moments."""

    def __init__(self, num_channels):
        super(BatchNorm, self).__init__()
        self.add_parameter('scale', np.ones(num_channels))
        self.add_parameter('shift', np.zeros(num_channels))
        self.moments = RunningMoments(num_channels)
        self._buffers['running_mean'] = (self.moments, 'mean')
        self._buffers['running_var'] = (self.moments, 'var')

    def forward(self, x):
        return batch_norm(x, self.parameter('scale'), self.parameter('shift'), self.moments,
                          training=self.training)


# --- Multi-scale units

class _MultiScale(Layer):

    def __init__(self, in_channels, out_channels, s):
        super(_MultiScale, self).__init__()
        if s < 1:
            raise ConfigError('the subset count s must be positive, got %r' % s)
        # fragments split the (projected) output width
        if out_channels % s:
            raise ConfigError('out_channels %d is not divisible by s=%d' % (out_channels, s))
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.s = s

    def fragments(self):
        return [self.child('frag%d' % (i + 1)) for i in range(self.s)]

    def projection(self):
        return self._children.get('proj')

    def forward(self, x):
        return concat(self.fragment_outputs(x), axis=1)


class MsGc(_MultiScale):
    """Multi-scale spatial graph convolution.

    y_1 = G_1(x_1), y_i = G_i(x_i + y_{i-1}), output relu([y_1; ...; y_s] + R(x)).
    When input and output channels differ, R is a learned pointwise transform applied before
    the split; otherwise R is the identity.
    """

    def __init__(self, in_channels, out_channels, s, adjacency, rng, mask='additive'):
        super(MsGc, self).__init__(in_channels, out_channels, s)
        if in_channels != out_channels:
            self.add_child('proj', Pointwise(in_channels, out_channels, rng))
        width = out_channels // s
        for i in range(s):
            self.add_child('frag%d' % (i + 1), SpatialGraphConv(width, width, adjacency, rng, mask=mask))

    def _residual_input(self, x):
        projection = self.projection()
        return x if projection is None else projection(x)

    def fragment_outputs(self, x):
        return self._hierarchy(self._residual_input(x))

    def _hierarchy(self, r):
        ys = []
        for xi, fragment in zip(split_channels(r, self.s), self.fragments()):
            ys.append(fragment(xi if not ys else xi + ys[-1]))
        return ys

    def forward(self, x):
        r = self._residual_input(x)
        return relu(concat(self._hierarchy(r), axis=1) + r)


class MtGc(_MultiScale):
    """Multi-scale temporal graph convolution: the MsGc recurrence over temporal convolutions.

    No outer residual and no activation: the output is the plain concatenation.
    Fragment 1 carries the stride; later fragments subsample their slice first and run at stride 1.
    """

    def __init__(self, in_channels, out_channels, s, rng, kernel_size=9, stride=1):
        super(MtGc, self).__init__(in_channels, out_channels, s)
        if s > 1 and in_channels != out_channels:
            raise ConfigError('MtGc with s=%d needs equal input and output channels, got %d -> %d' %
                              (s, in_channels, out_channels))
        self.stride = stride
        for i in range(s):
            self.add_child('frag%d' % (i + 1),
                           TemporalGraphConv(in_channels // s, out_channels // s, rng,
                                             kernel_size=kernel_size, stride=stride if i == 0 else 1))

    def fragment_outputs(self, x):
        ys = []
        for xi, fragment in zip(split_channels(x, self.s), self.fragments()):
            ys.append(fragment(xi if not ys else subsample(xi, self.stride) + ys[-1]))
        return ys


class StrGc(_MultiScale):
    """Fused spatial-temporal residual graph convolution.

    y_1 = T_1(G_1(x_1)), y_i = T_i(G_i(x_i + y_{i-1})); the output is the concatenation.
    """

    def __init__(self, in_channels, out_channels, s, adjacency, rng, kernel_size=9, stride=1, mask='additive'):
        super(StrGc, self).__init__(in_channels, out_channels, s)
        if in_channels != out_channels:
            self.add_child('proj', Pointwise(in_channels, out_channels, rng))
        self.stride = stride
        width = out_channels // s
        for i in range(s):
            self.add_child('frag%d' % (i + 1), _StrFragment(width, adjacency, rng, kernel_size,
                                                            stride if i == 0 else 1, mask))

    def fragment_outputs(self, x):
        projection = self.projection()
        r = x if projection is None else projection(x)
        ys = []
        for xi, fragment in zip(split_channels(r, self.s), self.fragments()):
            ys.append(fragment(xi if not ys else subsample(xi, self.stride) + ys[-1]))
        return ys


class _StrFragment(Layer):

    def __init__(self, width, adjacency, rng, kernel_size, stride, mask):
        super(_StrFragment, self).__init__()
        self.add_child('sgc', SpatialGraphConv(width, width, adjacency, rng, mask=mask))
        self.add_child('tgc', TemporalGraphConv(width, width, rng, kernel_size=kernel_size, stride=stride))

    def forward(self, x):
        return self.child('tgc')(self.child('sgc')(x))


# --- Blocks

@whatable
class BlockSpec(object):
    """Declarative description of one ST-GC block."""

    def __init__(self, in_channels, out_channels, spatial_kind='regular', temporal_kind='regular',
                 fused='none', s=1, kernel_size=9, stride=1, has_residual=True):
        super(BlockSpec, self).__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.spatial_kind = spatial_kind
        self.temporal_kind = temporal_kind
        self.fused = fused
        self.s = s
        self.kernel_size = kernel_size
        self.stride = stride
        self.has_residual = has_residual

    @property
    def multi_scale(self):
        return self.fused == 'str' or self.spatial_kind == 'ms' or self.temporal_kind == 'mt'

    def problems(self, where='block'):
        """Returns a list of human readable problems (empty if the block is valid)."""
        problems = []
        for field, value, allowed in (('spatial_kind', self.spatial_kind, SPATIAL_KINDS),
                                      ('temporal_kind', self.temporal_kind, TEMPORAL_KINDS),
                                      ('fused', self.fused, FUSED_KINDS)):
            if value not in allowed:
                problems.append('%s: %s must be one of %r, got %r' % (where, field, allowed, value))
        for field in ('in_channels', 'out_channels', 's', 'kernel_size', 'stride'):
            value = getattr(self, field)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                problems.append('%s: %s must be a positive integer, got %r' % (where, field, value))
        if problems:
            return problems
        if self.fused == 'str' and (self.spatial_kind != 'regular' or self.temporal_kind != 'regular'):
            problems.append('%s: a fused STR-GC block cannot also set spatial_kind/temporal_kind' % where)
        if self.kernel_size % 2 == 0:
            problems.append('%s: kernel_size must be odd, got %d' % (where, self.kernel_size))
        if self.multi_scale:
            if self.out_channels % self.s:
                problems.append('%s: out_channels %d is not divisible by s=%d' % (where, self.out_channels, self.s))
        elif self.s != 1:
            problems.append('%s: single scale blocks need s=1, got s=%d' % (where, self.s))
        return problems


class StGcBlock(Layer):
    """One ST-GC block.

    Separate units: relu(bn(spatial(x))) -> bn(temporal(.)) + residual(x) -> relu.
    Fused unit:     bn(strgc(x)) + residual(x) -> relu.
    """

    def __init__(self, spec, adjacency, rng, mask='additive'):
        super(StGcBlock, self).__init__()
        problems = spec.problems()
        if problems:
            raise ConfigError(problems)
        self.spec = spec
        c_in, c_out = spec.in_channels, spec.out_channels
        if spec.fused == 'str':
            self.add_child('strgc', StrGc(c_in, c_out, spec.s, adjacency, rng, kernel_size=spec.kernel_size,
                                          stride=spec.stride, mask=mask))
            self.add_child('bn', BatchNorm(c_out))
        else:
            if spec.spatial_kind == 'ms':
                self.add_child('msgc', MsGc(c_in, c_out, spec.s, adjacency, rng, mask=mask))
            else:
                self.add_child('sgc', SpatialGraphConv(c_in, c_out, adjacency, rng, mask=mask))
            self.add_child('bn_spatial', BatchNorm(c_out))
            if spec.temporal_kind == 'mt':
                self.add_child('mtgc', MtGc(c_out, c_out, spec.s, rng, kernel_size=spec.kernel_size,
                                            stride=spec.stride))
            else:
                self.add_child('tgc', TemporalGraphConv(c_out, c_out, rng, kernel_size=spec.kernel_size,
                                                        stride=spec.stride))
            self.add_child('bn_temporal', BatchNorm(c_out))
        if spec.has_residual and (c_in != c_out or spec.stride != 1):
            self.add_child('residual', _ResidualProjection(c_in, c_out, spec.stride, rng))

    @property
    def spatial_unit(self):
        return self._children.get('msgc') or self._children.get('sgc')

    @property
    def temporal_unit(self):
        return self._children.get('mtgc') or self._children.get('tgc')

    def multi_scale_unit(self, axis):
        """The unit whose fragments drive the receptive field along axis ("spatial" or "temporal")."""
        if 'strgc' in self._children:
            return self.child('strgc')
        return self.spatial_unit if axis == 'spatial' else self.temporal_unit

    def residual(self, x):
        if not self.spec.has_residual:
            return None
        if 'residual' in self._children:
            return self.child('residual')(x)
        return x

    def forward(self, x):
        if 'strgc' in self._children:
            y = self.child('bn')(self.child('strgc')(x))
        else:
            y = relu(self.child('bn_spatial')(self.spatial_unit(x)))
            y = self.child('bn_temporal')(self.temporal_unit(y))
        r = self.residual(x)
        return relu(y if r is None else y + r)


class _ResidualProjection(Layer):
    """Block residual under a shape change: subsample along time, project, normalize."""

    def __init__(self, in_channels, out_channels, stride, rng):
        super(_ResidualProjection, self).__init__()
        self.add_child('proj', Pointwise(in_channels, out_channels, rng, stride=stride))
        self.add_child('bn', BatchNorm(out_channels))

    def forward(self, x):
        return self.child('bn')(self.child('proj')(x))
