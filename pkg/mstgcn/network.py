# coding=utf-8
"""The 10-block network: configuration, presets, forward, parameter reports, probes and checkpoints."""

# Licence: BSD 3 clause

import copy
import logging
import struct
import warnings
from collections import OrderedDict

import numpy as np
from toolz import groupby, valmap

from .blocks import (BatchNorm, BlockSpec, Layer, MsGc, MtGc, SpatialGraphConv, StGcBlock, StrGc,
                     TemporalGraphConv, MASK_KINDS, uniform_init)
from .engine import Tensor, as_tensor, global_avg_pool, linear, no_grad, precision
from .errors import ConfigError, DimensionError, FormatError
from .graph import NORMALIZATIONS, DEFAULT_ALPHA, PartitionedAdjacency, build_topology
from .registry import PRESETS
from .what import whatable

_log = logging.getLogger(__package__)

NUM_BLOCKS = 10
DOWNSAMPLING_BLOCKS = (5, 8)  # 1-based

FAMILY_KINDS = {
    #         spatial    temporal   fused
    'stgcn': ('regular', 'regular', 'none'),
    'msgcn': ('ms', 'regular', 'none'),
    'mtgcn': ('regular', 'mt', 'none'),
    'mstgcn': ('ms', 'mt', 'none'),
    'strgcn': ('regular', 'regular', 'str'),
}


def preset_blocks(preset, in_channels=3, kernel_size=9):
    """Expands a preset into the 10 BlockSpecs of the network.

    Blocks 1-4 run at base width c * s, blocks 5-7 at twice and 8-10 at four times that width;
    blocks 5 and 8 halve the temporal length. Block 1 is a plain block without residual.

    Examples
    --------
    >>> [spec.out_channels for spec in preset_blocks('stgcn-64c-1s')]
    [64, 64, 64, 64, 128, 128, 128, 256, 256, 256]
    >>> [spec.out_channels for spec in preset_blocks('msgcn-17c-4s')][::3]
    [68, 68, 136, 272]
    """
    spec = PRESETS.resolve(preset)
    spatial, temporal, fused = FAMILY_KINDS[spec.family]
    base = spec.base_width
    blocks = []
    c_in = in_channels
    for index in range(1, NUM_BLOCKS + 1):
        width = base * (1 if index < 5 else 2 if index < 8 else 4)
        stride = 2 if index in DOWNSAMPLING_BLOCKS else 1
        if index == 1:
            blocks.append(BlockSpec(c_in, width, kernel_size=kernel_size, stride=stride, has_residual=False))
        else:
            blocks.append(BlockSpec(c_in, width, spatial_kind=spatial, temporal_kind=temporal, fused=fused,
                                    s=spec.s, kernel_size=kernel_size, stride=stride, has_residual=True))
        c_in = width
    return blocks


@whatable(non_id_keys=('strict',))
class NetworkConfig(object):
    """Everything needed to build (and rebuild, bit for bit) a network."""

    def __init__(self, blocks, topology='ntu25', num_classes=60, in_channels=3, max_persons=2, seed=0,
                 normalization='as-printed', alpha=DEFAULT_ALPHA, mask='additive', strict=True):
        super(NetworkConfig, self).__init__()
        self.topology = topology
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.blocks = list(blocks)
        self.max_persons = max_persons
        self.seed = seed
        self.normalization = normalization
        self.alpha = alpha
        self.mask = mask
        self.strict = strict

    @classmethod
    def from_preset(cls, preset, kernel_size=9, **kwargs):
        in_channels = kwargs.get('in_channels', 3)
        return cls(preset_blocks(preset, in_channels=in_channels, kernel_size=kernel_size), **kwargs)

    def problems(self):
        """All the reasons this configuration cannot be built (empty list if valid)."""
        problems = []
        try:
            build_topology(self.topology)
        except (ConfigError, ValueError) as e:
            problems.append('topology: %s' % e)
        for field in ('num_classes', 'in_channels', 'max_persons'):
            value = getattr(self, field)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                problems.append('%s: must be a positive integer, got %r' % (field, value))
        if self.normalization not in NORMALIZATIONS:
            problems.append('normalization: must be one of %r, got %r' % (NORMALIZATIONS, self.normalization))
        if self.mask not in MASK_KINDS:
            problems.append('mask: must be one of %r, got %r' % (MASK_KINDS, self.mask))
        if not self.alpha > 0:
            problems.append('alpha: must be positive, got %r' % (self.alpha,))
        if not self.blocks:
            problems.append('blocks: at least one block is needed')
            return problems
        if self.strict and len(self.blocks) != NUM_BLOCKS:
            problems.append('blocks: expected %d blocks, got %d' % (NUM_BLOCKS, len(self.blocks)))
        c_in = self.in_channels
        for index, spec in enumerate(self.blocks, start=1):
            where = 'block%d' % index
            problems.extend(spec.problems(where))
            if spec.in_channels != c_in:
                problems.append('%s: expected %r input channels, got %r' % (where, c_in, spec.in_channels))
            c_in = spec.out_channels
            if not self.strict or len(self.blocks) != NUM_BLOCKS:
                continue
            if index == 1 and spec.has_residual:
                problems.append('%s: the first block has no residual connection' % where)
            if index in DOWNSAMPLING_BLOCKS:
                if spec.stride != 2:
                    problems.append('%s: expected stride 2, got %r' % (where, spec.stride))
                if spec.out_channels != 2 * spec.in_channels:
                    problems.append('%s: expected doubled channels, got %r -> %r' %
                                    (where, spec.in_channels, spec.out_channels))
            elif spec.stride != 1:
                problems.append('%s: expected stride 1, got %r' % (where, spec.stride))
        return problems

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self


class Classifier(Layer):
    """The final fully connected layer."""

    def __init__(self, in_features, num_classes, rng):
        super(Classifier, self).__init__()
        self.add_parameter('weight', uniform_init(rng, (num_classes, in_features), in_features))
        self.add_parameter('bias', np.zeros(num_classes))

    def forward(self, x):
        return linear(x, self.parameter('weight'), self.parameter('bias'))


class MstGcn(Layer):
    """Input batch normalization, ST-GC blocks, global average pooling and a linear classifier.

    Input is [N, C, T, V, M]; persons are folded into the batch for the backbone and
    averaged after pooling. Output is [N, num_classes] logits.
    """

    def __init__(self, cfg):
        super(MstGcn, self).__init__()
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.topology = build_topology(cfg.topology)
        self.adjacency = PartitionedAdjacency(self.topology, alpha=cfg.alpha, normalization=cfg.normalization)
        self.add_child('data_bn', BatchNorm(cfg.in_channels * self.topology.num_joints))
        for index, spec in enumerate(cfg.blocks, start=1):
            self.add_child('block%d' % index, StGcBlock(spec, self.adjacency, rng, mask=cfg.mask))
        self.add_child('fc', Classifier(cfg.blocks[-1].out_channels, cfg.num_classes, rng))
        for name, parameter in self.named_parameters():
            parameter.name = name
        _log.info('built %s on %s with %d parameters',
                  type(self).__name__, cfg.topology, self.num_parameters())

    def blocks(self):
        return [self.child('block%d' % (i + 1)) for i in range(len(self.cfg.blocks))]

    @property
    def time_stride(self):
        return int(np.prod([spec.stride for spec in self.cfg.blocks]))

    def check_input(self, shape):
        if len(shape) != 5:
            raise DimensionError('network input must be [N, C, T, V, M], got %r' % (tuple(shape),))
        expected = (self.cfg.in_channels, self.topology.num_joints, self.cfg.max_persons)
        actual = (shape[1], shape[3], shape[4])
        if actual != expected:
            raise DimensionError('network input [N, C, T, V, M]: expected C, V, M = %r, got %r' %
                                 (expected, actual))
        if shape[2] % self.time_stride:
            raise DimensionError('the number of frames (%d) must be divisible by %d' %
                                 (shape[2], self.time_stride))

    def forward(self, x):
        x = as_tensor(x)
        self.check_input(x.shape)
        n, c, t, v, m = x.shape
        # data normalization over the flattened (joint, coordinate) features of each person
        x = x.transpose(0, 4, 3, 1, 2).reshape(n * m, v * c, t)
        x = self.child('data_bn')(x)
        x = x.reshape(n * m, v, c, t).transpose(0, 2, 3, 1)
        for block in self.blocks():
            x = block(x)
        x = global_avg_pool(x)
        x = x.reshape(n, m, x.shape[1]).mean(axis=1)
        return self.child('fc')(x)


def build_network(cfg):
    """Builds a network; raises a ConfigError with every problem of an invalid configuration."""
    return MstGcn(cfg)


# --- Parameter reports

class ParameterReport(object):
    """Trainable parameter counts: total, per top-level module and per group."""

    GROUPS = ('weights', 'masks', 'batch_norm', 'classifier')

    def __init__(self, total, per_module, groups, subset_checks, reported=None):
        super(ParameterReport, self).__init__()
        self.total = total
        self.per_module = per_module
        self.groups = groups
        self.subset_checks = subset_checks
        self.reported = reported

    def subset_ratio_holds(self):
        return all(check['holds'] for check in self.subset_checks)

    def lines(self):
        lines = ['total: %d' % self.total]
        if self.reported:
            lines.append('reported: %d (ratio %.3f)' % (self.reported, self.total / self.reported))
        lines.extend('%s: %d' % item for item in self.per_module.items())
        lines.extend('group %s: %d' % (group, self.groups[group]) for group in self.GROUPS)
        for check in self.subset_checks:
            lines.append('%s: sub-convolution %d x s^2 (s=%d) = %d == full %d: %s' %
                         (check['module'], check['sub'], check['s'], check['sub'] * check['s'] ** 2,
                          check['full'], 'ok' if check['holds'] else 'FAILED'))
        return lines


def _group(name):
    leaf = name.rsplit('.', 1)[-1]
    if name.startswith('fc.'):
        return 'classifier'
    if leaf.startswith('m_'):
        return 'masks'
    if leaf in ('scale', 'shift'):
        return 'batch_norm'
    return 'weights'


def _subset_checks(net):
    """For every multi-scale unit, compares one fragment's weights with the single scale equivalent."""
    checks = []
    for block_name, block in net._children.items():
        for unit_name, unit in getattr(block, '_children', {}).items():
            if not isinstance(unit, (MsGc, MtGc, StrGc)) or unit.s == 1:
                continue
            fragment = unit.fragments()[0]
            width = unit.out_channels
            if isinstance(unit, MsGc):
                sub = sum(w.size for w in fragment.weights())
                full = 3 * width * width
            elif isinstance(unit, MtGc):
                sub = fragment.parameter('weight').size
                full = width * width * fragment.kernel_size
            else:
                sgc, tgc = fragment.child('sgc'), fragment.child('tgc')
                sub = sum(w.size for w in sgc.weights()) + tgc.parameter('weight').size
                full = 3 * width * width + width * width * tgc.kernel_size
            checks.append({'module': '%s.%s' % (block_name, unit_name), 's': unit.s,
                           'sub': sub, 'full': full, 'holds': sub * unit.s ** 2 == full})
    return checks


def count_parameters(net, preset=None):
    """Counts trainable scalars (running moments excluded).

    Examples
    --------
    >>> sgc = SpatialGraphConv(64, 64, PartitionedAdjacency(build_topology('chain:3')), np.random.default_rng(0))
    >>> sum(w.size for w in sgc.weights())
    12288
    """
    sizes = [(name, parameter.size) for name, parameter in net.named_parameters()]

    def total_size(items):
        return sum(size for _, size in items)

    per_module = OrderedDict(valmap(total_size, groupby(lambda item: item[0].split('.', 1)[0], sizes)))
    by_group = groupby(lambda item: _group(item[0]), sizes)
    groups = OrderedDict((group, total_size(by_group.get(group, ()))) for group in ParameterReport.GROUPS)
    reported = PRESETS.reported_params(preset) if preset else None
    return ParameterReport(total_size(sizes), per_module, groups, _subset_checks(net), reported=reported)


# --- Receptive field probes

def _fragment_outputs(unit, x):
    if isinstance(unit, (MsGc, MtGc, StrGc)):
        return unit.fragment_outputs(x)
    return [unit(x)]


def _num_joints(unit):
    for layer in _walk(unit):
        if isinstance(layer, SpatialGraphConv):
            return len(layer.adjacency[0].data)
    return 1


def _walk(layer):
    yield layer
    for child in layer.children():
        for sub in _walk(child):
            yield sub


def _neutralized(unit):
    """A 64-bit copy of unit with neutral masks, zero biases and non-negative weights."""
    probe = copy.deepcopy(unit)
    for layer in _walk(probe):
        for leaf, parameter in layer._parameters.items():
            if leaf.startswith('m_'):
                value = np.zeros_like(parameter.data) if layer.mask == 'additive' else np.ones_like(parameter.data)
            elif leaf in ('bias', 'shift'):
                value = np.zeros_like(parameter.data)
            else:
                value = np.abs(parameter.data)
            parameter.data = value.astype(np.float64)
        if isinstance(layer, SpatialGraphConv):
            layer.adjacency = [Tensor(a.data.astype(np.float64)) for a in layer.adjacency]
    return probe.eval()


def _in_channels(unit):
    if isinstance(unit, (SpatialGraphConv, TemporalGraphConv, MsGc, MtGc, StrGc)):
        return unit.in_channels
    raise ConfigError('cannot probe a %s' % type(unit).__name__)


def temporal_radius(unit):
    """Frames on each side of an impulse that the last fragment of a unit reaches (0 for spatial units).

    Examples
    --------
    >>> temporal_radius(MtGc(8, 8, 4, np.random.default_rng(0), kernel_size=9))
    16
    >>> temporal_radius(TemporalGraphConv(2, 2, np.random.default_rng(0), kernel_size=9, stride=2))
    4
    """
    if isinstance(unit, TemporalGraphConv):
        return unit.kernel_size // 2
    if isinstance(unit, MtGc):
        half = unit.fragments()[0].kernel_size // 2
    elif isinstance(unit, StrGc):
        half = unit.fragments()[0].child('tgc').kernel_size // 2
    else:
        return 0
    # later fragments run at the output rate
    return half * (1 + (unit.s - 1) * unit.stride)


def probe_unit(unit, axis, source, num_frames=None):
    """Supports (sorted positions with a nonzero response) of every fragment output to a unit impulse.

    Parameters
    ----------
    unit : a graph convolution unit (SGC, TGC, MsGc, MtGc or StrGc)

    axis : "spatial" or "temporal"
      Spatial probes put the impulse on joint `source`; temporal probes on frame `source`.

    num_frames : int or None
      Length of the probe sequence. Temporal probes default to the shortest sequence holding
      the impulse and the unit's temporal radius on both sides of it (2 * source + 1 frames when
      source is at least that radius); spatial probes default to a single frame.
      A warning is issued when the supports may be clipped by the sequence ends.
    """
    if axis not in ('spatial', 'temporal'):
        raise ConfigError('probe axis must be "spatial" or "temporal", got %r' % (axis,))
    num_joints = _num_joints(unit)
    radius = temporal_radius(unit) if axis == 'temporal' else 0
    if num_frames is None:
        num_frames = source + max(source, radius) + 1 if axis == 'temporal' else 1
    limit = num_joints if axis == 'spatial' else num_frames
    if not 0 <= source < limit:
        raise ConfigError('probe source %r outside [0, %d)' % (source, limit))
    if source < radius or source + radius >= num_frames:
        warnings.warn('temporal supports around frame %d are clipped: the unit reaches %d frames on each side '
                      'of %d' % (source, radius, num_frames))
    with precision('float64'):
        probe = _neutralized(unit)
        x = np.zeros((1, _in_channels(unit), num_frames, num_joints))
        if axis == 'spatial':
            x[..., source] = 1
        else:
            x[:, :, source] = 1
        with no_grad():
            outputs = _fragment_outputs(probe, Tensor(x))
    reduce_axes = (0, 1, 2) if axis == 'spatial' else (0, 1, 3)
    return [np.flatnonzero(np.abs(y.data).sum(axis=reduce_axes) > 0).tolist() for y in outputs]


def probe_receptive_field(target, axis, source, num_frames=None):
    """Probes a unit, a block or a whole network.

    A network (or block) reports, per block, the fragment supports of the unit that
    operates on the requested axis (a single fragment for single scale units).
    """
    if isinstance(target, MstGcn):
        return OrderedDict(('block%d' % (i + 1), probe_unit(block.multi_scale_unit(axis), axis, source, num_frames))
                           for i, block in enumerate(target.blocks()))
    if isinstance(target, StGcBlock):
        return probe_unit(target.multi_scale_unit(axis), axis, source, num_frames)
    return probe_unit(target, axis, source, num_frames)


# --- Checkpoints

CHECKPOINT_MAGIC = b'MGCK'
CHECKPOINT_VERSION = 1


def state_dict(net):
    """Trainable parameters followed by buffers, as an ordered {name: array}."""
    state = OrderedDict((name, parameter.data) for name, parameter in net.named_parameters())
    state.update(net.named_buffers())
    return state


def encode_checkpoint(state):
    chunks = [CHECKPOINT_MAGIC, struct.pack('<II', CHECKPOINT_VERSION, len(state))]
    for name, value in state.items():
        value = np.asarray(value)
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<I%dI' % value.ndim, value.ndim, *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype='<f4').tobytes())
    return b''.join(chunks)


def decode_checkpoint(data):
    """Parses checkpoint bytes into an ordered {name: float32 array}."""
    offset = [0]

    def take(size, what):
        start = offset[0]
        if start + size > len(data):
            raise FormatError('truncated checkpoint while reading %s' % what, start)
        offset[0] = start + size
        return data[start:start + size]

    if take(4, 'magic') != CHECKPOINT_MAGIC:
        raise FormatError('not a checkpoint (bad magic)', 0)
    version, count = struct.unpack('<II', take(8, 'header'))
    if version != CHECKPOINT_VERSION:
        raise FormatError('unsupported checkpoint version %d' % version, 4)
    state = OrderedDict()
    for _ in range(count):
        name_offset = offset[0]
        (length,) = struct.unpack('<I', take(4, 'name length'))
        try:
            name = take(length, 'name').decode('utf-8')
        except UnicodeDecodeError:
            raise FormatError('entry name is not UTF-8', name_offset + 4)
        (rank,) = struct.unpack('<I', take(4, 'rank'))
        shape = struct.unpack('<%dI' % rank, take(4 * rank, 'extents'))
        size = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(take(4 * size, 'values of %s' % name), dtype='<f4')
        state[name] = values.reshape(shape).copy()
    if offset[0] != len(data):
        raise FormatError('trailing bytes after %d entries' % count, offset[0])
    return state


def save_checkpoint(net, path):
    data = encode_checkpoint(state_dict(net))
    with open(path, 'wb') as writer:
        writer.write(data)
    _log.info('checkpoint with %d entries written to %s', len(state_dict(net)), path)
    return path


def read_checkpoint(path):
    with open(path, 'rb') as reader:
        return decode_checkpoint(reader.read())


def load_state(net, state):
    """Copies a {name: array} state into a network; names and shapes must match exactly."""
    expected = state_dict(net)
    missing = sorted(set(expected) - set(state))
    unexpected = sorted(set(state) - set(expected))
    if missing or unexpected:
        raise ConfigError(['checkpoint misses %s' % name for name in missing] +
                          ['checkpoint has unknown entry %s' % name for name in unexpected])
    parameters = dict(net.named_parameters())
    for name, value in state.items():
        if name in parameters:
            parameter = parameters[name]
            if parameter.shape != value.shape:
                raise DimensionError.mismatch(name, parameter.shape, value.shape)
            parameter.data = np.asarray(value, dtype=parameter.data.dtype).copy()
        else:
            net.set_buffer(name, value)
    return net


def load_checkpoint(net, path):
    return load_state(net, read_checkpoint(path))
