# coding=utf-8
"""Skeleton datasets: the SKL1 file format, preprocessing, the four streams and synthetic data.

Sequences are [C, T, V, M] float32 arrays (coordinates, frames, joints, person slots).
Absent persons and frames are all-zero.

Preprocessing order: select persons, pad by replay, center, derive the stream.
Windows are cropped when batches are assembled.
"""

# Licence: BSD 3 clause

import struct
import warnings

import numpy as np
from tqdm import tqdm

from .errors import ConfigError, DimensionError, FormatError, LabelError
from .graph import build_topology
from .misc import derive_seed
from .parsers import parse_topology
from .what import whatable

STREAMS = ('joint', 'bone', 'joint_motion', 'bone_motion')

SKL_MAGIC = b'SKL1'
SKL_VERSION = 1
_HEADER = struct.Struct('<4sIIII')
_SAMPLE_HEADER = struct.Struct('<6I')

TOPOLOGY_FAMILY_CODES = {'ntu25': 1, 'kinetics18': 2, 'chain': 3, 'star': 4}


class SkeletonSequence(object):
    """One sample: values [C, T, V, M], its class label and the number of valid frames."""

    __slots__ = ('values', 'label', 'valid_frames')

    def __init__(self, values, label, valid_frames=None):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim != 4:
            raise DimensionError('skeleton sequences are [C, T, V, M], got shape %r' % (values.shape,))
        valid_frames = values.shape[1] if valid_frames is None else int(valid_frames)
        if not 1 <= valid_frames <= values.shape[1]:
            raise ValueError('valid_frames must be in [1, %d], got %d' % (values.shape[1], valid_frames))
        self.values = values
        self.label = int(label)
        self.valid_frames = valid_frames

    @property
    def shape(self):
        return self.values.shape

    def replace(self, values=None, valid_frames=None):
        return SkeletonSequence(self.values if values is None else values, self.label,
                                self.valid_frames if valid_frames is None else valid_frames)

    def __eq__(self, other):
        return (isinstance(other, SkeletonSequence) and self.label == other.label and
                self.valid_frames == other.valid_frames and
                self.values.shape == other.values.shape and
                self.values.tobytes() == other.values.tobytes())

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return 'SkeletonSequence(shape=%r, label=%d, valid_frames=%d)' % (self.shape, self.label, self.valid_frames)


class DatasetManifest(object):
    """What an SKL1 header (and a scan of the sample headers) tells about a dataset."""

    def __init__(self, num_samples, num_classes, topology=None, offsets=()):
        super(DatasetManifest, self).__init__()
        self.num_samples = num_samples
        self.num_classes = num_classes
        self.topology = topology
        self.offsets = list(offsets)

    def __repr__(self):
        return 'DatasetManifest(num_samples=%d, num_classes=%d, topology=%r)' % (
            self.num_samples, self.num_classes, self.topology)


# --- SKL1

def encode_topology(kind):
    """Low byte: family code (0 when unspecified); remaining bits: joint count.

    Examples
    --------
    >>> encode_topology('chain:9')
    2307
    >>> decode_topology(2307)
    'chain:9'
    >>> encode_topology(None)
    0
    """
    if kind is None:
        return 0
    family, num_joints = parse_topology(kind)
    return TOPOLOGY_FAMILY_CODES[family] | (num_joints << 8)


def decode_topology(code, offset=None):
    family_code, num_joints = code & 0xff, code >> 8
    if family_code == 0:
        return None
    for family, known in TOPOLOGY_FAMILY_CODES.items():
        if known == family_code:
            return family if family in ('ntu25', 'kinetics18') else '%s:%d' % (family, num_joints)
    raise FormatError('unknown topology code %d' % code, offset)


def encode_dataset(sequences, num_classes, topology=None):
    sequences = list(sequences)
    chunks = [_HEADER.pack(SKL_MAGIC, SKL_VERSION, len(sequences), num_classes, encode_topology(topology))]
    for index, seq in enumerate(sequences):
        if not 0 <= seq.label < num_classes:
            raise LabelError(seq.label, num_classes, index)
        c, t, v, m = seq.shape
        chunks.append(_SAMPLE_HEADER.pack(seq.label, c, t, v, m, seq.valid_frames))
        chunks.append(np.ascontiguousarray(seq.values, dtype='<f4').tobytes())
    return b''.join(chunks)


def scan_dataset(data):
    """Validates SKL1 bytes and returns the manifest (with per-sample byte offsets)."""
    if len(data) < _HEADER.size:
        raise FormatError('truncated SKL1 header', len(data))
    magic, version, num_samples, num_classes, code = _HEADER.unpack_from(data, 0)
    if magic != SKL_MAGIC:
        raise FormatError('bad magic %r, expected %r' % (magic, SKL_MAGIC), 0)
    if version != SKL_VERSION:
        raise FormatError('unsupported SKL1 version %d' % version, 4)
    topology = decode_topology(code, offset=16)
    offsets = []
    offset = _HEADER.size
    for index in range(num_samples):
        if offset + _SAMPLE_HEADER.size > len(data):
            raise FormatError('truncated header of sample %d' % index, offset)
        label, c, t, v, m, valid = _SAMPLE_HEADER.unpack_from(data, offset)
        if label >= num_classes:
            raise LabelError(label, num_classes, index)
        if not 1 <= valid <= t:
            raise FormatError('sample %d has valid_frames=%d outside [1, %d]' % (index, valid, t), offset + 20)
        end = offset + _SAMPLE_HEADER.size + 4 * c * t * v * m
        if end > len(data):
            raise FormatError('truncated values of sample %d' % index, len(data))
        offsets.append(offset)
        offset = end
    if offset != len(data):
        raise FormatError('trailing bytes after %d samples' % num_samples, offset)
    return DatasetManifest(num_samples, num_classes, topology, offsets)


def _decode_sample(data, offset):
    label, c, t, v, m, valid = _SAMPLE_HEADER.unpack_from(data, offset)
    values = np.frombuffer(data, dtype='<f4', count=c * t * v * m, offset=offset + _SAMPLE_HEADER.size)
    return SkeletonSequence(values.reshape(c, t, v, m).astype(np.float32), label, valid)


def load_dataset(path):
    """Returns (manifest, iterator over SkeletonSequence) for an SKL1 file."""
    with open(path, 'rb') as reader:
        data = reader.read()
    manifest = scan_dataset(data)
    return manifest, (_decode_sample(data, offset) for offset in manifest.offsets)


def read_dataset(path):
    """Like load_dataset, but with the samples in a list."""
    manifest, samples = load_dataset(path)
    return manifest, list(samples)


def save_dataset(path, sequences, num_classes, topology=None):
    with open(path, 'wb') as writer:
        writer.write(encode_dataset(sequences, num_classes, topology))
    return path


# --- Preprocessing

def pad_replay(seq, target_frames=300):
    """Pads a sequence to target_frames by replaying its valid prefix cyclically.

    Examples
    --------
    >>> seq = SkeletonSequence(np.arange(4, dtype=np.float32).reshape(1, 4, 1, 1), 0, valid_frames=3)
    >>> pad_replay(seq, 7).values.ravel()
    array([0., 1., 2., 0., 1., 2., 0.], dtype=float32)
    """
    valid = seq.values[:, :seq.valid_frames]
    repeats = -(-target_frames // seq.valid_frames)
    values = np.concatenate([valid] * repeats, axis=1)[:, :target_frames]
    return seq.replace(values=values, valid_frames=target_frames)


def sample_rng(seed, index):
    """The generator of the random choices (crop starts) made for one sample under a seed.

    Examples
    --------
    >>> int(sample_rng(3, 7).integers(100)) == int(sample_rng(3, 7).integers(100))
    True
    """
    return np.random.default_rng((int(seed), int(index)))


def crop_window(seq, window=150, mode='random', rng=None):
    """A contiguous window of frames: random start (training) or centered (evaluation).

    Sequences shorter than the window are padded by replay first. Training batches pass
    `sample_rng(epoch seed, sample index)` as rng.
    """
    if mode not in ('random', 'center'):
        raise ConfigError('crop mode must be "random" or "center", got %r' % (mode,))
    if seq.valid_frames < window:
        seq = pad_replay(seq, window)
    slack = seq.valid_frames - window
    if mode == 'center':
        start = slack // 2
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        start = int(rng.integers(0, slack + 1))
    return seq.replace(values=seq.values[:, start:start + window], valid_frames=window)


def person_energy(raw):
    """Per person slot: sum over coordinates and joints of the temporal standard deviation."""
    return np.asarray(raw, dtype=np.float64).std(axis=1).sum(axis=(0, 1))


def select_top_persons(raw, keep=2):
    """Keeps the `keep` most energetic person slots (descending), zero padding if fewer exist.

    Examples
    --------
    >>> raw = np.zeros((1, 2, 1, 3))
    >>> raw[0, :, 0, 0] = [0, 3]
    >>> raw[0, :, 0, 1] = [0, 5]
    >>> select_top_persons(raw, 2)[0, 1, 0]
    array([5., 3.])
    """
    raw = np.asarray(raw)
    order = np.argsort(-person_energy(raw), kind='stable')[:keep]
    out = np.zeros(raw.shape[:3] + (keep,), dtype=raw.dtype)
    out[..., :len(order)] = raw[..., order]
    return out


# two persons is the default
select_top2_persons = select_top_persons


def normalize_center(values, center):
    """Subtracts the center joint of the first person at the first frame from every present joint."""
    values = np.asarray(values)
    origin = values[:, 0, center, 0]
    present = (values != 0).any(axis=(0, 2))  # [T, M]
    return values - origin[:, None, None, None] * present[None, :, None, :]


def derive_stream(x, kind, topo):
    """Derives one of the four streams from joint coordinates.

    Works on sequences and on arrays laid out [..., T, V, M].

    bone:   joint[child] - joint[parent], the parent being the neighbour nearer the center
            (the center joint gets a zero bone)
    motion: x[t + 1] - x[t], zero at the last frame
    """
    if kind not in STREAMS:
        raise ConfigError('unknown stream "%s", use one of %r' % (kind, STREAMS))
    if isinstance(x, SkeletonSequence):
        return x.replace(values=derive_stream(x.values, kind, topo))
    x = np.asarray(x)
    if kind in ('bone', 'bone_motion'):
        if x.shape[-2] != topo.num_joints:
            raise DimensionError.mismatch('derive_stream', x.shape, (topo.num_joints,))
        x = x - x[..., topo.parents(), :]
    if kind in ('joint_motion', 'bone_motion'):
        motion = np.zeros_like(x)
        motion[..., :-1, :, :] = x[..., 1:, :, :] - x[..., :-1, :, :]
        x = motion
    return x


@whatable(non_id_keys=('progress',))
class DataConfig(object):
    """How raw sequences become network inputs."""

    def __init__(self, stream='joint', frames=300, window=None, center=True, persons=2, progress=False):
        super(DataConfig, self).__init__()
        self.stream = stream
        self.frames = frames
        self.window = window
        self.center = center
        self.persons = persons
        self.progress = progress

    def problems(self, where='data'):
        problems = []
        if self.stream not in STREAMS:
            problems.append('%s.stream: must be one of %r, got %r' % (where, STREAMS, self.stream))
        for field in ('frames', 'persons'):
            value = getattr(self, field)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                problems.append('%s.%s: must be a positive integer, got %r' % (where, field, value))
        if self.window is not None:
            if not isinstance(self.window, int) or isinstance(self.window, bool) or self.window < 1:
                problems.append('%s.window: must be null or a positive integer, got %r' % (where, self.window))
            elif isinstance(self.frames, int) and self.window > self.frames:
                problems.append('%s.window: %d is longer than frames (%r)' % (where, self.window, self.frames))
        return problems

    @property
    def input_frames(self):
        return self.frames if self.window is None else self.window


def preprocess(seq, cfg, topo):
    """Person selection, replay padding, centering and stream derivation of one sequence."""
    values = select_top_persons(seq.values, keep=cfg.persons)
    seq = pad_replay(SkeletonSequence(values, seq.label, seq.valid_frames), cfg.frames)
    values = seq.values
    if cfg.center:
        values = normalize_center(values, topo.center)
    return seq.replace(values=derive_stream(values, cfg.stream, topo))


class SkeletonDataset(object):
    """Preprocessed samples stacked into x [N, C, T, V, M] and labels [N]."""

    def __init__(self, x, labels, num_classes):
        super(SkeletonDataset, self).__init__()
        self.x = np.asarray(x, dtype=np.float32)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.num_classes = num_classes
        if len(self.x) != len(self.labels):
            raise DimensionError.mismatch('SkeletonDataset', self.x.shape, self.labels.shape)
        bad = np.flatnonzero((self.labels < 0) | (self.labels >= num_classes))
        if len(bad):
            raise LabelError(int(self.labels[bad[0]]), num_classes, int(bad[0]))

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_sequences(cls, sequences, num_classes, topo, cfg=None):
        cfg = DataConfig() if cfg is None else cfg
        sequences = [preprocess(seq, cfg, topo)
                     for seq in tqdm(sequences, desc='preprocessing', disable=not cfg.progress)]
        if not sequences:
            raise ConfigError('cannot build a dataset without samples')
        labels = [seq.label for seq in sequences]
        missing = sorted(set(range(num_classes)) - set(labels))
        if missing:
            warnings.warn('no samples for classes %r' % missing)
        return cls(np.stack([seq.values for seq in sequences]), labels, num_classes)

    @classmethod
    def from_file(cls, path, cfg=None, topology=None):
        """Reads and preprocesses an SKL1 file; the topology defaults to the one recorded in the file."""
        manifest, samples = load_dataset(path)
        topology = topology or manifest.topology
        if topology is None:
            raise ConfigError('%s does not record its topology and none was given' % path)
        if manifest.topology is not None and manifest.topology != topology:
            raise ConfigError('%s holds %s skeletons, not %s' % (path, manifest.topology, topology))
        return cls.from_sequences(samples, manifest.num_classes, build_topology(topology), cfg)

    def batch(self, indices, window=None, mode='center', seed=0):
        """Stacks the samples at indices, each cropped by `crop_window` when a window is given.

        Random crops draw from one generator per sample, seeded by (seed, sample index), so a
        sample gets the same window whatever batch it lands in.
        """
        indices = np.asarray(indices, dtype=np.int64)
        if window is None:
            return self.x[indices], self.labels[indices]
        crops = [crop_window(SkeletonSequence(self.x[index], self.labels[index]), window, mode=mode,
                             rng=sample_rng(seed, index)).values
                 for index in indices]
        return np.stack(crops), self.labels[indices]


# --- Synthetic data

MAX_SYNTHETIC_CLASSES = 8


def generate_synthetic(num_classes, samples_per_class, topo, num_frames, seed=0, noise=0.05,
                       persons=1, in_channels=3, amplitude=0.5, pose_seed=0):
    """Seeded synthetic skeletons whose classes are separable by construction.

    Class k oscillates only the joints of the k-th of num_classes contiguous joint groups, with
    frequency 1 + k cycles per sequence and a class specific phase; each coordinate adds its own
    phase. The other joints rest at a fixed pose drawn from `pose_seed`, so training and
    validation sets generated with different seeds describe the same task. Gaussian noise of
    deviation `noise` is added everywhere on person 0; the remaining person slots are empty.

    Returns a list of SkeletonSequence, sample i having label i % num_classes.
    """
    if not 1 <= num_classes <= min(MAX_SYNTHETIC_CLASSES, topo.num_joints):
        raise ConfigError('synthetic data supports 1 to %d classes on %s, got %d' %
                          (min(MAX_SYNTHETIC_CLASSES, topo.num_joints), topo.kind, num_classes))
    if samples_per_class < 1 or num_frames < 1 or persons < 1:
        raise ConfigError('samples_per_class, num_frames and persons must be positive')
    groups = np.array_split(np.arange(topo.num_joints), num_classes)
    rest_pose = np.random.default_rng(pose_seed).uniform(-1, 1, size=(in_channels, topo.num_joints))
    t = np.arange(num_frames) / num_frames
    coordinate_phase = np.arange(in_channels) * np.pi / 3
    sequences = []
    for i in range(num_classes * samples_per_class):
        label = i % num_classes
        rng = np.random.default_rng(derive_seed(seed, i))
        scale = amplitude * (1 + 0.1 * rng.uniform(-1, 1))
        values = np.zeros((in_channels, num_frames, topo.num_joints, persons))
        values[:, :, :, 0] = rest_pose[:, None, :]
        phase = 2 * np.pi * (1 + label) * t[None, :] + np.pi * label / num_classes + coordinate_phase[:, None]
        values[:, :, groups[label], 0] += scale * np.sin(phase)[:, :, None]
        if noise > 0:
            values[:, :, :, 0] += rng.normal(0, noise, size=(in_channels, num_frames, topo.num_joints))
        sequences.append(SkeletonSequence(values, label, num_frames))
    return sequences
