# coding=utf-8

# Licence: BSD 3 clause

import numpy as np

from ..data import (DataConfig, SkeletonDataset, SkeletonSequence, crop_window, decode_topology, derive_stream,
                    encode_dataset, encode_topology, generate_synthetic, load_dataset, normalize_center,
                    pad_replay, person_energy, preprocess, read_dataset, sample_rng, save_dataset, scan_dataset,
                    select_top2_persons, select_top_persons)
from ..errors import ConfigError, DimensionError, FormatError, LabelError
from ..graph import build_topology
from .fixtures import *


def random_sequences(rng, count, shape=(3, 10, 5, 2), num_classes=3):
    return [SkeletonSequence(rng.normal(size=shape), label=i % num_classes, valid_frames=shape[1] - i % 4)
            for i in range(count)]


# --- SKL1

def test_dataset_file_round_trip(rng, tmp_path):
    sequences = random_sequences(rng, 7)
    path = save_dataset(str(tmp_path / 'train.skl'), sequences, num_classes=3, topology='chain:5')
    manifest, samples = load_dataset(path)
    assert (manifest.num_samples, manifest.num_classes, manifest.topology) == (7, 3, 'chain:5')
    assert list(samples) == sequences
    with open(path, 'rb') as reader:
        assert reader.read() == encode_dataset(sequences, 3, 'chain:5')
    _, listed = read_dataset(path)
    assert [seq.valid_frames for seq in listed] == [10, 9, 8, 7, 10, 9, 8]


@pytest.mark.parametrize('count', [0, 100])
def test_dataset_round_trip_sizes(count, rng, tmp_path):
    sequences = random_sequences(rng, count)
    path = save_dataset(str(tmp_path / 'sized.skl'), sequences, num_classes=3, topology='chain:5')
    manifest, samples = load_dataset(path)
    assert (manifest.num_samples, len(manifest.offsets)) == (count, count)
    assert list(samples) == sequences
    with open(path, 'rb') as reader:
        assert len(reader.read()) == 20 + count * (24 + 4 * 3 * 10 * 5 * 2)


def test_dataset_layout(rng):
    seq = SkeletonSequence(np.arange(6).reshape(1, 2, 3, 1), label=1)
    data = encode_dataset([seq], num_classes=2)
    assert data[:4] == b'SKL1'
    assert len(data) == 20 + 24 + 4 * 6
    assert np.array_equal(np.frombuffer(data[44:], dtype='<f4'), np.arange(6))
    assert scan_dataset(data).topology is None


@pytest.mark.parametrize('kind', ['ntu25', 'kinetics18', 'chain:9', 'star:6', None])
def test_topology_codes(kind):
    assert decode_topology(encode_topology(kind)) == kind


def test_dataset_format_errors(rng):
    data = encode_dataset(random_sequences(rng, 2), num_classes=3)
    with pytest.raises(FormatError) as excinfo:
        scan_dataset(b'SKL2' + data[4:])
    assert excinfo.value.offset == 0
    with pytest.raises(FormatError) as excinfo:
        scan_dataset(data[:12])
    assert 'truncated SKL1 header' in str(excinfo.value)
    with pytest.raises(FormatError) as excinfo:
        scan_dataset(data[:30])
    assert 'truncated header of sample 0' in str(excinfo.value)
    with pytest.raises(FormatError) as excinfo:
        scan_dataset(data[:-4])
    assert 'truncated values of sample 1' in str(excinfo.value)
    with pytest.raises(FormatError) as excinfo:
        scan_dataset(data + b'\x00\x00')
    assert excinfo.value.offset == len(data)
    with pytest.raises(FormatError):
        scan_dataset(data[:16] + b'\x09\x00\x00\x00' + data[20:])


def test_dataset_label_errors(rng):
    sequences = random_sequences(rng, 3)
    with pytest.raises(LabelError) as excinfo:
        encode_dataset(sequences, num_classes=2)
    assert excinfo.value.sample == 2
    data = bytearray(encode_dataset(sequences, num_classes=3))
    data[12] = 2  # num_classes in the header
    with pytest.raises(LabelError):
        scan_dataset(bytes(data))


def test_sequence_checks():
    with pytest.raises(DimensionError):
        SkeletonSequence(np.zeros((3, 4, 5)), 0)
    with pytest.raises(ValueError):
        SkeletonSequence(np.zeros((3, 4, 5, 1)), 0, valid_frames=5)
    assert SkeletonSequence(np.zeros((3, 4, 5, 1)), 0).values.dtype == np.float32


# --- Preprocessing

def test_pad_replay():
    values = np.arange(100, dtype=np.float32).reshape(1, 100, 1, 1)
    seq = SkeletonSequence(values, 0, valid_frames=80)
    padded = pad_replay(seq, 300)
    frames = padded.values.ravel()
    assert padded.valid_frames == 300
    assert np.array_equal(frames, np.concatenate([np.arange(80)] * 3 + [np.arange(60)]))
    # already long enough: the valid prefix is cut to length
    assert np.array_equal(pad_replay(seq, 50).values.ravel(), np.arange(50))


def test_pad_replay_is_idempotent_at_the_target_length(rng):
    seq = SkeletonSequence(rng.normal(size=(3, 20, 5, 2)), 1, valid_frames=7)
    once = pad_replay(seq, 30)
    assert pad_replay(once, 30) == once
    full = SkeletonSequence(rng.normal(size=(3, 30, 5, 1)), 2)
    assert pad_replay(full, 30) == full


def test_crop_window(rng):
    seq = SkeletonSequence(np.arange(10, dtype=np.float32).reshape(1, 10, 1, 1), 0)
    assert crop_window(seq, 4, mode='center').values.ravel().tolist() == [3, 4, 5, 6]
    cropped = crop_window(seq, 4, rng=np.random.default_rng(5))
    start = int(cropped.values.ravel()[0])
    assert cropped.values.ravel().tolist() == list(range(start, start + 4))
    assert crop_window(seq, 4, rng=np.random.default_rng(5)) == cropped
    assert crop_window(seq, 13, mode='center').values.ravel().tolist() == list(range(10)) + [0, 1, 2]
    with pytest.raises(ConfigError):
        crop_window(seq, 4, mode='left')


def test_person_selection():
    raw = np.zeros((2, 5, 3, 3))
    raw[:, :, :, 1] = np.linspace(0, 1, 5)[None, :, None]  # slow
    raw[:, :, :, 2] = np.linspace(0, 4, 5)[None, :, None]  # fast
    energy = person_energy(raw)
    assert np.allclose(energy, [0, 2 * 3 * np.std(np.linspace(0, 1, 5)), 2 * 3 * np.std(np.linspace(0, 4, 5))])
    top = select_top_persons(raw, keep=2)
    assert np.array_equal(top[..., 0], raw[..., 2]) and np.array_equal(top[..., 1], raw[..., 1])
    padded = select_top_persons(raw[..., 1:2], keep=2)
    assert padded.shape == (2, 5, 3, 2) and not padded[..., 1].any()


def test_person_energy_follows_the_slots(rng):
    raw = rng.normal(size=(3, 8, 5, 4))
    for order in (rng.permutation(4), [3, 2, 1, 0]):
        assert np.allclose(person_energy(raw[..., order]), person_energy(raw)[order], rtol=0, atol=1e-12)


def test_preprocessing_keeps_the_two_most_energetic_persons(rng):
    raw = np.zeros((3, 6, 5, 3), dtype=np.float32)
    raw[..., 1:] = rng.normal(size=(3, 6, 5, 2))
    raw[..., 2] *= 3
    seq = SkeletonSequence(raw, 1)
    assert np.array_equal(select_top2_persons(raw), select_top_persons(raw, keep=2))
    out = preprocess(seq, DataConfig(frames=6, center=False, persons=2), build_topology('chain:5'))
    assert np.array_equal(out.values, select_top2_persons(raw))
    assert np.array_equal(out.values[..., 0], raw[..., 2]) and np.array_equal(out.values[..., 1], raw[..., 1])


def test_normalize_center():
    values = np.zeros((3, 4, 5, 2))
    values[:, :, :, 0] = 1.0
    values[:, 1:3, :, 1] = 3.0
    values[:, 0, 2, 0] = [2.0, -1.0, 0.5]
    centered = normalize_center(values, center=2)
    assert not centered[:, 0, 2, 0].any()
    assert np.allclose(centered[:, 1, 0, 0], [-1.0, 2.0, 0.5])
    assert np.allclose(centered[:, 1, 0, 1], [1.0, 4.0, 2.5])
    # absent persons stay absent
    assert not centered[:, 0, :, 1].any() and not centered[:, 3, :, 1].any()


@pytest.mark.parametrize('kind', ['ntu25', 'kinetics18', 'chain:7', 'star:4'])
def test_streams(kind, rng):
    topo = build_topology(kind)
    x = rng.normal(size=(3, 6, topo.num_joints, 2))
    parents = topo.parents()
    bone = np.zeros_like(x)
    for v in range(topo.num_joints):
        bone[:, :, v] = x[:, :, v] - x[:, :, parents[v]]
    assert np.array_equal(derive_stream(x, 'joint', topo), x)
    assert np.allclose(derive_stream(x, 'bone', topo), bone)
    assert not derive_stream(x, 'bone', topo)[:, :, topo.center].any()
    motion = np.zeros_like(x)
    for t in range(5):
        motion[:, t] = x[:, t + 1] - x[:, t]
    assert np.allclose(derive_stream(x, 'joint_motion', topo), motion)
    bone_motion = np.zeros_like(x)
    bone_motion[:, :5] = bone[:, 1:] - bone[:, :5]
    assert np.allclose(derive_stream(x, 'bone_motion', topo), bone_motion)
    # batches work too
    assert np.allclose(derive_stream(x[None], 'bone_motion', topo)[0], bone_motion)


def test_preprocessing_oracles_on_random_sequences(rng):
    topo = build_topology('ntu25')
    parents = topo.parents()
    for _ in range(100):
        frames = int(rng.integers(1, 40))
        valid = int(rng.integers(1, frames + 1))
        seq = SkeletonSequence(rng.normal(size=(3, frames, 25, 2)), 0, valid_frames=valid)
        target = int(rng.integers(1, 60))
        padded = pad_replay(seq, target).values
        for t in range(target):
            assert np.array_equal(padded[:, t], seq.values[:, t % valid])
        window = int(rng.integers(1, 30))
        cropped = crop_window(seq, window, mode='center').values
        source = pad_replay(seq, max(valid, window)).values
        start = (max(valid, window) - window) // 2
        assert np.array_equal(cropped, source[:, start:start + window])
        x = seq.values
        bones = np.stack([x[:, :, v] - x[:, :, parents[v]] for v in range(25)], axis=2)
        assert np.array_equal(derive_stream(x, 'bone', topo), bones)
        motion = derive_stream(x, 'joint_motion', topo)
        assert np.array_equal(motion[:, :-1], x[:, 1:] - x[:, :-1]) and not motion[:, -1].any()


@pytest.mark.parametrize('kind', ['ntu25', 'kinetics18', 'star:5'])
def test_bones_telescope_back_to_joints(kind, rng):
    topo = build_topology(kind)
    parents = topo.parents()
    x = rng.normal(size=(3, 4, topo.num_joints, 2))
    bones = derive_stream(x, 'bone', topo)
    for v in range(topo.num_joints):
        total, joint = np.zeros_like(x[:, :, 0]), v
        while joint != topo.center:
            total += bones[:, :, joint]
            joint = parents[joint]
        assert np.allclose(total, x[:, :, v] - x[:, :, topo.center], rtol=0, atol=1e-12)


def test_stream_errors(chain5, rng):
    with pytest.raises(ConfigError):
        derive_stream(np.zeros((3, 4, 5, 1)), 'velocity', chain5)
    with pytest.raises(DimensionError):
        derive_stream(np.zeros((3, 4, 6, 1)), 'bone', chain5)
    seq = SkeletonSequence(rng.normal(size=(3, 4, 5, 1)), 2)
    assert derive_stream(seq, 'bone', chain5).label == 2


# --- Configuration and datasets

def test_data_config():
    assert DataConfig().problems() == []
    assert DataConfig(window=150).input_frames == 150
    assert DataConfig(frames=64).input_frames == 64
    assert DataConfig(stream='rgb', frames=0, window=500).problems() == [
        "data.stream: must be one of ('joint', 'bone', 'joint_motion', 'bone_motion'), got 'rgb'",
        'data.frames: must be a positive integer, got 0',
        'data.window: 500 is longer than frames (0)']
    assert 'progress' not in DataConfig(progress=True).what().id()


def test_dataset_from_sequences(chain5, rng):
    sequences = random_sequences(rng, 6, shape=(3, 10, 5, 3))
    cfg = DataConfig(stream='bone', frames=12, persons=2)
    ds = SkeletonDataset.from_sequences(sequences, 3, chain5, cfg)
    assert len(ds) == 6 and ds.x.shape == (6, 3, 12, 5, 2) and ds.x.dtype == np.float32
    assert ds.labels.tolist() == [0, 1, 2, 0, 1, 2]
    with pytest.warns(UserWarning, match='no samples for classes \\[3, 4\\]'):
        SkeletonDataset.from_sequences(sequences, 5, chain5, cfg)
    with pytest.raises(ConfigError):
        SkeletonDataset.from_sequences([], 3, chain5, cfg)
    with pytest.raises(LabelError):
        SkeletonDataset(ds.x, [0, 1, 2, 0, 1, 3], 3)


def test_dataset_from_file(chain5, rng, tmp_path):
    sequences = random_sequences(rng, 4, shape=(3, 8, 5, 2))
    path = save_dataset(str(tmp_path / 'val.skl'), sequences, 3, topology='chain:5')
    cfg = DataConfig(frames=8)
    ds = SkeletonDataset.from_file(path, cfg)
    assert np.array_equal(ds.x, SkeletonDataset.from_sequences(sequences, 3, chain5, cfg).x)
    with pytest.raises(ConfigError):
        SkeletonDataset.from_file(path, cfg, topology='star:5')
    bare = save_dataset(str(tmp_path / 'bare.skl'), sequences, 3)
    with pytest.raises(ConfigError):
        SkeletonDataset.from_file(bare, cfg)
    assert len(SkeletonDataset.from_file(bare, cfg, topology='chain:5')) == 4


def test_batches(rng):
    ds = SkeletonDataset(np.arange(2 * 10, dtype=np.float32).reshape(2, 1, 10, 1, 1), [0, 1], 2)
    x, labels = ds.batch([1, 0], window=4)
    assert labels.tolist() == [1, 0]
    assert x[:, 0, :, 0, 0].tolist() == [[13, 14, 15, 16], [3, 4, 5, 6]]
    x, _ = ds.batch([0, 1], window=4, mode='random', seed=1)
    for index, sample in enumerate(x):
        assert np.array_equal(np.diff(sample[0, :, 0, 0]), [1, 1, 1])
        expected = crop_window(SkeletonSequence(ds.x[index], index), 4, rng=sample_rng(1, index))
        assert np.array_equal(sample, expected.values)
    # a sample keeps its window whatever batch it lands in
    alone, _ = ds.batch([1], window=4, mode='random', seed=1)
    assert np.array_equal(alone[0], x[1])
    assert ds.batch([0])[0].shape == (1, 1, 10, 1, 1)


# --- Synthetic data

def test_synthetic_is_deterministic(chain9):
    a = generate_synthetic(4, 3, chain9, 16, seed=5)
    assert a == generate_synthetic(4, 3, chain9, 16, seed=5)
    assert a != generate_synthetic(4, 3, chain9, 16, seed=6)
    assert [seq.label for seq in a] == [0, 1, 2, 3] * 3
    assert all(seq.shape == (3, 16, 9, 1) for seq in a)


def test_synthetic_classes_move_their_joints(chain9):
    sequences = generate_synthetic(3, 1, chain9, 20, noise=0, persons=2)
    groups = np.array_split(np.arange(9), 3)
    for seq in sequences:
        moving = np.flatnonzero(seq.values[..., 0].std(axis=1).sum(axis=0) > 1e-6)
        assert moving.tolist() == groups[seq.label].tolist()
        assert not seq.values[..., 1].any()


def test_synthetic_seeds_share_the_rest_pose(chain9):
    a = generate_synthetic(3, 2, chain9, 20, seed=0, noise=0)
    b = generate_synthetic(3, 2, chain9, 20, seed=1, noise=0)
    groups = np.array_split(np.arange(9), 3)
    for x, y in zip(a, b):
        resting = np.setdiff1d(np.arange(9), groups[x.label])
        assert np.array_equal(x.values[:, :, resting], y.values[:, :, resting])
    other = generate_synthetic(3, 2, chain9, 20, seed=0, noise=0, pose_seed=1)
    assert not np.array_equal(a[0].values, other[0].values)


def test_nearest_centroid_separates_independent_draws(chain9):
    def features(sequences):
        return (np.stack([seq.values.ravel() for seq in sequences]),
                np.array([seq.label for seq in sequences]))

    x, y = features(generate_synthetic(4, 10, chain9, 32, seed=0))
    centroids = np.stack([x[y == k].mean(axis=0) for k in range(4)])
    val_x, val_y = features(generate_synthetic(4, 10, chain9, 32, seed=1))
    predicted = ((val_x[:, None] - centroids[None]) ** 2).sum(axis=2).argmin(axis=1)
    assert (predicted == val_y).mean() > 0.8


def test_synthetic_errors(chain5):
    with pytest.raises(ConfigError):
        generate_synthetic(6, 2, chain5, 10)
    with pytest.raises(ConfigError):
        generate_synthetic(2, 0, chain5, 10)
