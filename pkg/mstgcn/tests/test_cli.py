# coding=utf-8

# Licence: BSD 3 clause

import json
import os.path as op
from collections import OrderedDict

import numpy as np

from ..cli import main, metrics_line, read_scores, write_scores
from ..data import generate_synthetic, read_dataset, save_dataset
from ..engine import get_precision
from ..errors import FormatError
from ..graph import build_topology
from .fixtures import *

DESK = {'model': {'preset': 'mstgcn-8c-2s', 'topology': 'chain:9', 'num_classes': 4, 'max_persons': 1},
        'data': {'frames': 16, 'persons': 1},
        'train': {'lr': 0.05, 'epochs': 2, 'decay_epochs': [1], 'batch_size': 8},
        'seed': 3}


def write_json(path, obj):
    with open(path, 'w') as writer:
        json.dump(obj, writer)
    return str(path)


def output_lines(capsys):
    return capsys.readouterr().out.splitlines()


@pytest.fixture
def desk_run(tmp_path):
    """A run configuration with a small synthetic train / validation split."""
    sequences = generate_synthetic(4, 6, build_topology('chain:9'), 16, seed=1)
    train = save_dataset(str(tmp_path / 'train.skl'), sequences[:16], 4, topology='chain:9')
    val = save_dataset(str(tmp_path / 'val.skl'), sequences[16:], 4, topology='chain:9')
    config = write_json(tmp_path / 'desk.json', DESK)
    out = tmp_path / 'out'
    out.mkdir()
    return config, train, val, str(out)


def test_train_then_eval_reproduces_validation(desk_run, capsys, tmp_path):
    config, train, val, out = desk_run
    assert main(['train', '--config', config, '--data', train, '--val', val, '--out', out]) == 0
    lines = output_lines(capsys)
    assert [line.split()[:2] for line in lines] == [['epoch=1', 'lr=0.05'], ['epoch=2', 'lr=0.005']]
    with open(op.join(out, 'metrics.log')) as reader:
        assert reader.read().splitlines() == lines
    with open(op.join(out, 'summary.json')) as reader:
        summary = json.load(reader)
    assert summary['preset'] == 'mstgcn-8c-2s'
    assert summary['run_id'].startswith('RunConfig(') or len(summary['run_id']) == 40
    assert summary['checkpoint'] == op.join(out, 'model.mgck')
    assert summary['config']['seed'] == 3
    final = summary['final']
    assert final['epoch'] == 2
    # restored in the precision it was trained in
    assert get_precision() == np.float64

    scores_path = str(tmp_path / 'joint.json')
    assert main(['eval', '--config', config, '--checkpoint', summary['checkpoint'], '--data', val,
                 '--scores-out', scores_path]) == 0
    expected = metrics_line(OrderedDict((key, final['val_' + key]) for key in ('loss', 'top1', 'top5')))
    assert output_lines(capsys) == [expected]

    scores, labels = read_scores(scores_path)
    assert scores.shape == (8, 4) and labels.tolist() == [0, 1, 2, 3] * 2
    assert main(['fuse', '--scores', scores_path]) == 0
    assert output_lines(capsys) == [expected]
    assert main(['fuse', '--scores', scores_path, scores_path]) == 0
    assert output_lines(capsys) == [expected]


def test_data_paths_from_configuration(desk_run, capsys):
    config, train, val, out = desk_run
    raw = dict(DESK, data=dict(DESK['data'], train=train), train=dict(DESK['train'], epochs=1, decay_epochs=[]))
    config = write_json(op.join(out, 'paths.json'), raw)
    assert main(['train', '--config', config, '--out', out]) == 0
    assert len(output_lines(capsys)) == 1
    with open(op.join(out, 'summary.json')) as reader:
        assert 'val_loss' not in json.load(reader)['final']


def test_fuse_checks(tmp_path, capsys):
    scores = np.full((3, 2), 0.5)
    a = write_scores(str(tmp_path / 'a.json'), scores, [0, 1, 1])
    b = write_scores(str(tmp_path / 'b.json'), scores, [0, 1, 0])
    assert main(['fuse', '--scores', a, b]) == 1
    assert 'does not score the same samples' in capsys.readouterr().err
    assert main(['fuse', '--scores', a, a, a, a, a]) == 1
    assert 'fuse takes 1 to 4 score files' in capsys.readouterr().err
    broken = tmp_path / 'broken.json'
    broken.write_text('{"scores": [[1.0]]}')
    assert main(['fuse', '--scores', str(broken)]) == 2
    with pytest.raises(FormatError):
        read_scores(str(broken))


def test_inspect(tmp_path, capsys):
    config = write_json(tmp_path / 'stgcn.json', {'model': {'preset': 'stgcn-64c-1s'}})
    assert main(['inspect', '--config', config]) == 0
    preset, *lines = output_lines(capsys)
    assert preset == 'preset: stgcn-64c-1s'
    assert [line.split(':')[0] for line in lines[:10]] == ['block%d' % i for i in range(1, 11)]
    assert lines[0].startswith('block1: BlockSpec(')
    assert 'has_residual=False' in lines[0] and 'stride=2' in lines[4]
    assert lines[10].startswith('total: ')
    total = int(lines[10].split()[1])
    assert 0.8 * 3.1e6 <= total <= 1.2 * 3.1e6
    assert lines[11].startswith('reported: 3100000 (ratio ')
    nicknamed = write_json(tmp_path / 'nick.json', {'model': {'preset': 'mstgcn-4s'}})
    assert main(['inspect', '--config', nicknamed]) == 0
    assert output_lines(capsys)[0] == 'preset: mstgcn-30c-4s (mstgcn-4s)'


def test_probe(tmp_path, capsys):
    config = write_json(tmp_path / 'desk.json', dict(DESK, data={'frames': 64, 'persons': 1}))
    assert main(['probe', '--config', config, '--axis', 'temporal', '--source', '16']) == 0
    lines = output_lines(capsys)
    assert lines[0] == 'block1 frag1 support=9 positions=%s' % ','.join(str(t) for t in range(12, 21))
    assert [line.split()[2] for line in lines if line.startswith('block2 ')] == ['support=9', 'support=17']
    assert main(['probe', '--config', config, '--axis', 'spatial', '--source', '0']) == 0
    assert 'block3 frag2 support=3 positions=0,1,2' in output_lines(capsys)
    assert main(['probe', '--config', config, '--axis', 'spatial', '--source', '9']) == 1


def test_gensynth(tmp_path):
    out = str(tmp_path / 'synth.skl')
    assert main(['gensynth', '--classes', '3', '--samples', '2', '--frames', '8', '--persons', '2',
                 '--seed', '4', '--out', out]) == 0
    manifest, sequences = read_dataset(out)
    assert (manifest.num_samples, manifest.num_classes, manifest.topology) == (6, 3, 'chain:9')
    assert sequences == generate_synthetic(3, 2, build_topology('chain:9'), 8, seed=4, persons=2)
    posed = str(tmp_path / 'posed.skl')
    assert main(['gensynth', '--classes', '3', '--samples', '2', '--frames', '8', '--pose-seed', '2',
                 '--out', posed]) == 0
    assert read_dataset(posed)[1] == generate_synthetic(3, 2, build_topology('chain:9'), 8, pose_seed=2)
    assert main(['gensynth', '--classes', '12', '--samples', '2', '--out', out]) == 1


def test_exit_codes(tmp_path, capsys):
    bad = write_json(tmp_path / 'bad.json', {'model': {'presett': 'stgcn-64c-1s'}})
    assert main(['inspect', '--config', bad]) == 1
    assert capsys.readouterr().err.strip() == 'error: model.presett: unknown key'
    assert main(['inspect', '--config', str(tmp_path / 'missing.json')]) == 2
    config = write_json(tmp_path / 'desk.json', DESK)
    checkpoint = tmp_path / 'broken.mgck'
    checkpoint.write_bytes(b'MGCK\x01')
    data = save_dataset(str(tmp_path / 'val.skl'), generate_synthetic(4, 1, build_topology('chain:9'), 16), 4,
                        topology='chain:9')
    assert main(['eval', '--config', config, '--checkpoint', str(checkpoint), '--data', data]) == 2
    assert 'truncated checkpoint' in capsys.readouterr().err
    wrong_classes = save_dataset(str(tmp_path / 'three.skl'),
                                 generate_synthetic(3, 1, build_topology('chain:9'), 16), 3, topology='chain:9')
    assert main(['eval', '--config', config, '--checkpoint', str(checkpoint), '--data', wrong_classes]) == 1
    assert get_precision() == np.float64
