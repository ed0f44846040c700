# coding=utf-8
"""Command line entry point: train, eval, fuse, inspect, probe and gensynth.

Exit codes: 0 on success, 1 for invalid configurations or inputs, 2 for I/O and format errors.
Metric lines go to stdout (and, for training, to metrics.log); diagnostics go to stderr.
"""

# Licence: BSD 3 clause

import argparse
import json
import logging
import os.path as op
import sys
from collections import OrderedDict

import numpy as np

from .config import load_run_config
from .data import STREAMS, SkeletonDataset, generate_synthetic, save_dataset
from .engine import get_precision, set_precision
from .errors import ConfigError, ContractError, DimensionError, FormatError, LabelError, TopologyError
from .graph import build_topology
from .network import build_network, count_parameters, load_checkpoint, probe_receptive_field, save_checkpoint
from .registry import PRESETS
from .training import evaluate, fit, fuse_scores, metrics_from_scores
from .what import what2id

_log = logging.getLogger(__package__)

RUN_ID_MAXLENGTH = 200

VALIDATION_ERRORS = (ConfigError, TopologyError, DimensionError, ContractError, LabelError)


def metrics_line(record):
    """One machine parseable line of key=value pairs.

    Examples
    --------
    >>> metrics_line(OrderedDict((('epoch', 3), ('lr', 0.01), ('loss', 0.5), ('top1', 0.75))))
    'epoch=3 lr=0.01 loss=0.500000 top1=0.7500'
    """
    parts = []
    for key, value in record.items():
        if key == 'epoch':
            parts.append('%s=%d' % (key, value))
        elif key == 'lr':
            parts.append('%s=%.6g' % (key, value))
        elif key.endswith('loss'):
            parts.append('%s=%.6f' % (key, value))
        else:
            parts.append('%s=%.4f' % (key, value))
    return ' '.join(parts)


def _emit(line, log=None):
    print(line)
    if log is not None:
        log.write(line + '\n')
        log.flush()


def _load_setup(path, progress=False):
    cfg = load_run_config(path)
    set_precision(cfg.train['precision'])
    return cfg, cfg.network_config(), cfg.data_config(progress=progress)


def _dataset(path, cfg, network_cfg, data_cfg):
    if path is None:
        raise ConfigError('no dataset given (use --data or data.train in the configuration)')
    dataset = SkeletonDataset.from_file(path, data_cfg, topology=network_cfg.topology)
    if dataset.num_classes != network_cfg.num_classes:
        raise ConfigError('%s has %d classes but the model predicts %d' %
                          (path, dataset.num_classes, network_cfg.num_classes))
    return dataset


def write_scores(path, scores, labels):
    with open(path, 'w') as writer:
        json.dump({'scores': np.asarray(scores).tolist(), 'labels': np.asarray(labels).tolist()}, writer)
    return path


def read_scores(path):
    with open(path) as reader:
        try:
            raw = json.load(reader)
        except ValueError as e:
            raise FormatError('%s: invalid score file (%s)' % (path, e))
    if not isinstance(raw, dict) or set(raw) != {'scores', 'labels'}:
        raise FormatError('%s: a score file holds exactly "scores" and "labels"' % path)
    scores = np.asarray(raw['scores'], dtype=np.float64)
    labels = np.asarray(raw['labels'], dtype=np.int64)
    if scores.ndim != 2 or labels.shape != (len(scores),):
        raise DimensionError.mismatch(path, scores.shape, labels.shape)
    return scores, labels


# --- Commands

def cmd_train(args):
    cfg, network_cfg, data_cfg = _load_setup(args.config, progress=args.progress)
    train_set = _dataset(args.data or cfg.data['train'], cfg, network_cfg, data_cfg)
    val_path = args.val or cfg.data['val']
    val_set = _dataset(val_path, cfg, network_cfg, data_cfg) if val_path else None
    train_cfg = cfg.train_config(progress=args.progress)
    run_id = what2id(cfg, maxlength=RUN_ID_MAXLENGTH)
    _log.info('run %s', run_id)
    net = build_network(network_cfg)
    with open(op.join(args.out, 'metrics.log'), 'w') as log:
        state = fit(net, train_set, train_cfg, val_set=val_set, window=data_cfg.window,
                    on_epoch=lambda _, record: _emit(metrics_line(record), log))
    checkpoint = save_checkpoint(net, op.join(args.out, 'model.mgck'))
    summary = OrderedDict((
        ('run_id', run_id),
        ('preset', cfg.preset()),
        ('parameters', net.num_parameters()),
        ('checkpoint', checkpoint),
        ('config', cfg.as_dict()),
        ('final', state.last),
    ))
    with open(op.join(args.out, 'summary.json'), 'w') as writer:
        json.dump(summary, writer, indent=2)
    return 0


def cmd_eval(args):
    cfg, network_cfg, data_cfg = _load_setup(args.config)
    dataset = _dataset(args.data or cfg.data['val'], cfg, network_cfg, data_cfg)
    net = load_checkpoint(build_network(network_cfg), args.checkpoint)
    metrics, scores = evaluate(net, dataset, window=data_cfg.window)
    _emit(metrics_line(metrics.as_dict()))
    if args.scores_out:
        write_scores(args.scores_out, scores, dataset.labels)
    return 0


def cmd_fuse(args):
    if not 1 <= len(args.scores) <= len(STREAMS):
        raise ConfigError('fuse takes 1 to %d score files (one per stream), got %d' %
                          (len(STREAMS), len(args.scores)))
    loaded = [read_scores(path) for path in args.scores]
    labels = loaded[0][1]
    for path, (_, other) in zip(args.scores[1:], loaded[1:]):
        if not np.array_equal(labels, other):
            raise ContractError('%s does not score the same samples as %s' % (path, args.scores[0]))
    fused = fuse_scores([scores for scores, _ in loaded])
    _emit(metrics_line(metrics_from_scores(fused, labels).as_dict()))
    return 0


def cmd_inspect(args):
    cfg, network_cfg, _ = _load_setup(args.config)
    net = build_network(network_cfg)
    if cfg.preset() is not None:
        preset_id = PRESETS.resolve(cfg.preset()).canonical()
        nickname = PRESETS.id2nick(preset_id)
        _emit('preset: %s' % (preset_id if nickname is None else '%s (%s)' % (preset_id, nickname)))
    for index, spec in enumerate(network_cfg.blocks, start=1):
        _emit('block%d: %s' % (index, spec.what().id()))
    for line in count_parameters(net, preset=cfg.preset()).lines():
        _emit(line)
    return 0


def cmd_probe(args):
    _, network_cfg, _ = _load_setup(args.config)
    net = build_network(network_cfg)
    supports = probe_receptive_field(net, args.axis, args.source, num_frames=args.frames)
    for block, fragments in supports.items():
        for index, positions in enumerate(fragments, start=1):
            _emit('%s frag%d support=%d positions=%s' %
                  (block, index, len(positions), ','.join(str(p) for p in positions)))
    return 0


def cmd_gensynth(args):
    topo = build_topology(args.topology)
    sequences = generate_synthetic(args.classes, args.samples, topo, args.frames, seed=args.seed,
                                   noise=args.noise, persons=args.persons, pose_seed=args.pose_seed)
    save_dataset(args.out, sequences, args.classes, topology=args.topology)
    _log.info('%d synthetic sequences written to %s', len(sequences), args.out)
    return 0


# --- Parser

def build_parser():
    parser = argparse.ArgumentParser(prog='mstgcn', description='Multi-scale spatial temporal graph convolution')
    parser.add_argument('--verbose', '-v', action='store_true', help='log debug details to stderr')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    train = commands.add_parser('train', help='train a network and write a checkpoint')
    train.add_argument('--config', required=True)
    train.add_argument('--data', help='training SKL1 file (overrides data.train)')
    train.add_argument('--val', help='validation SKL1 file (overrides data.val)')
    train.add_argument('--out', required=True, help='existing directory for model.mgck, metrics.log, summary.json')
    train.add_argument('--progress', action='store_true', help='show progress bars')
    train.set_defaults(run=cmd_train)

    evaluation = commands.add_parser('eval', help='evaluate a checkpoint')
    evaluation.add_argument('--config', required=True)
    evaluation.add_argument('--checkpoint', required=True)
    evaluation.add_argument('--data', help='SKL1 file (overrides data.val)')
    evaluation.add_argument('--scores-out', help='write class probabilities to this JSON file')
    evaluation.set_defaults(run=cmd_eval)

    fuse = commands.add_parser('fuse', help='fuse the score files of several streams')
    fuse.add_argument('--scores', nargs='+', required=True)
    fuse.set_defaults(run=cmd_fuse)

    inspect = commands.add_parser('inspect', help='report parameter counts')
    inspect.add_argument('--config', required=True)
    inspect.set_defaults(run=cmd_inspect)

    probe = commands.add_parser('probe', help='report receptive field supports per block')
    probe.add_argument('--config', required=True)
    probe.add_argument('--axis', choices=('spatial', 'temporal'), required=True)
    probe.add_argument('--source', type=int, required=True, help='impulse joint or frame index')
    probe.add_argument('--frames', type=int, default=None,
                       help='probe length (temporal default: long enough for every support)')
    probe.set_defaults(run=cmd_probe)

    gensynth = commands.add_parser('gensynth', help='write a synthetic SKL1 dataset')
    gensynth.add_argument('--classes', type=int, required=True)
    gensynth.add_argument('--samples', type=int, required=True, help='samples per class')
    gensynth.add_argument('--topology', default='chain:9')
    gensynth.add_argument('--frames', type=int, default=64)
    gensynth.add_argument('--persons', type=int, default=1)
    gensynth.add_argument('--noise', type=float, default=0.05)
    gensynth.add_argument('--seed', type=int, default=0)
    gensynth.add_argument('--pose-seed', type=int, default=0,
                          help='seed of the rest pose (keep it equal across train and val files)')
    gensynth.add_argument('--out', required=True)
    gensynth.set_defaults(run=cmd_gensynth)

    return parser


def _configure_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
    _log.handlers = [handler]
    _log.setLevel(logging.DEBUG if verbose else logging.INFO)
    logging.captureWarnings(True)
    logging.getLogger('py.warnings').handlers = [handler]


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    old_precision = get_precision().name
    try:
        return args.run(args)
    except VALIDATION_ERRORS as e:
        report = e.report() if isinstance(e, ConfigError) else str(e)
        print('error: %s' % report, file=sys.stderr)
        return 1
    except (OSError, FormatError) as e:
        print('I/O error: %s' % e, file=sys.stderr)
        return 2
    finally:
        set_precision(old_precision)


if __name__ == '__main__':
    sys.exit(main())
