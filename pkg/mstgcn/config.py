# coding=utf-8
"""Run configurations: JSON files with the sections model, data, train and seed.

Every optional key has a documented default (the *_DEFAULTS dictionaries below); unknown keys
are rejected and every problem found is reported at once in a single ConfigError.
"""

# Licence: BSD 3 clause

import json

from toolz import merge

from .blocks import BlockSpec
from .data import DataConfig
from .errors import ConfigError
from .network import NetworkConfig, preset_blocks
from .registry import PRESETS
from .training import TrainConfig
from .what import What

MODEL_DEFAULTS = {
    'preset': 'stgcn-64c-1s',
    'topology': 'ntu25',
    'num_classes': 60,
    'in_channels': 3,
    'kernel_size': 9,
    'normalization': 'as-printed',
    'alpha': 0.001,
    'mask': 'additive',
    'max_persons': 2,
    'blocks': None,
    'strict': True,
}

DATA_DEFAULTS = {
    'train': None,
    'val': None,
    'stream': 'joint',
    'frames': 300,
    'window': None,
    'center': True,
    'persons': 2,
}

TRAIN_DEFAULTS = {
    'lr': 0.1,
    'momentum': 0.9,
    'batch_size': 24,
    'epochs': 110,
    'decay_epochs': [50, 70, 90],
    'decay_factor': 0.1,
    'weight_decay': 0.0,
    'lr_scaling_batch': None,
    'precision': 'float32',
}

BLOCK_KEYS = ('in_channels', 'out_channels', 'spatial_kind', 'temporal_kind', 'fused', 's',
              'kernel_size', 'stride', 'has_residual')

SECTIONS = {'model': MODEL_DEFAULTS, 'data': DATA_DEFAULTS, 'train': TRAIN_DEFAULTS}


def _section(raw, name, problems):
    value = raw.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        problems.append('%s: must be an object, got %r' % (name, value))
        return dict(SECTIONS[name])
    unknown = sorted(set(value) - set(SECTIONS[name]))
    problems.extend('%s.%s: unknown key' % (name, key) for key in unknown)
    return merge(SECTIONS[name], {k: v for k, v in value.items() if k in SECTIONS[name]})


class RunConfig(object):
    """A validated run configuration.

    Examples
    --------
    >>> cfg = RunConfig.from_dict({'model': {'preset': 'mstgcn-8c-2s', 'topology': 'chain:9',
    ...                                      'num_classes': 4, 'max_persons': 1},
    ...                            'data': {'frames': 64, 'persons': 1}})
    >>> [spec.out_channels for spec in cfg.network_config().blocks][::4]
    [16, 32, 64]
    >>> RunConfig.from_dict({'model': {'presett': 'x'}})
    Traceback (most recent call last):
    ...
    mstgcn.errors.ConfigError: model.presett: unknown key
    """

    def __init__(self, model, data, train, seed=0):
        super(RunConfig, self).__init__()
        self.model = model
        self.data = data
        self.train = train
        self.seed = seed

    @classmethod
    def from_dict(cls, raw):
        problems = []
        if not isinstance(raw, dict):
            raise ConfigError('a run configuration must be a JSON object, got %r' % (raw,))
        unknown = sorted(set(raw) - set(SECTIONS) - {'seed'})
        problems.extend('%s: unknown section' % key for key in unknown)
        model = _section(raw, 'model', problems)
        data = _section(raw, 'data', problems)
        train = _section(raw, 'train', problems)
        seed = raw.get('seed', 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            problems.append('seed: must be a non-negative integer, got %r' % (seed,))
        if problems:
            raise ConfigError(problems)
        cfg = cls(model, data, train, seed)
        cfg.validate()
        return cfg

    # ---- Typed views

    def _blocks(self, problems):
        model = self.model
        if model['blocks'] is None:
            try:
                return preset_blocks(model['preset'], in_channels=model['in_channels'],
                                     kernel_size=model['kernel_size'])
            except (ConfigError, TypeError) as e:
                problems.append('model.preset: %s' % e)
                return []
        if not isinstance(model['blocks'], list):
            problems.append('model.blocks: must be null or a list of block objects')
            return []
        blocks = []
        for index, block in enumerate(model['blocks'], start=1):
            if not isinstance(block, dict):
                problems.append('model.blocks[%d]: must be an object' % index)
                continue
            unknown = sorted(set(block) - set(BLOCK_KEYS))
            problems.extend('model.blocks[%d].%s: unknown key' % (index, key) for key in unknown)
            missing = sorted({'in_channels', 'out_channels'} - set(block))
            problems.extend('model.blocks[%d].%s: missing' % (index, key) for key in missing)
            if unknown or missing:
                continue
            blocks.append(BlockSpec(**merge({'kernel_size': model['kernel_size']}, block)))
        return blocks

    def network_config(self, problems=None):
        raise_now = problems is None
        problems = [] if problems is None else problems
        model = self.model
        cfg = NetworkConfig(self._blocks(problems), topology=model['topology'], num_classes=model['num_classes'],
                            in_channels=model['in_channels'], max_persons=model['max_persons'], seed=self.seed,
                            normalization=model['normalization'], alpha=model['alpha'], mask=model['mask'],
                            strict=model['strict'])
        if raise_now and problems:
            raise ConfigError(problems)
        return cfg

    def data_config(self, progress=False):
        data = self.data
        return DataConfig(stream=data['stream'], frames=data['frames'], window=data['window'],
                          center=data['center'], persons=data['persons'], progress=progress)

    def train_config(self, progress=False):
        return TrainConfig(seed=self.seed, progress=progress, **self.train)

    def preset(self):
        """The canonical preset id, or None for explicit block lists."""
        if self.model['blocks'] is not None:
            return None
        return PRESETS.resolve(self.model['preset']).canonical()

    # ---- Validation

    def problems(self):
        problems = []
        network = self.network_config(problems)
        if network.blocks:
            problems.extend('model.%s' % problem for problem in network.problems())
        data = self.data_config()
        problems.extend(data.problems())
        problems.extend(self.train_config().problems())
        if data.persons != network.max_persons:
            problems.append('data.persons (%r) must equal model.max_persons (%r)' %
                            (data.persons, network.max_persons))
        if network.blocks and not data.problems():
            stride = 1
            for spec in network.blocks:
                stride *= spec.stride if isinstance(spec.stride, int) else 1
            if data.input_frames % stride:
                problems.append('data: %d input frames are not divisible by the temporal stride %d' %
                                (data.input_frames, stride))
        return problems

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def what(self):
        """The run identity: model, preprocessing, training and seed (data paths excluded)."""
        return What('RunConfig', {'model': self.network_config(),
                                  'data': self.data_config(),
                                  'train': self.train_config(),
                                  'seed': self.seed})

    def as_dict(self):
        return {'model': dict(self.model), 'data': dict(self.data), 'train': dict(self.train), 'seed': self.seed}


def load_run_config(path):
    """Reads a JSON run configuration; I/O errors propagate, anything else is a ConfigError."""
    with open(path) as reader:
        text = reader.read()
    try:
        raw = json.loads(text)
    except ValueError as e:
        raise ConfigError('%s: invalid JSON (%s)' % (path, e))
    return RunConfig.from_dict(raw)
