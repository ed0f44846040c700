# coding=utf-8
"""A registry of architecture presets: nicknames, canonical ids and reported parameter counts."""

# Licence: BSD 3 clause

from .errors import ConfigError
from .parsers import parse_preset


class PresetRegistry(object):
    """Bidirectional mapping between nicknames and canonical preset ids, one-to-one.

    Canonical presets can also carry the parameter count reported for them in the literature,
    so that parameter reports can put our own counting next to it.
    """

    def __init__(self, name='presets'):
        super(PresetRegistry, self).__init__()
        self.name = name
        self._id2nick = {}
        self._nick2id = {}
        self._reported = {}

    def register(self, preset, nickname=None, reported_params=None):
        """Registers a canonical preset, optionally with a nickname and a reported parameter count.

        Returns the canonical id, in the interest of fluent interfaces.
        """
        if preset is None:
            raise ValueError('preset cannot be None')
        preset_id = parse_preset(preset).canonical()

        if nickname is not None:
            i2n, n2i = self._id2nick, self._nick2id
            # one-to-one
            if nickname in n2i and not n2i[nickname] == preset_id:
                raise ValueError('nickname "%s" is already associated with preset "%s"' %
                                 (nickname, n2i[nickname]))
            if preset_id in i2n and not i2n[preset_id] == nickname:
                raise ValueError('preset "%s" is already associated with nickname "%s"' %
                                 (preset_id, i2n[preset_id]))
            i2n[preset_id] = nickname
            n2i[nickname] = preset_id

        if reported_params is not None:
            self._reported[preset_id] = reported_params
        else:
            self._reported.setdefault(preset_id, None)

        return preset_id

    def nick2id(self, nickname):
        """Returns the canonical id for a nickname, or None if it is not in the registry."""
        return self._nick2id.get(nickname, None)

    def id2nick(self, preset_id):
        """Returns the nickname of a canonical id, or None if it is not in the registry."""
        return self._id2nick.get(preset_id, None)

    def resolve(self, text):
        """Returns the `PresetSpec` for a nickname or any preset string the grammar accepts.

        Examples
        --------
        >>> PRESETS.resolve('msgcn-4s')
        PresetSpec(family='msgcn', c=17, s=4)
        >>> PRESETS.resolve('mstgcn-8c-2s').canonical()
        'mstgcn-8c-2s'
        """
        return parse_preset(self._nick2id.get(text, text))

    def reported_params(self, preset):
        """Returns the literature parameter count for a preset (or None if unknown)."""
        try:
            return self._reported.get(self.resolve(preset).canonical())
        except ConfigError:
            return None

    def list(self):
        """Returns a sorted list of (canonical id, nickname or None, reported params or None)."""
        return sorted((preset_id, self._id2nick.get(preset_id), reported)
                      for preset_id, reported in self._reported.items())


PRESETS = PresetRegistry()

# Ablation rows: single scale baseline, then spatial, temporal and joint multi-scale variants
for _preset, _params in (('stgcn-64c-1s', 3.1e6),
                         ('msgcn-34c-2s', 3.1e6),
                         ('msgcn-23c-3s', 3.0e6),
                         ('msgcn-17c-4s', 3.0e6),
                         ('msgcn-16c-4s', 2.7e6),
                         ('mtgcn-40c-2s', 3.1e6),
                         ('mtgcn-30c-3s', 3.1e6),
                         ('mtgcn-24c-4s', 3.1e6),
                         ('mtgcn-16c-4s', 1.4e6),
                         ('mstgcn-16c-4s', 0.9e6),
                         ('mstgcn-30c-4s', 3.0e6),
                         ('strgcn-30c-4s', 2.8e6)):
    PRESETS.register(_preset, reported_params=_params)

for _nick, _preset in (('msgcn-4s', 'msgcn-17c-4s'),
                       ('mtgcn-4s', 'mtgcn-24c-4s'),
                       ('mstgcn-4s', 'mstgcn-30c-4s'),
                       ('strgcn-4s', 'strgcn-30c-4s')):
    PRESETS.register(_preset, nickname=_nick)
