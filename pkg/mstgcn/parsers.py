# coding=utf-8
"""Grammars for the small configuration languages: preset strings and topology kinds.

Presets follow the "c × s" notation of the ablation tables, optionally prefixed by an
architecture family: "mstgcn-30c-4s", "msgcn 17c × 4s", "24c*4s" (when a default family
is given). Topology kinds are "ntu25", "kinetics18", "chain:<V>" and "star:<V>".
"""

# Licence: BSD 3 clause

from collections import namedtuple

from arpeggio import ParserPython, Optional, StrMatch, RegExMatch, EOF, PTNodeVisitor, visit_parse_tree, NoMatch

from .errors import ConfigError

FAMILIES = ('stgcn', 'msgcn', 'mtgcn', 'mstgcn', 'strgcn')


class PresetSpec(namedtuple('PresetSpec', ['family', 'c', 's'])):
    """An architecture family with per-fragment channels c and subset count s.

    Examples
    --------
    >>> spec = PresetSpec('mstgcn', 30, 4)
    >>> spec.canonical()
    'mstgcn-30c-4s'
    >>> spec.base_width
    120
    """
    __slots__ = ()

    @property
    def base_width(self):
        return self.c * self.s

    def canonical(self):
        return '%s-%dc-%ds' % (self.family, self.c, self.s)


# --- Preset grammar

def build_preset_parser(reduce_tree=False, debug=False):
    """Builds an arpeggio parser for preset strings.

    Returns
    -------
    The arpeggio parser. Call `parser.parse` to generate the parse tree.
    """

    def family():
        # longest alternatives first
        return RegExMatch(r'mstgcn|msgcn|mtgcn|strgcn|stgcn')

    def sep():
        return Optional([StrMatch('-'), StrMatch('×'), StrMatch('x'), StrMatch('*')])

    def channels():
        return RegExMatch(r'\d+'), StrMatch('c')

    def scales():
        return RegExMatch(r'\d+'), StrMatch('s')

    def preset():
        return Optional(family, sep), channels, sep, scales

    def preset_top():
        return preset, EOF

    return ParserPython(preset_top, reduce_tree=reduce_tree, debug=debug)


class PresetTreeVisitor(PTNodeVisitor):
    """Turns a preset parse tree into a (family or None, c, s) triplet."""

    def __init__(self, debug=False):
        # string matches are syntactic noise, therefore defaults=True
        super(PresetTreeVisitor, self).__init__(defaults=True, debug=debug)

    @staticmethod
    def visit_family(node, _):
        return node.value

    @staticmethod
    def visit_channels(_, children):
        return int(children[0])

    @staticmethod
    def visit_scales(_, children):
        return int(children[0])

    @staticmethod
    def visit_preset(_, children):
        if 3 == len(children):
            return tuple(children)
        return (None,) + tuple(children)

    @staticmethod
    def visit_preset_top(_, children):
        return children[0]


# --- Topology grammar

def build_topology_parser(reduce_tree=False, debug=False):
    """Builds an arpeggio parser for topology kinds."""

    def fixed_kind():
        return RegExMatch(r'ntu25|kinetics18')

    def sized_family():
        return RegExMatch(r'chain|star')

    def joint_count():
        return RegExMatch(r'\d+')

    def sized_kind():
        return sized_family, StrMatch(':'), joint_count

    def topology():
        return [fixed_kind, sized_kind]

    def topology_top():
        return topology, EOF

    return ParserPython(topology_top, reduce_tree=reduce_tree, debug=debug)


class TopologyTreeVisitor(PTNodeVisitor):
    """Turns a topology parse tree into a (family, num_joints) pair."""

    FIXED_JOINTS = {'ntu25': 25, 'kinetics18': 18}

    def __init__(self, debug=False):
        super(TopologyTreeVisitor, self).__init__(defaults=True, debug=debug)

    @staticmethod
    def visit_fixed_kind(node, _):
        return node.value, TopologyTreeVisitor.FIXED_JOINTS[node.value]

    @staticmethod
    def visit_sized_family(node, _):
        return node.value

    @staticmethod
    def visit_joint_count(node, _):
        return int(node.value)

    @staticmethod
    def visit_sized_kind(_, children):
        return children[0], children[1]

    @staticmethod
    def visit_topology(_, children):
        return children[0]

    @staticmethod
    def visit_topology_top(_, children):
        return children[0]


DEFAULT_PRESET_PARSER = build_preset_parser()
DEFAULT_PRESET_VISITOR = PresetTreeVisitor()
DEFAULT_TOPOLOGY_PARSER = build_topology_parser()
DEFAULT_TOPOLOGY_VISITOR = TopologyTreeVisitor()


def _parse(text, what, parser, visitor):
    if not isinstance(text, str):
        raise ConfigError('%s must be a string, got %r' % (what, text))
    try:
        return visit_parse_tree(parser.parse(text.strip()), visitor=visitor)
    except NoMatch as e:
        raise ConfigError('invalid %s "%s" (no match at position %d)' % (what, text, e.position))


def parse_preset(text, default_family=None):
    """Parses a preset string into a `PresetSpec`.

    Parameters
    ----------
    text : string
      Something like "mstgcn-30c-4s" or, when `default_family` is given, "30c × 4s".

    default_family : string or None
      The family used when the text does not name one.

    Examples
    --------
    >>> parse_preset('msgcn-17c-4s')
    PresetSpec(family='msgcn', c=17, s=4)
    >>> parse_preset('30c × 4s', default_family='strgcn')
    PresetSpec(family='strgcn', c=30, s=4)
    >>> parse_preset('stgcn 64c x 1s').canonical()
    'stgcn-64c-1s'
    """
    family, c, s = _parse(text, 'preset', DEFAULT_PRESET_PARSER, DEFAULT_PRESET_VISITOR)
    family = family or default_family
    problems = []
    if family is None:
        problems.append('preset "%s" does not name an architecture family %r' % (text, FAMILIES))
    elif family not in FAMILIES:
        problems.append('unknown architecture family "%s"' % family)
    if c < 1:
        problems.append('preset "%s": channels per fragment must be positive' % text)
    if s < 1:
        problems.append('preset "%s": subset count must be positive' % text)
    if family == 'stgcn' and s != 1:
        problems.append('preset "%s": the stgcn family is single-scale (s=1)' % text)
    if problems:
        raise ConfigError(problems)
    return PresetSpec(family, c, s)


def parse_topology(text):
    """Parses a topology kind into a (family, num_joints) pair.

    Examples
    --------
    >>> parse_topology('ntu25')
    ('ntu25', 25)
    >>> parse_topology('chain:9')
    ('chain', 9)
    >>> parse_topology('hand21')
    Traceback (most recent call last):
    ...
    mstgcn.errors.ConfigError: invalid topology kind "hand21" (no match at position 0)
    """
    family, num_joints = _parse(text, 'topology kind', DEFAULT_TOPOLOGY_PARSER, DEFAULT_TOPOLOGY_VISITOR)
    if num_joints < 1:
        raise ConfigError('topology kind "%s" needs at least one joint' % text)
    return family, num_joints
