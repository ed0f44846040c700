# coding=utf-8
"""Exceptions raised by mstgcn.

Every exception derives from `MstGcnError` and from the builtin a caller would catch anyway,
so `except ValueError` keeps working around configuration and shape problems.
"""

# Licence: BSD 3 clause


class MstGcnError(Exception):
    """Base class for all mstgcn errors."""


class DimensionError(MstGcnError, ValueError):
    """Tensor extents do not agree."""

    @classmethod
    def mismatch(cls, what, shape_a, shape_b):
        return cls('%s: incompatible shapes %r and %r' % (what, tuple(shape_a), tuple(shape_b)))


class ConfigError(MstGcnError, ValueError):
    """An invalid configuration; carries every problem found.

    Examples
    --------
    >>> error = ConfigError(['blocks: expected 10 blocks, got 9', 'train.lr: must be positive'])
    >>> print(error)
    invalid configuration (2 problems):
      - blocks: expected 10 blocks, got 9
      - train.lr: must be positive
    >>> print(ConfigError('unknown topology kind "hand21"'))
    unknown topology kind "hand21"
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super(ConfigError, self).__init__(self.report())

    def report(self):
        if len(self.problems) == 1:
            return self.problems[0]
        return 'invalid configuration (%d problems):\n%s' % (
            len(self.problems), '\n'.join('  - %s' % problem for problem in self.problems))


class TopologyError(MstGcnError, ValueError):
    """A skeleton graph is malformed or disconnected."""

    def __init__(self, message, joints=()):
        self.joints = sorted(joints)
        if self.joints:
            message = '%s: %r' % (message, self.joints)
        super(TopologyError, self).__init__(message)


class FormatError(MstGcnError, IOError):
    """Bytes that do not follow a documented file format."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = '%s (at byte offset %d)' % (message, offset)
        super(FormatError, self).__init__(message)


class ContractError(MstGcnError, RuntimeError):
    """A call precondition does not hold."""


class LabelError(MstGcnError, IndexError):
    """A class label outside [0, num_classes)."""

    def __init__(self, label, num_classes, sample=None):
        self.label = label
        self.num_classes = num_classes
        self.sample = sample
        where = '' if sample is None else ' in sample %d' % sample
        super(LabelError, self).__init__('label %d out of range for %d classes%s' % (label, num_classes, where))
