# coding=utf-8
"""Configuration self-identification.

Configuration objects (block specs, network, data and training configs) provide their
own ids by returning a `What` from a method named `what()`. `What.id()` renders a
deterministic, python-call-like string with sorted keys, which is what we log, write
to run summaries and use as run identifiers.

Examples
--------
>>> @whatable
... class Schedule(object):
...     def __init__(self, lr=0.1, decay_epochs=(50, 70, 90), verbose=False):
...         self.lr = lr
...         self.decay_epochs = decay_epochs
...         self._verbose = verbose  # not part of the config
>>> print(Schedule().what().id())
Schedule(decay_epochs=(50,70,90),lr=0.1)
>>> print(What('run', {'schedule': Schedule(lr=0.01), 'seed': 3}).id())
run(schedule=Schedule(decay_epochs=(50,70,90),lr=0.01),seed=3)
"""

# Licence: BSD 3 clause

import hashlib
import inspect
import types

import numpy as np

from .misc import is_iterable, public_attributes


class What(object):
    """Stores and renders an object configuration.

    Parameters
    ----------
    name : string
      The name of this configuration (e.g. "TrainConfig").

    conf : dictionary
      The {key: value} property dictionary for this configuration.

    non_id_keys : iterable of strings, default None
      Keys that do not change results (e.g. "progress" or "threads").
      They do not make it to the id string unless explicitly asked for.
    """

    __slots__ = ('name', 'conf', 'non_id_keys')

    def __init__(self, name, conf, non_id_keys=None):
        super(What, self).__init__()
        self.name = name
        self.conf = conf
        if non_id_keys is None:
            self.non_id_keys = set()
        elif is_iterable(non_id_keys) and not isinstance(non_id_keys, str):
            self.non_id_keys = set(non_id_keys)
        else:
            raise ValueError('non_id_keys must be None or an iterable of keys')

    def keys(self, nonids_too=False):
        """Returns the sorted top level keys."""
        return sorted(k for k in self.conf if nonids_too or k not in self.non_id_keys)

    # ---- Magics

    def __eq__(self, other):
        return (isinstance(other, What) and
                self.name == other.name and
                self.id(nonids_too=True) == other.id(nonids_too=True))

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash(self.id(nonids_too=True))

    def __str__(self):
        return self.id(nonids_too=True)

    def __repr__(self):
        return '%s(%r, %r, %r)' % (self.__class__.__name__, self.name, self.conf, self.non_id_keys)

    # ---- ID string generation

    def id(self, nonids_too=False, maxlength=0):
        """Returns the id string of this configuration.

        Parameters
        ----------
        nonids_too : boolean, default False
          Non-ids keys are ignored if nonids_too is False.

        maxlength : int, default 0
          If the id length goes over maxlength, it gets replaced by its sha1.
          If <= 0, the full id string is returned.
        """
        kvs = ','.join('%s=%s' % (k, build_string(self.conf[k])) for k in self.keys(nonids_too=nonids_too))
        my_id = '%s(%s)' % (self.name, kvs)
        if 0 < maxlength < len(my_id):
            return hashlib.sha1(my_id.encode('utf-8')).hexdigest()
        return my_id


# --- Value rendering, a chain of plugins; the first one returning a string wins

def what_plugin(v):
    if isinstance(v, What):
        return v.id()


def whatable_plugin(v):
    if is_whatable(v):
        return v.what().id()


def none_bool_plugin(v):
    if v is None or isinstance(v, (bool, np.bool_)):
        return str(bool(v)) if v is not None else 'None'


def number_plugin(v):
    """Python and numpy scalars render like python literals."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))


def string_plugin(v):
    """A single-quoted string with single quotes escaped."""
    if isinstance(v, str):
        return '\'%s\'' % v.replace("\\'", "'").replace("'", "\\'")


def array_plugin(v):
    """Arrays are represented by shape, dtype and an md5 of their bytes."""
    if isinstance(v, np.ndarray):
        v = np.ascontiguousarray(v)
        digest = hashlib.md5(v.tobytes()).hexdigest()
        return "ndarray(dtype='%s',hash='%s',shape=%s)" % (v.dtype.str, digest, build_string(tuple(v.shape)))


def sequence_plugin(v):
    if isinstance(v, list):
        return '[%s]' % ','.join(map(build_string, v))
    if isinstance(v, tuple):
        return '(%s)' % ','.join(map(build_string, v))


def dict_plugin(v):
    if isinstance(v, dict):
        return '{%s}' % ','.join(sorted('%s:%s' % (build_string(k), build_string(value))
                                        for k, value in v.items()))


def set_plugin(v):
    if isinstance(v, (set, frozenset)):
        return '{%s}' % ','.join(sorted(map(build_string, v))) if v else 'set()'


def anyobject_plugin(v):
    """Delegate to str, this should be the last plugin in the chain."""
    return str(v)


PLUGINS = (
    what_plugin,
    whatable_plugin,
    none_bool_plugin,
    number_plugin,
    string_plugin,
    array_plugin,
    sequence_plugin,
    dict_plugin,
    set_plugin,
    anyobject_plugin,
)


def build_string(v):
    """Returns the nested configuration string for a value.

    Examples
    --------
    >>> build_string([1, 2.5, 'a', None, True])
    "[1,2.5,'a',None,True]"
    >>> build_string({'b': 1, 'a': (2,)})
    "{'a':(2,),'b':1}"
    """
    for plugin in PLUGINS:
        string = plugin(v)
        if string is not None:
            return string


# --- Inferring configurations

def whatareyou(obj, name_override=None, non_id_keys=None,
               exclude_prefix='_', exclude_postfix='_', excludes=('what',)):
    """Returns a What built from the public attributes of obj (__dict__ and __slots__)."""
    conf = public_attributes(obj, exclude_prefix=exclude_prefix, exclude_postfix=exclude_postfix,
                             excludes=excludes)
    return What(name=type(obj).__name__ if name_override is None else name_override,
                conf=conf, non_id_keys=non_id_keys)


def is_whatable(obj):
    """Whatable objects have a method what() that takes no parameters and return a What configuration.

    Examples
    --------
    >>> @whatable
    ... class WO(object):
    ...     def __init__(self):
    ...         self.a = 3
    >>> is_whatable(WO())
    True
    >>> is_whatable(3)
    False
    """
    if inspect.isclass(obj):
        return getattr(getattr(obj, 'what', None), 'whatable', False)
    what_method = getattr(obj, 'what', None)
    if what_method is None or not callable(what_method):
        return False
    try:
        return isinstance(what_method(), What)
    except TypeError:
        return False


def whatable(obj=None, name=None, non_id_keys=None,
             exclude_prefix='_', exclude_postfix='_', excludes=('what',)):
    """Class (or instance) decorator adding a `what()` method inferred from public attributes.

    Attributes starting or ending by '_' are not part of the configuration.
    Keys in `non_id_keys` are kept in the configuration but left out of default ids.
    """
    if obj is None:
        return lambda o: whatable(o, name=name, non_id_keys=non_id_keys,
                                  exclude_prefix=exclude_prefix,
                                  exclude_postfix=exclude_postfix,
                                  excludes=excludes)

    def what(self):
        return whatareyou(self,
                          name_override=name,
                          non_id_keys=non_id_keys,
                          exclude_prefix=exclude_prefix,
                          exclude_postfix=exclude_postfix,
                          excludes=excludes)
    what.whatable = True

    if inspect.isclass(obj):
        obj.what = what
    else:
        obj.what = types.MethodType(what, obj)
    return obj


def what2id(obj, maxlength=0):
    """Returns the configuration of obj as a string (its sha1 if longer than a positive maxlength).

    Returns
    -------
      None if obj is None
      obj if obj is a string
      obj.id() if obj is a What
      obj.what().id() if obj has a what() method
      whatareyou(obj).id() otherwise
    """
    if obj is None:
        return None
    if isinstance(obj, str):
        return obj
    if isinstance(obj, What):
        return obj.id(maxlength=maxlength)
    try:
        return obj.what().id(maxlength=maxlength)
    except AttributeError:
        return whatareyou(obj).id(maxlength=maxlength)
