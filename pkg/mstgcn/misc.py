# coding=utf-8
"""A jumble of small helpers shared by the rest of the package."""

# Licence: BSD 3 clause

import inspect
import os
from collections.abc import Iterable


# --- Introspection

def public_attributes(obj, exclude_prefix='_', exclude_postfix='_', excludes=('what',)):
    """Attributes held in obj's __dict__ and __slots__, minus the private and excluded ones.

    Examples
    --------
    >>> class Step(object):
    ...     __slots__ = ('lr', '_velocity')
    ...     def __init__(self):
    ...         self.lr, self._velocity = 0.1, 0
    >>> public_attributes(Step())
    {'lr': 0.1}
    >>> class Loose(object):
    ...     def __init__(self):
    ...         self.decay, self.history_, self.what = 0.9, [], None
    >>> public_attributes(Loose())
    {'decay': 0.9}
    """
    attributes = dict(getattr(obj, '__dict__', {}))
    for name, descriptor in inspect.getmembers(type(obj), inspect.ismemberdescriptor):
        try:
            attributes[name] = descriptor.__get__(obj)
        except AttributeError:  # unset slot
            pass
    excludes = set(excludes)

    def public(name):
        return not ((exclude_prefix and name.startswith(exclude_prefix)) or
                    (exclude_postfix and name.endswith(exclude_postfix)) or
                    name in excludes)

    return {name: value for name, value in attributes.items() if public(name)}


def is_iterable(v):
    return isinstance(v, Iterable)


# --- Seeds and threads

def derive_seed(seed, *salts):
    """Combines a global seed with per-epoch / per-sample salts by xor.

    Examples
    --------
    >>> derive_seed(42, 0)
    42
    >>> derive_seed(42, 3)
    41
    >>> derive_seed(42, 3, 3)
    42
    """
    for salt in salts:
        seed = int(seed) ^ int(salt)
    return int(seed)


THREAD_VARIABLES = ('OMP_NUM_THREADS', 'OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS', 'NUMEXPR_NUM_THREADS')


def apply_thread_cap(environ=None):
    """Propagates MSTGCN_THREADS to the BLAS/OpenMP variables numpy honours at import time.

    Returns the cap (an int) or None if MSTGCN_THREADS is not set.
    Variables already present in the environment are left alone.

    Examples
    --------
    >>> env = {'MSTGCN_THREADS': '2', 'MKL_NUM_THREADS': '8'}
    >>> apply_thread_cap(env)
    2
    >>> env['OMP_NUM_THREADS'], env['MKL_NUM_THREADS']
    ('2', '8')
    >>> apply_thread_cap({}) is None
    True
    """
    environ = os.environ if environ is None else environ
    threads = environ.get('MSTGCN_THREADS')
    if not threads:
        return None
    threads = int(threads)
    if threads < 1:
        raise ValueError('MSTGCN_THREADS must be a positive integer, got %r' % threads)
    for variable in THREAD_VARIABLES:
        environ.setdefault(variable, str(threads))
    return threads
