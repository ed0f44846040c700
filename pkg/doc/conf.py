# -*- coding: utf-8 -*-
#
# mstgcn documentation build configuration file.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

import mstgcn  # noqa: E402
from mstgcn.graph import build_topology  # noqa: E402

TOPOLOGIES = (('ntu25', 'NTU RGB+D (25 joints)'), ('kinetics18', 'Kinetics-Skeleton (18 joints)'))


def write_topology_reference(path):
    """Renders the joint tables and edge lists of the named skeletons into an rst page."""
    lines = ['Skeleton topologies', '===================', '',
             'Joints are numbered from 0 (NTU RGB+D files number them from 1). The parent of a joint is',
             'its neighbour nearest to the center joint; bones point from the parent to the joint.', '']
    for kind, title in TOPOLOGIES:
        topo = build_topology(kind)
        lines += [title, '-' * len(title), '',
                  'Topology string ``%s``, center joint %d (%s).' % (kind, topo.center, topo.joint_names[topo.center]),
                  '', 'Edges: %s.' % ', '.join('%d-%d' % edge for edge in topo.edges), '',
                  '.. list-table::', '   :header-rows: 1', '',
                  '   * - joint', '     - body part', '     - parent', '     - neighbours']
        for joint, name, parent, neighbours in topo.joint_table():
            lines += ['   * - %d' % joint, '     - %s' % name,
                      '     - %s' % ('(center)' if parent is None else parent),
                      '     - %s' % ', '.join(str(v) for v in neighbours)]
        lines.append('')
    with open(path, 'w') as writer:
        writer.write('\n'.join(lines))


write_topology_reference(os.path.join(os.path.dirname(os.path.abspath(__file__)), 'topologies.rst'))

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'mstgcn'
copyright = u'2026, the mstgcn developers (BSD License)'
author = u'the mstgcn developers'

version = mstgcn.__version__
release = version

language = 'en'
exclude_patterns = ['_build']
pygments_style = 'sphinx'
todo_include_todos = False

# numpydoc style docstrings
napoleon_google_docstring = False
napoleon_numpy_docstring = True
autodoc_member_order = 'bysource'

html_theme = 'alabaster'
html_static_path = []
htmlhelp_basename = 'mstgcndoc'

latex_documents = [
    (master_doc, 'mstgcn.tex', u'mstgcn Documentation', author, 'manual'),
]

man_pages = [
    (master_doc, 'mstgcn', u'mstgcn Documentation', [author], 1)
]
