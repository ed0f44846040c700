# coding=utf-8
"""Skeleton graphs: topologies, hop distances, the spatial configuration partition and normalization.

Partitioned adjacencies are oriented neighbour-to-root: entry (j, i) links neighbour j to
root i, so that right-multiplying features [..., V] by a subset matrix aggregates, at each
root joint, the features of its neighbours in that subset.
"""

# Licence: BSD 3 clause

from collections import deque

import numpy as np

from .errors import ConfigError, TopologyError
from .parsers import parse_topology

DEFAULT_ALPHA = 0.001
NORMALIZATIONS = ('as-printed', 'symmetric')
SUBSET_NAMES = ('root', 'centripetal', 'centrifugal')

# NTU RGB+D, 1-based joint numbering
NTU25_EDGES = ((1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
               (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14), (16, 15),
               (17, 1), (18, 17), (19, 18), (20, 19), (22, 23), (23, 8), (24, 25), (25, 12))
NTU25_CENTER = 21
NTU25_JOINTS = ('base of spine', 'middle of spine', 'neck', 'head',
                'left shoulder', 'left elbow', 'left wrist', 'left hand',
                'right shoulder', 'right elbow', 'right wrist', 'right hand',
                'left hip', 'left knee', 'left ankle', 'left foot',
                'right hip', 'right knee', 'right ankle', 'right foot',
                'spine', 'tip of left hand', 'left thumb', 'tip of right hand', 'right thumb')

# Kinetics-Skeleton (OpenPose 18 keypoints), 0-based
KINETICS18_EDGES = ((4, 3), (3, 2), (7, 6), (6, 5), (13, 12), (12, 11), (10, 9), (9, 8),
                    (11, 5), (8, 2), (5, 1), (2, 1), (0, 1), (15, 0), (14, 0), (17, 15), (16, 14))
KINETICS18_CENTER = 1
KINETICS18_JOINTS = ('nose', 'neck',
                     'right shoulder', 'right elbow', 'right wrist',
                     'left shoulder', 'left elbow', 'left wrist',
                     'right hip', 'right knee', 'right ankle',
                     'left hip', 'left knee', 'left ankle',
                     'right eye', 'left eye', 'right ear', 'left ear')


class SkeletonTopology(object):
    """A connected skeleton graph: joint count, undirected edges (0-based) and a center joint."""

    def __init__(self, kind, num_joints, edges, center, joint_names=None):
        super(SkeletonTopology, self).__init__()
        self.kind = kind
        self.num_joints = int(num_joints)
        self.edges = tuple((int(a), int(b)) for a, b in edges)
        self.center = int(center)
        self.joint_names = tuple(joint_names) if joint_names else tuple('joint %d' % v
                                                                        for v in range(self.num_joints))
        bad = sorted({v for edge in self.edges for v in edge if not 0 <= v < self.num_joints})
        if bad:
            raise TopologyError('edges reference joints outside [0, %d)' % self.num_joints, bad)
        loops = sorted({a for a, b in self.edges if a == b})
        if loops:
            raise TopologyError('self-loops are not allowed in the edge list', loops)
        if not 0 <= self.center < self.num_joints:
            raise TopologyError('center joint outside [0, %d)' % self.num_joints, [self.center])
        self._distances = hop_distances(self)

    def adjacency(self):
        """The symmetric 0/1 adjacency matrix A (no self-loops)."""
        a = np.zeros((self.num_joints, self.num_joints))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a

    def neighbors(self):
        """A list with the sorted neighbours of every joint."""
        nbrs = [set() for _ in range(self.num_joints)]
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return [sorted(n) for n in nbrs]

    @property
    def distances(self):
        return self._distances

    def parents(self):
        """For every joint, its neighbour nearest to the center (the center is its own parent).

        Ties (only possible in graphs with cycles) go to the lowest joint index.
        """
        to_center = self._distances[:, self.center]
        parents = []
        for v, nbrs in enumerate(self.neighbors()):
            closer = [u for u in nbrs if to_center[u] < to_center[v]]
            parents.append(min(closer) if closer else v)
        return parents

    def joint_table(self):
        """Rows (joint, name, parent or None for the center, neighbours) describing every joint.

        Examples
        --------
        >>> build_topology('chain:3').joint_table()[1]
        (1, 'joint 1', 0, [0, 2])
        """
        parents = self.parents()
        return [(v, name, None if parents[v] == v else parents[v], nbrs)
                for v, (name, nbrs) in enumerate(zip(self.joint_names, self.neighbors()))]

    def what(self):
        from .what import What
        return What('SkeletonTopology', {'kind': self.kind})

    def __repr__(self):
        return 'SkeletonTopology(%r, V=%d, center=%d)' % (self.kind, self.num_joints, self.center)


def hop_distances(topo):
    """All-pairs shortest path lengths (number of edges) by breadth first search.

    Examples
    --------
    >>> hop_distances(build_topology('chain:3'))[0, 2]
    2
    """
    nbrs = [[] for _ in range(topo.num_joints)]
    for i, j in topo.edges:
        nbrs[i].append(j)
        nbrs[j].append(i)
    dist = np.full((topo.num_joints, topo.num_joints), -1, dtype=np.int64)
    for source in range(topo.num_joints):
        dist[source, source] = 0
        queue = deque([source])
        while queue:
            v = queue.popleft()
            for u in nbrs[v]:
                if dist[source, u] < 0:
                    dist[source, u] = dist[source, v] + 1
                    queue.append(u)
        unreachable = np.flatnonzero(dist[source] < 0)
        if len(unreachable):
            raise TopologyError('disconnected skeleton graph, joints unreachable from joint %d' % source,
                                unreachable.tolist())
    return dist


def partition_spatial(topo, dists=None):
    """Splits the 1-hop neighbourhoods (self included) into root, centripetal and centrifugal subsets.

    For root i and neighbour j, entry (j, i) of exactly one subset is set:
    root if j == i or both are equally far from the center, centripetal if j is nearer
    to the center than i, centrifugal if farther.

    Returns
    -------
    A float array [3, V, V] with the 0/1 subset matrices in SUBSET_NAMES order.
    """
    dists = topo.distances if dists is None else dists
    to_center = dists[:, topo.center]
    subsets = np.zeros((3, topo.num_joints, topo.num_joints))
    for i in range(topo.num_joints):
        for j in np.flatnonzero(dists[i] <= 1):
            if j == i or to_center[j] == to_center[i]:
                subsets[0, j, i] = 1
            elif to_center[j] < to_center[i]:
                subsets[1, j, i] = 1
            else:
                subsets[2, j, i] = 1
    return subsets


def normalize_adjacency(a, alpha=DEFAULT_ALPHA, normalization='as-printed'):
    """Degree normalization with D_ii = sum_j A_ij + alpha.

    "as-printed" computes D^-1/2 A D^+1/2 (a similarity transform of A),
    "symmetric" computes D^-1/2 A D^-1/2.

    Examples
    --------
    >>> normalize_adjacency(np.array([[1.0]]))
    array([[1.]])
    >>> np.allclose(normalize_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]])), [[0, 1], [1, 0]])
    True
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigError('unknown normalization "%s", use one of %r' % (normalization, NORMALIZATIONS))
    a = np.asarray(a, dtype=np.float64)
    if (a < 0).any():
        raise ValueError('adjacency matrices must be non-negative')
    degrees = a.sum(axis=1) + alpha
    right = np.sqrt(degrees) if normalization == 'as-printed' else 1.0 / np.sqrt(degrees)
    return a / np.sqrt(degrees)[:, None] * right[None, :]


def build_topology(kind):
    """Builds one of the known skeletons: "ntu25", "kinetics18", "chain:<V>" or "star:<V>".

    Examples
    --------
    >>> topo = build_topology('ntu25')
    >>> topo.num_joints, len(topo.edges), topo.center
    (25, 24, 20)
    >>> build_topology('chain:3').edges
    ((0, 1), (1, 2))
    """
    family, num_joints = parse_topology(kind)
    if family == 'ntu25':
        return SkeletonTopology(kind, num_joints, [(a - 1, b - 1) for a, b in NTU25_EDGES],
                                NTU25_CENTER - 1, NTU25_JOINTS)
    if family == 'kinetics18':
        return SkeletonTopology(kind, num_joints, KINETICS18_EDGES, KINETICS18_CENTER, KINETICS18_JOINTS)
    if family == 'chain':
        return SkeletonTopology(kind, num_joints, [(v, v + 1) for v in range(num_joints - 1)], 0)
    return SkeletonTopology(kind, num_joints, [(0, v) for v in range(1, num_joints)], 0)


class PartitionedAdjacency(object):
    """The three normalized subset matrices of a topology (frozen, shared by every graph convolution).

    Attributes
    ----------
    raw : array [3, V, V]
      The 0/1 subset matrices; they sum to A + I.

    subsets : array [3, V, V]
      Each raw subset normalized on its own.
    """

    def __init__(self, topo, alpha=DEFAULT_ALPHA, normalization='as-printed'):
        super(PartitionedAdjacency, self).__init__()
        self.topology = topo
        self.alpha = alpha
        self.normalization = normalization
        self.raw = partition_spatial(topo)
        self.subsets = np.stack([normalize_adjacency(a, alpha, normalization) for a in self.raw])
        self.subsets.setflags(write=False)
        self.raw.setflags(write=False)

    @property
    def num_joints(self):
        return self.topology.num_joints

    def __len__(self):
        return len(self.subsets)

    def __getitem__(self, p):
        return self.subsets[p]

    def combined(self):
        return self.subsets.sum(axis=0)
