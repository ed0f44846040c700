# coding=utf-8
"""Shared fixtures and reference implementations for the test-suite."""

# Licence: BSD 3 clause

import numpy as np
import pytest

from ..blocks import BlockSpec
from ..engine import precision
from ..graph import PartitionedAdjacency, build_topology
from ..network import NetworkConfig, build_network


@pytest.fixture(autouse=True)
def float64():
    """Every test runs in 64-bit precision unless it switches explicitly."""
    with precision('float64'):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def chain5():
    return build_topology('chain:5')


@pytest.fixture
def chain9():
    return build_topology('chain:9')


@pytest.fixture
def star6():
    return build_topology('star:6')


@pytest.fixture
def adjacency5(chain5):
    return PartitionedAdjacency(chain5)


def tiny_blocks(in_channels=4, width=8, s=2):
    """A plain block followed by a multi-scale (MS-GC + MT-GC) block."""
    return [BlockSpec(in_channels, width, has_residual=False),
            BlockSpec(width, width, spatial_kind='ms', temporal_kind='mt', s=s)]


@pytest.fixture
def tiny_config():
    return NetworkConfig(tiny_blocks(), topology='chain:5', num_classes=3, in_channels=4, max_persons=1,
                         seed=7, strict=False)


@pytest.fixture
def tiny_net(tiny_config):
    return build_network(tiny_config)


# --- Oracles

def numeric_gradient(loss, array, h=1e-5):
    """Central finite differences of a scalar function with respect to an array, perturbed in place."""
    grad = np.zeros(array.shape)
    for index in np.ndindex(*array.shape):
        old = array[index]
        array[index] = old + h
        up = loss()
        array[index] = old - h
        down = loss()
        array[index] = old
        grad[index] = (up - down) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    scale = max(np.abs(analytic).max(initial=0), np.abs(numeric).max(initial=0), floor)
    return np.abs(analytic - numeric).max(initial=0) / scale


def temporal_conv_oracle(x, w, b, stride=1):
    """Direct loops over the definition: zero padding K // 2, output frame t reads input t * stride + k - K // 2."""
    n, _, t_in, v = x.shape
    c_out, c_in, k = w.shape
    pad = k // 2
    t_out = (t_in - 1) // stride + 1
    out = np.zeros((n, c_out, t_out, v))
    for t in range(t_out):
        for dk in range(k):
            source = t * stride + dk - pad
            if 0 <= source < t_in:
                out[:, :, t] += np.einsum('oi,niv->nov', w[:, :, dk], x[:, :, source])
    return out + b[None, :, None, None]


def spatial_conv_oracle(x, weights, adjacency, bias):
    """sum_p W_p X A_p + b, with the (already masked) subset matrices A_p."""
    out = sum(np.einsum('oi,nitw,wv->notv', w, x, a) for w, a in zip(weights, adjacency))
    return out + bias[None, :, None, None]


def hop_ball(topo, source, radius):
    return sorted(int(v) for v in np.flatnonzero(topo.distances[source] <= radius))
