# coding=utf-8
"""Multi-scale spatial temporal graph convolutional networks for skeleton action recognition."""

# Licence: BSD 3 clause

from .misc import apply_thread_cap

# numpy reads its thread variables when first imported
apply_thread_cap()

from .errors import *  # noqa: E402
from .what import What, whatable, what2id  # noqa: E402
from .parsers import PresetSpec, parse_preset, parse_topology  # noqa: E402
from .registry import PRESETS, PresetRegistry  # noqa: E402
from .engine import Parameter, Tensor, backward, get_precision, no_grad, precision, set_precision  # noqa: E402
from .graph import PartitionedAdjacency, SkeletonTopology, build_topology  # noqa: E402
from .blocks import BlockSpec, MsGc, MtGc, StGcBlock, StrGc  # noqa: E402
from .network import (MstGcn, NetworkConfig, build_network, count_parameters, load_checkpoint,  # noqa: E402
                      preset_blocks, probe_receptive_field, save_checkpoint)
from .data import DataConfig, SkeletonDataset, SkeletonSequence, generate_synthetic, load_dataset  # noqa: E402
from .training import TrainConfig, evaluate, fit, fuse_scores, lr_at_epoch  # noqa: E402
from .config import RunConfig, load_run_config  # noqa: E402

__version__ = '0.1.0dev0'
