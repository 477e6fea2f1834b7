"""Constrained fine-tuning toolkit for portrait stylization.

The package turns a pretrained face generator plus a handful of style
exemplars into a stylization model that keeps the input's identity, and
ships the surrounding machinery: latent encoders, pseudo-paired data
construction, reference inversion, layer mixing, evaluation metrics, a CLI
and an HTTP studio service.
"""

from .checkpoint import Checkpoint, checkpoint_hash, load_checkpoint, save_checkpoint
from .encoder import Encoder, EncoderTrainConfig, load_encoder, save_encoder, train_encoder
from .errors import (
    CheckpointError,
    ConfigError,
    FacestyleError,
    InvalidCodeError,
    InvalidImageError,
    InvalidParameterError,
    MetricError,
    NumericsError,
    RoleError,
)
from .generator import (
    Generator,
    GeneratorConfig,
    broadcast_w,
    load_generator,
    map_latent,
    mix_codes,
    sample_z,
    save_generator,
    synthesize,
    truncate,
)
from .latent import LatentCode, Space
from .losses import (
    FeatureNets,
    adversarial_d_loss,
    adversarial_g_loss,
    default_feature_nets,
    identity_loss,
    lpips,
    paired_loss,
    r1_penalty,
    semantic_loss,
    total_loss,
)
from .metrics import FeatureSet, FidExtractor, fid, identity_distance, perceptual_distance, semantic_distance
from .pseudo_pairs import PairDataset, build_pair_dataset, load_pair_dataset, verify_pair_dataset
from .finetune import FinetuneConfig, PretrainConfig, finetune, pretrain
from .inversion import ReferenceCache, SefaBasis, decode_v, embed_reference, invert, sefa_basis
from .stylize import MixSpec, StylePolicy, apply_mix, stylize_general, stylize_mixed, stylize_multimodal
from .workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "Encoder",
    "EncoderTrainConfig",
    "FacestyleError",
    "FeatureNets",
    "FeatureSet",
    "FidExtractor",
    "FinetuneConfig",
    "Generator",
    "GeneratorConfig",
    "InvalidCodeError",
    "InvalidImageError",
    "InvalidParameterError",
    "LatentCode",
    "MetricError",
    "MixSpec",
    "NumericsError",
    "PairDataset",
    "PretrainConfig",
    "ReferenceCache",
    "RoleError",
    "SefaBasis",
    "Space",
    "StylePolicy",
    "Workspace",
    "adversarial_d_loss",
    "adversarial_g_loss",
    "apply_mix",
    "broadcast_w",
    "build_pair_dataset",
    "checkpoint_hash",
    "decode_v",
    "default_feature_nets",
    "embed_reference",
    "fid",
    "finetune",
    "identity_distance",
    "identity_loss",
    "invert",
    "load_checkpoint",
    "load_encoder",
    "load_generator",
    "load_pair_dataset",
    "lpips",
    "map_latent",
    "mix_codes",
    "paired_loss",
    "perceptual_distance",
    "pretrain",
    "r1_penalty",
    "sample_z",
    "save_checkpoint",
    "save_encoder",
    "save_generator",
    "sefa_basis",
    "semantic_distance",
    "semantic_loss",
    "stylize_general",
    "stylize_mixed",
    "stylize_multimodal",
    "synthesize",
    "total_loss",
    "train_encoder",
    "truncate",
    "verify_pair_dataset",
]
