"""Desk-scale spatio-temporal video grounding.

Given a video and a natural-language prompt, the model predicts a tube: a
start/end frame interval plus one bounding box per frame inside it. The
package bundles the cross-modal transformer, losses, metrics, dataset
adapters, a synthetic data generator, and a train/eval/infer CLI.
"""

from .backbones import TextBackbone, TextFeatures, VisionBackbone, VisualFeatureMap
from .datasets import (
    DatasetManifest,
    ManifestEntry,
    load_canonical,
    load_hcstvg,
    load_vidstg,
    load_youcook_interactions,
    sample_frames,
    save_canonical,
)
from .decoder import CrossModalDecoder
from .encoder import CrossModalEncoder
from .errors import (
    ConfigurationError,
    DataError,
    InvalidBoxError,
    InvalidIntervalError,
    NoValidIntervalError,
    NumericalError,
    TokenizerError,
    VideoGroundError,
)
from .harness import (
    RunConfig,
    ablation_matrix,
    evaluate,
    infer,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .heads import (
    BoxHead,
    FramePredictions,
    TemporalDistributions,
    TemporalHead,
    extract_interval,
    extract_tube,
)
from .losses import GaussianHeatmaps, LossReport, make_heatmaps, temporal_kl_loss, total_loss
from .metrics import EvalReport, aggregate, pointing_game, temporal_iou, volumetric_iou
from .model import GroundingModel
from .queries import QuerySelector, QuerySet, temporal_positional_encoding
from .synthetic import SyntheticSpec, generate_synthetic, write_synthetic
from .tokenizer import Tokenizer
from .types import (
    BoundingBox,
    GroundingAnnotation,
    ModelConfig,
    SpatioTemporalTube,
    TemporalInterval,
    TextPrompt,
    VideoClip,
)

__version__ = "0.1.0"
