"""regionkit: region features, region tokens, retrieval detection, and a synthetic benchmark world."""

from .gridops import FeatureMap, Kernel, bilinear_resize, concat_channels, conv2d, deconv2d
from .roialign import Box, RoiConfig, roi_align, roi_align_pooled
from .pyramid import PyramidConfig, SimpleFPParams, aux_fuse, simple_fp
from .regionenc import (
    Connector,
    HybridRegionFeature,
    RegionToken,
    connector_backward,
    connector_forward,
    extract_region_features,
    fuse_hybrid,
    positional_embedding,
    region_tokens,
)
from .tokenproto import (
    BareRegionRef,
    GroundedResponse,
    GroundedSpan,
    ParseError,
    RegionTokenSequence,
    Text,
    bindings,
    build_input_sequence,
    parse_grounded,
    serialize_grounded,
)
from .retrieval import (
    CategoryQuery,
    Detection,
    decode_detections,
    detect_then_count,
    grounded_to_detections,
    score_regions,
)
from .simworld import (
    EncoderConfig,
    ProposalSimConfig,
    Scene,
    SceneConfig,
    generate_scene,
    make_training_set,
    simulate_opn,
    toy_encode,
    vocabulary,
)
from .metrics import EvalReport, average_precision, box_recall, coco_map, counting_accuracy, iou
from .config import ExperimentConfig
from .training import FreezeSchedule, ModelParams, TrainingDivergence, grad_check, train
from .baseline import regression_baseline_eval, train_baseline
from .experiments import run_ablations, run_benchmark

__version__ = "0.1.0"
