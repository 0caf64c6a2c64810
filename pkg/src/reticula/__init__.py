"""Automatic annotation of axoplasmic reticula in serial-section EM stacks.

Pipeline: bilateral filter -> Laplacian sharpening -> dual-pass bounded
region growing -> cross-slice tracking, plus evaluation against ground
truth and a synthetic phantom generator.
"""

from .annotations import AnnotationSet, Component, Source, Status, TrackedObject
from .config import PipelineConfig, load_config, reference_config
from .detect import GrowParams, detect_slice, detect_volume, grow_regions, merge_overlapping
from .evaluate import ConfusionCounts, MatchCriterion, match_annotations, precision, recall
from .filters import BilateralParams, bilateral_filter_slice, filter_volume, laplacian_sharpen_slice
from .phantom import PhantomSpec, generate_phantom
from .track import TrackParams, match_in_adjacent, rescue_grow, track_volume
from .volume import StackManifest, Volume, load_stack, save_stack

__version__ = "0.1.0"
