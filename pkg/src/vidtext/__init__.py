"""Video action classification with language as the interchange format.

Perception backends turn a video into textual descriptors (frame captions,
speech transcript, audio tags); a chat-model backend ranks candidate action
labels from those descriptors; an evaluation harness scores the predictions.
"""

from .catalog import VideoRecord, load_catalog
from .config import RunConfig
from .evaluation import EvalReport, compute_metrics, sample_subset, topk_hit
from .labels import LabelSet, build_label_set, load_label_set, match_label, normalize_label
from .parsing import (
    ParseStatus,
    RankedPrediction,
    finalize_prediction,
    parse_function_call,
    parse_json_labels,
    parse_numbered_list,
)
from .perception import (
    DescriptorBundle,
    DescriptorCache,
    MockSidecarClient,
    PerceptionConfig,
    SidecarClient,
    TagVocabulary,
    cosine_similarity,
    fetch_descriptors,
    plan_frame_indices,
    select_audio_tags,
)
from .prompts import ContextLevel, Dialect, PromptSpec, build_prompt, render_clues
from .reasoning import BackendProfile, RawResponse, ReasoningGateway, build_request

__version__ = "0.1.0"

__all__ = [
    "BackendProfile",
    "ContextLevel",
    "DescriptorBundle",
    "DescriptorCache",
    "Dialect",
    "EvalReport",
    "LabelSet",
    "MockSidecarClient",
    "ParseStatus",
    "PerceptionConfig",
    "PromptSpec",
    "RankedPrediction",
    "RawResponse",
    "ReasoningGateway",
    "RunConfig",
    "SidecarClient",
    "TagVocabulary",
    "VideoRecord",
    "build_label_set",
    "build_prompt",
    "build_request",
    "compute_metrics",
    "cosine_similarity",
    "fetch_descriptors",
    "finalize_prediction",
    "load_catalog",
    "load_label_set",
    "match_label",
    "normalize_label",
    "parse_function_call",
    "parse_json_labels",
    "parse_numbered_list",
    "plan_frame_indices",
    "render_clues",
    "sample_subset",
    "select_audio_tags",
    "topk_hit",
]
