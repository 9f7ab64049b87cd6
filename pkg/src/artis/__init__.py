"""One-shot alignment of task videos: FHDOF descriptors, sequence matching and TPDF."""
from .config import RunConfig
from .evaluation import (
    CorrespondenceArea, EvalReport, GroundTruthSegment, build_areas, load_labels, save_labels, score,
)
from .exceptions import FormatError, ValidationError
from .fhdof import DescriptorSequence, FeatureGrid, FHDOFExtractor, PatchNormExtractor
from .io import (
    FeatureVectorSequence, FrameSequence, load_feature_vectors, load_frames,
    save_feature_vectors, save_frames,
)
from .optflow import FlowField, FlowParams, estimate_flow
from .pipeline import run_match
from .seqmatch import MatchSegment, SequenceMatcher, SimilarityMatrix
from .tpdf import CandidateSet, RankPooler, TPDFMatcher

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "CorrespondenceArea", "EvalReport", "GroundTruthSegment", "build_areas",
    "load_labels", "save_labels", "score", "FormatError", "ValidationError",
    "DescriptorSequence", "FeatureGrid", "FHDOFExtractor", "PatchNormExtractor",
    "FeatureVectorSequence", "FrameSequence", "load_feature_vectors", "load_frames",
    "save_feature_vectors", "save_frames", "FlowField", "FlowParams", "estimate_flow",
    "run_match", "MatchSegment", "SequenceMatcher", "SimilarityMatrix", "CandidateSet",
    "RankPooler", "TPDFMatcher",
]
