"""Separation-guided online speaker diarization with its evaluation stack."""

from .core import ActivityMatrix, Annotation, AudioWindow, PipelineConfig, Segment, binarize, crop, overlap_regions
from .metrics import DerReport, SepScore, all_outputs_eval, der, pis_eval, pit_si_sdr, si_sdr
from .stitch import OnlineDiarizer, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "ActivityMatrix", "Annotation", "AudioWindow", "PipelineConfig", "Segment",
    "binarize", "crop", "overlap_regions",
    "DerReport", "SepScore", "all_outputs_eval", "der", "pis_eval", "pit_si_sdr", "si_sdr",
    "OnlineDiarizer", "run_pipeline",
]
