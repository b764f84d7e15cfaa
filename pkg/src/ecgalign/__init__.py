"""Contrastive ECG-report alignment with waveform-grounded reporting.

The package pairs a 1-D transformer ECG encoder with a text encoder
trained contrastively on report pairs, measures waveform intervals with
a causal delineator, folds those measurements back into report text,
maps embeddings to a diagnosis taxonomy, and renders validated LaTeX
reports. Everything is reachable from the ``ecgalign`` CLI.
"""

from .delineation import (
    BeatAnnotations,
    WaveformFeatures,
    augment_report,
    delineate,
    detect_r_peaks,
    features_to_text,
    measure,
    qtc_bazett,
)
from .errors import EcgAlignError
from .model import (
    DualEncoderModel,
    ModelConfig,
    captioning_loss,
    contrastive_loss,
    generate_caption,
    init_params,
    total_loss,
)
from .signal_io import (
    DatasetManifest,
    EcgRecord,
    ManifestEntry,
    PatientMeta,
    load_manifest,
    load_record,
    sanitize,
    save_record,
    standardize,
)
from .text import Vocab, build_vocab, detokenize, normalize, tokenize
from .train import (
    AugmentationSpec,
    Checkpoint,
    TrainConfig,
    adamw_step,
    augment,
    grad_check,
    load_checkpoint,
    model_from_checkpoint,
    model_to_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationSpec",
    "BeatAnnotations",
    "Checkpoint",
    "DatasetManifest",
    "DualEncoderModel",
    "EcgAlignError",
    "EcgRecord",
    "ManifestEntry",
    "ModelConfig",
    "PatientMeta",
    "TrainConfig",
    "Vocab",
    "WaveformFeatures",
    "adamw_step",
    "augment",
    "augment_report",
    "build_vocab",
    "captioning_loss",
    "contrastive_loss",
    "delineate",
    "detect_r_peaks",
    "detokenize",
    "features_to_text",
    "generate_caption",
    "grad_check",
    "init_params",
    "load_checkpoint",
    "load_manifest",
    "load_record",
    "measure",
    "model_from_checkpoint",
    "model_to_checkpoint",
    "normalize",
    "qtc_bazett",
    "sanitize",
    "save_checkpoint",
    "save_record",
    "standardize",
    "tokenize",
    "total_loss",
    "train",
    "__version__",
]
