"""airtk: keyword-driven retrieval of sound-event intervals from audio.

Pipeline: WAV -> log-melspectrogram -> fixed-size patches -> feature
vectors -> one-vs-rest random forest -> 0.01 s probability timelines ->
merged intervals, scored with ROC AUC / MCC / accuracy / precision / F1.
"""

__version__ = "0.1.0"

from .audio_io import AudioClip, load_wav, save_wav, trim
from .dataset import (
    AugmentationRecipe,
    GroundTruthTimeline,
    LabelSet,
    ManifestEntry,
    Ontology,
    augment,
    balance_classes,
    build_eval_file,
    parse_manifest,
    split,
    write_manifest,
)
from .dsp import FrontendConfig, MelSpectrogram, Patch, cut_patches, export_spectrogram, melspectrogram
from .embedding import (
    EmbeddingSource,
    FeatureVector,
    builtin_source,
    load_external_embeddings,
    read_embeddings,
    stats_features,
    write_embeddings,
)
from .forest import DecisionTree, ForestModel, Hyperparameters, PatchPrediction, predict, predict_batch, train
from .forest import load as load_model
from .forest import save as save_model
from .metrics import ConfusionCounts, MetricsReport, MetricsRow, accuracy, confusion, f1, mcc, precision, recall, report, roc_auc
from .retrieval import ClassTimeline, IntervalSet, Query, evaluate_retrieval, extract_intervals, rasterize, resolve_query, retrieve
