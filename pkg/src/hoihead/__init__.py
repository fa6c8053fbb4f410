"""Classifier-side machinery for detection-free verb-object recognition.

The package covers the full head-side pipeline at desk scale: compositional
class taxonomies, semantic embedding tables and classifier initialization,
the sign-label log-sum-exp loss with closed-form gradients plus standard
baselines, long-tailed dataset synthesis and oversampling, head training with
cosine warm restarts, AP/mAP and few-shot-band evaluation, box-masked CLS
attention, and an experiment harness with a CLI.
"""

from .attention import (
    AttentionInput,
    PatchGrid,
    PatchMask,
    combine_detection_scores,
    masked_cls_attention,
    patch_mask,
)
from .classifier import (
    LinearClassifier,
    forward_logits,
    forward_logits_matrix,
    init_classifier,
    load_classifier,
    save_classifier,
)
from .data import (
    Dataset,
    DatasetSpec,
    generate_dataset,
    load_dataset,
    oversample_epoch,
    save_dataset,
    scaled_min_count,
)
from .embeddings import (
    EmbeddingTable,
    compositional_embeddings,
    load_embeddings,
    normalize_rows,
    save_embeddings,
    unit_rows,
)
from .evaluation import (
    Box,
    MeanApResult,
    PairPrediction,
    PairTruth,
    UndefinedAveragePrecision,
    average_precision,
    iou,
    match_pairs,
    mean_ap,
)
from .experiment import (
    DataConfig,
    EmbeddingConfig,
    ExperimentConfig,
    TaxonomyConfig,
    evaluate_classifier,
    run_experiment,
)
from .losses import (
    LossResult,
    baseline_loss,
    batch_loss,
    evaluate_loss,
    lse_sign_loss,
    positive_weights_from_counts,
    stable_log1p_sum_exp,
)
from .taxonomy import (
    FrequencyBands,
    Taxonomy,
    build_taxonomy,
    load_taxonomy,
    prompt_for,
    save_taxonomy,
    tag_frequency_bands,
)
from .training import TrainConfig, TrainReport, TrainingDiverged, lr_at, train

__version__ = "0.1.0"
