"""Personality detection distilled from LLM post analyses and label explanations."""

from .config import LLMConfig, RunConfig, TrainerConfig
from .contrastive import ContrastiveBatch, ContrastiveConfig, ProjectionHead, cosine_sim, info_nce_multi_positive, project
from .corpus import (
    DatasetSplit,
    TraitLabels,
    UserRecord,
    class_stats,
    limit_posts,
    mask_label_words,
    parse_dataset,
    split_dataset,
    truncate_post,
)
from .encoder import EncoderConfig, PretrainedEncoder, TinyEncoder, build_encoder, mean_pool_user
from .evaluation import EvalReport, evaluate, macro_f1, predict
from .labelspace import LabelConfig, embed_labels, soft_label, soft_labels
from .trainer import (
    Checkpoint,
    ClassifierHeads,
    PersonalityDetector,
    classify,
    detection_loss,
    fit,
    load_checkpoint,
    save_checkpoint,
    total_loss,
)

__version__ = "0.1.0"
