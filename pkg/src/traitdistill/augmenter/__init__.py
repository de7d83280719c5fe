from .cache import CacheConflictError, GenerationCache, text_hash
from .client import ChatClient, LLMRequestError, NetworkDisabledError, OfflineClient, ReplayClient, TokenBucket
from .generation import (
    AspectAnalyses,
    LabelDescriptionSet,
    MissingAugmentation,
    augment_posts,
    generate_label_descriptions,
    generate_post_augmentation,
    llm_direct_detect,
    load_label_descriptions,
    read_augmentations,
    run_llm_baseline,
    sample_shots,
    save_label_descriptions,
    write_augmentations,
)
from .parsing import DetectionParseError, ParseError, parse_aspects, parse_mbti_code
from .prompts import build_detect_prompt, build_label_prompt, build_post_prompt
