"""Generation of post analyses, label explanations and direct LLM predictions."""

from __future__ import annotations

import json
import logging
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from ..contrastive import ASPECTS
from ..corpus import DIMENSIONS, POLE_NAMES, TraitLabels, UserRecord
from .cache import GenerationCache, text_hash
from .client import LLMRequestError
from .parsing import DetectionParseError, ParseError, parse_aspects, parse_mbti_code
from .prompts import (
    DETECT_PROMPT_VERSION,
    LABEL_PROMPT_VERSION,
    POST_PROMPT_VERSION,
    build_detect_prompt,
    build_label_prompt,
    build_post_prompt,
)

logger = logging.getLogger(__name__)


class MissingAugmentation(RuntimeError):
    def __init__(self, post_hash: str, reason: str):
        super().__init__(f"no augmentation for post {post_hash[:12]}: {reason}")
        self.post_hash = post_hash
        self.reason = reason


@dataclass(frozen=True)
class AspectAnalyses:
    semantic: str
    sentiment: str
    linguistic: str
    source_post_hash: str = ""
    model_id: str = ""
    prompt_version: str = POST_PROMPT_VERSION

    def texts(self, aspects: Sequence[str] = ASPECTS) -> list[str]:
        return [getattr(self, a) for a in aspects]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "AspectAnalyses":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


def _cached_generate(prompt: str, key_text: str, version: str, client, cache: GenerationCache | None) -> tuple[str, dict]:
    key = (version, client.model_id, text_hash(key_text))
    entry = cache.get(key) if cache is not None else None
    if entry is not None and entry.get("parsed"):
        return entry["response"], entry["parsed"]
    try:
        raw = client.complete(prompt)
    except LLMRequestError as exc:
        raise MissingAugmentation(key[2], str(exc)) from exc
    parsed = parse_aspects(raw)
    if cache is not None:
        cache.put(key, raw, parsed)
    return raw, parsed


def generate_post_augmentation(post: str, client, cache: GenerationCache | None = None) -> AspectAnalyses:
    _, parsed = _cached_generate(build_post_prompt(post), post, POST_PROMPT_VERSION, client, cache)
    return AspectAnalyses(
        parsed["semantic"], parsed["sentiment"], parsed["linguistic"],
        text_hash(post), client.model_id, POST_PROMPT_VERSION,
    )


def augment_posts(
    posts: Iterable[str], client, cache: GenerationCache | None = None, workers: int = 4
) -> tuple[dict[str, AspectAnalyses], list[dict]]:
    """Augment every distinct post.

    Returns ``(by_hash, missing)``: analyses keyed by post hash and a list of
    ``{"post_hash", "reason"}`` records for posts that could not be augmented.
    """
    unique = list(dict.fromkeys(posts))
    results: dict[str, AspectAnalyses] = {}
    missing: list[dict] = []
    lock = threading.Lock()

    def work(post: str):
        try:
            aug = generate_post_augmentation(post, client, cache)
        except MissingAugmentation as exc:
            with lock:
                missing.append({"post_hash": exc.post_hash, "reason": exc.reason})
            return
        except ParseError as exc:
            with lock:
                missing.append({"post_hash": text_hash(post), "reason": f"unparseable response: {exc.raw[:200]!r}"})
            return
        with lock:
            results[aug.source_post_hash] = aug

    if workers <= 1:
        for p in unique:
            work(p)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, unique))
    # deterministic ordering regardless of completion order
    order = {text_hash(p): n for n, p in enumerate(unique)}
    missing.sort(key=lambda m: order[m["post_hash"]])
    results = dict(sorted(results.items(), key=lambda kv: order[kv[0]]))
    return results, missing


def write_augmentations(augs: dict[str, AspectAnalyses], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in augs.values():
            fh.write(json.dumps(a.to_json(), ensure_ascii=False) + "\n")


def read_augmentations(paths: str | Path | Sequence[str | Path]) -> dict[str, AspectAnalyses]:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    out = {}
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    a = AspectAnalyses.from_json(json.loads(line))
                    out[a.source_post_hash] = a
    return out


# ---------------------------------------------------------------------------
# label explanations


@dataclass
class LabelDescriptionSet:
    """``entries[t][j]`` maps aspect name to explanation text for pole ``j`` of
    dimension ``t``; ``poles[t][j]`` is the pole's name."""

    entries: list[list[dict[str, str]]]
    poles: tuple = POLE_NAMES

    def __post_init__(self):
        for t, dim in enumerate(self.entries):
            for j, entry in enumerate(dim):
                for aspect in ASPECTS:
                    if not entry.get(aspect, "").strip():
                        raise ValueError(f"empty {aspect} description for {self.poles[t][j]}")

    def texts(self) -> list[str]:
        return [e[a] for dim in self.entries for e in dim for a in ASPECTS]

    def to_json(self) -> dict:
        return {
            DIMENSIONS[t]: {self.poles[t][j]: dict(self.entries[t][j]) for j in range(2)}
            for t in range(len(self.entries))
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabelDescriptionSet":
        entries, poles = [], []
        for t, dim in enumerate(DIMENSIONS):
            if dim not in obj:
                raise ValueError(f"label descriptions lack dimension {dim}")
            names = tuple(obj[dim])
            if len(names) != 2:
                raise ValueError(f"dimension {dim} must have exactly two poles")
            # keep the canonical pole order when the names are the standard ones
            if set(names) == set(POLE_NAMES[t]):
                names = POLE_NAMES[t]
            poles.append(names)
            entries.append([{a: obj[dim][n][a] for a in ASPECTS} for n in names])
        return cls(entries, tuple(poles))


def save_label_descriptions(descs: LabelDescriptionSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(descs.to_json(), fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def load_label_descriptions(path: str | Path | None = None) -> LabelDescriptionSet:
    """Load a label-description file; with no path, the bundled default."""
    if path is None:
        text = resources.files("traitdistill.data").joinpath("label_descriptions.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return LabelDescriptionSet.from_json(json.loads(text))


def generate_label_descriptions(
    client, cache: GenerationCache | None = None, taxonomy=POLE_NAMES
) -> LabelDescriptionSet:
    entries = []
    for dim_poles in taxonomy:
        row = []
        for pole in dim_poles:
            prompt = build_label_prompt(pole)
            _, parsed = _cached_generate(prompt, prompt, LABEL_PROMPT_VERSION, client, cache)
            row.append({a: parsed[a] for a in ASPECTS})
        entries.append(row)
    return LabelDescriptionSet(entries, tuple(tuple(p) for p in taxonomy))


# ---------------------------------------------------------------------------
# direct detection baseline


def sample_shots(train: Sequence[UserRecord], seed: int = 0, k: int = 3, max_posts: int = 50):
    rng = random.Random(seed)
    picked = rng.sample(list(train), k)
    return [(r.posts[:max_posts], r.labels.code) for r in picked]


def llm_direct_detect(
    posts: Sequence[str],
    client,
    mode: str = "zero_shot",
    shots: Sequence[tuple[Sequence[str], str]] = (),
    cache: GenerationCache | None = None,
) -> TraitLabels:
    if mode == "few_shot" and len(shots) != 3:
        raise ValueError("few-shot detection needs exactly 3 example users")
    if not posts:
        raise ValueError("no posts to classify")
    prompt = build_detect_prompt(posts, mode, shots)
    key = (f"{DETECT_PROMPT_VERSION}-{mode}", client.model_id, text_hash(prompt))
    entry = cache.get(key) if cache is not None else None
    if entry is not None:
        raw = entry["response"]
    else:
        try:
            raw = client.complete(prompt)
        except LLMRequestError as exc:
            raise MissingAugmentation(key[2], str(exc)) from exc
        if cache is not None:
            cache.put(key, raw, None)
    return parse_mbti_code(raw)


def run_llm_baseline(
    records: Sequence[UserRecord],
    client,
    mode: str = "zero_shot",
    shots=(),
    cache: GenerationCache | None = None,
):
    """Score direct LLM detection on ``records``.

    Unparseable answers count as wrong on every dimension.  Returns
    ``(EvalReport, failures)`` where ``failures`` lists the affected users.
    """
    from ..evaluation import EvalReport

    preds, golds, failures = [], [], []
    for rec in records:
        gold = rec.labels.poles
        try:
            pred = llm_direct_detect(rec.posts, client, mode, shots, cache).poles
        except (DetectionParseError, MissingAugmentation) as exc:
            failures.append({"user_id": rec.user_id, "error": type(exc).__name__})
            pred = tuple(1 - g for g in gold)
        preds.append(pred)
        golds.append(gold)
    return EvalReport.from_predictions(preds, golds), failures
