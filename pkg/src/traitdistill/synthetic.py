"""Synthetic personality corpus with planted stylistic markers.

Every trait pole owns a small set of invented marker words.  A user's posts
mix filler words, an optional topic word and one marker per dimension, drawn
mostly (not always) from the user's own poles.  The matching "analyses"
never repeat a marker's surface form; instead they describe its pole in
words (``"the feeling seems warm"``), the way an LLM would paraphrase style
into an explanation.  The semantic analysis additionally names the post's
topic, a label-irrelevant signal: a little contrastive weight teaches the
encoder the marker/descriptor link, too much spends capacity on topics.

:class:`SyntheticLLM` answers the package's prompts from this generator, so
the full augment -> train -> evaluate pipeline can run without a network.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .augmenter.cache import text_hash
from .augmenter.generation import AspectAnalyses, LabelDescriptionSet
from .augmenter.prompts import FORMAT_CLAUSE, POST_INSTRUCTION, POST_PROMPT_VERSION, build_label_prompt
from .contrastive import ASPECTS
from .corpus import POLE_NAMES, TraitLabels, UserRecord

_LETTERS = "abcdefghijklmnopqrstuvwxyz"

_ASPECT_FRAMES = {
    "semantic": "the content reads as {}",
    "sentiment": "the feeling seems {}",
    "linguistic": "the word choice sounds {}",
}

# what an LLM "knows" about each pole: one descriptor per aspect
POLE_DESCRIPTORS = (
    (("reserved", "calm", "measured"), ("outgoing", "excited", "exclamatory")),
    (("concrete", "steady", "literal"), ("abstract", "dreamy", "metaphorical")),
    (("logical", "detached", "technical"), ("caring", "warm", "affectionate")),
    (("spontaneous", "playful", "tentative"), ("organized", "decisive", "definitive")),
)


def _word(rng: random.Random, length: int) -> str:
    return "".join(rng.choice(_LETTERS) for _ in range(length))


@dataclass
class SyntheticSpec:
    n_users: int = 200
    posts_per_user: int = 8
    noise_vocab: int = 3000
    noise_words: int = 12
    markers_per_pole: int = 40
    marker_rate: float = 1.0
    marker_fidelity: float = 0.7
    n_topics: int = 200
    seed: int = 0


# Training settings the tiny hashed-trigram encoder needs on this corpus.  Its
# embedding table starts random and untrained, so the pretrained-encoder
# learning rates (1e-5 / 1e-3) barely move it in 20 epochs.
TINY_TRAIN_OVERRIDES = {
    "encoder.kind": "deterministic_tiny",
    "encoder.dim": 32,
    "train.lr_encoder": 3e-2,
    "train.lr_other": 1e-2,
    "train.epochs": 20,
    "train.patience": 5,
}


@dataclass
class SyntheticCorpus:
    records: list[UserRecord]
    augmentations: dict[str, AspectAnalyses]
    label_descriptions: LabelDescriptionSet
    markers: list[list[list[str]]]
    post_markers: dict[str, tuple[list, str | None]] = field(default_factory=dict)

    def analyses_for(self, post: str) -> dict[str, str] | None:
        aug = self.augmentations.get(text_hash(post))
        return None if aug is None else {a: getattr(aug, a) for a in ASPECTS}


def _analysis_texts(markers: list[tuple[str, int, int]], topic: str | None = None) -> dict[str, str]:
    """Analyses restating each ``(word, dim, pole)`` marker with its pole's
    descriptor for the aspect; the semantic one also names the topic."""
    if not markers:
        out = {a: _ASPECT_FRAMES[a].format("neutral") for a in ASPECTS}
    else:
        out = {
            a: "; ".join(_ASPECT_FRAMES[a].format(POLE_DESCRIPTORS[t][j][k]) for _, t, j in markers)
            for k, a in enumerate(ASPECTS)
        }
    if topic:
        out["semantic"] = f"a post about {topic}; " + out["semantic"]
    return out


def make_corpus(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticCorpus:
    rng = random.Random(spec.seed)
    seen: set[str] = set()

    def fresh(length: int) -> str:
        while True:
            w = _word(rng, length)
            if w not in seen:
                seen.add(w)
                return w

    markers = [[[fresh(7) for _ in range(spec.markers_per_pole)] for _ in range(2)] for _ in range(4)]
    noise = [fresh(rng.choice((5, 6, 7))) for _ in range(spec.noise_vocab)]
    topics = [fresh(8) for _ in range(spec.n_topics)]

    records, augs, post_markers = [], {}, {}
    for u in range(spec.n_users):
        poles = tuple(rng.randrange(2) for _ in range(4))
        posts = []
        for _ in range(spec.posts_per_user):
            words = rng.sample(noise, spec.noise_words)
            used = []
            topic = rng.choice(topics) if topics else None
            if topic:
                words.insert(rng.randrange(len(words) + 1), topic)
            for t in range(4):
                if rng.random() < spec.marker_rate:
                    pole = poles[t] if rng.random() < spec.marker_fidelity else 1 - poles[t]
                    m = rng.choice(markers[t][pole])
                    used.append((m, t, pole))
                    words.insert(rng.randrange(len(words) + 1), m)
            post = " ".join(words)
            posts.append(post)
            post_markers[post] = (used, topic)
            texts = _analysis_texts(used, topic)
            augs[text_hash(post)] = AspectAnalyses(
                texts["semantic"], texts["sentiment"], texts["linguistic"],
                text_hash(post), "synthetic", POST_PROMPT_VERSION,
            )
        records.append(UserRecord(f"synth-{spec.seed}-{u}", posts, TraitLabels(poles)))

    entries = [
        [{a: f"a person who is {POLE_DESCRIPTORS[t][j][k]}" for k, a in enumerate(ASPECTS)} for j in range(2)]
        for t in range(4)
    ]
    return SyntheticCorpus(records, augs, LabelDescriptionSet(entries, POLE_NAMES), markers, post_markers)


class SyntheticLLM:
    """Chat client that answers post-analysis prompts for a synthetic corpus.

    Label-explanation prompts are answered with the corpus's label
    descriptions; anything else gets a fixed, unparseable reply.  ``calls``
    counts requests.
    """

    def __init__(self, corpus: SyntheticCorpus, model_id: str = "synthetic"):
        self.corpus = corpus
        self.model_id = model_id
        self.calls = 0
        self.usage = {"requests": 0, "prompt_tokens": 0, "completion_tokens": 0}

    def complete(self, prompt: str) -> str:
        self.calls += 1
        self.usage["requests"] += 1
        prefix = f"{POST_INSTRUCTION} post:"
        suffix = f"\n\n{FORMAT_CLAUSE}"
        if prompt.startswith(prefix) and prompt.endswith(suffix):
            post = prompt[len(prefix) : -len(suffix)]
            return json.dumps(_analysis_texts(*self.corpus.post_markers.get(post, ([], None))))
        descs = self.corpus.label_descriptions
        for t, dim_poles in enumerate(descs.poles):
            for j, pole in enumerate(dim_poles):
                if prompt == build_label_prompt(pole):
                    return json.dumps(descs.entries[t][j])
        return "I cannot answer that."
