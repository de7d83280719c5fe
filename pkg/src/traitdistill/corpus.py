"""Dataset ingestion, preprocessing, splitting and class statistics.

Users are represented as :class:`UserRecord` objects holding an ordered list
of posts and four binary MBTI trait labels.  Three on-disk formats are
supported: the Kaggle ``mbti_1.csv`` dump, a Pandora-style directory
(``author_profiles.csv`` + a comments CSV), and the canonical JSONL format
written by this package.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

DIMENSIONS = ("I/E", "S/N", "T/F", "P/J")
POLE_LETTERS = (("I", "E"), ("S", "N"), ("T", "F"), ("P", "J"))
POLE_NAMES = (
    ("Introversion", "Extroversion"),
    ("Sensing", "iNtuition"),
    ("Thinking", "Feeling"),
    ("Perception", "Judging"),
)
MBTI_TYPES = tuple(a + b + c + d for a in "IE" for b in "SN" for c in "TF" for d in "PJ")

TYPE_TOKEN = "<type>"
MAX_WORDS = 70
MAX_POSTS = 50
DEFAULT_RATIOS = (0.6, 0.2, 0.2)


class CorpusError(ValueError):
    """Raised for malformed input data."""


class MalformedRecordError(CorpusError):
    def __init__(self, row: int, value: str, source: str = ""):
        self.row = row
        self.value = value
        where = f" in {source}" if source else ""
        super().__init__(f"row {row}{where}: {value!r} is not one of the 16 MBTI types")


@dataclass(frozen=True)
class TraitLabels:
    """Four binary trait labels; ``poles[t]`` is 0 for the first letter of
    ``POLE_LETTERS[t]`` and 1 for the second."""

    poles: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.poles) != 4 or any(p not in (0, 1) for p in self.poles):
            raise ValueError(f"expected 4 binary poles, got {self.poles!r}")

    @classmethod
    def from_code(cls, code: str) -> "TraitLabels":
        code = code.strip().upper()
        if code not in MBTI_TYPES:
            raise ValueError(f"{code!r} is not an MBTI type")
        return cls(tuple(POLE_LETTERS[t].index(ch) for t, ch in enumerate(code)))

    @property
    def code(self) -> str:
        return "".join(POLE_LETTERS[t][p] for t, p in enumerate(self.poles))

    def onehot(self) -> np.ndarray:
        out = np.zeros((4, 2))
        out[np.arange(4), list(self.poles)] = 1.0
        return out


@dataclass
class UserRecord:
    user_id: str
    posts: list[str]
    labels: TraitLabels

    def to_json(self) -> dict:
        return {"user_id": self.user_id, "posts": list(self.posts), "mbti": self.labels.code}

    @classmethod
    def from_json(cls, obj: dict) -> "UserRecord":
        return cls(str(obj["user_id"]), list(obj["posts"]), TraitLabels.from_code(obj["mbti"]))


@dataclass
class DatasetSplit:
    train: list[UserRecord]
    validation: list[UserRecord]
    test: list[UserRecord]
    seed: int
    ratios: tuple[float, float, float] = DEFAULT_RATIOS

    def items(self):
        return (("train", self.train), ("validation", self.validation), ("test", self.test))


# ---------------------------------------------------------------------------
# parsing


def _decode_type(value: str, row: int, source: str) -> TraitLabels:
    try:
        return TraitLabels.from_code(value)
    except ValueError:
        raise MalformedRecordError(row, value, source) from None


def _split_kaggle_posts(raw: str) -> list[str]:
    raw = raw.strip()
    # the public dump wraps every posts cell in single quotes
    if len(raw) >= 2 and raw[0] == "'" and raw[-1] == "'":
        raw = raw[1:-1]
    return [p.strip() for p in raw.split("|||") if p.strip()]


def read_kaggle_csv(path: str | Path) -> list[UserRecord]:
    csv.field_size_limit(min(sys.maxsize, 2**31 - 1))
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"type", "posts"} <= set(reader.fieldnames):
            raise CorpusError(f"{path}: expected columns 'type' and 'posts'")
        for i, row in enumerate(reader):
            labels = _decode_type(row["type"] or "", i, str(path))
            posts = _split_kaggle_posts(row["posts"] or "")
            if not posts:
                logger.warning("row %d of %s has no posts; skipped", i, path)
                continue
            records.append(UserRecord(f"kaggle-{i}", posts, labels))
    return records


def read_pandora_dir(path: str | Path) -> list[UserRecord]:
    """Read a Pandora-style directory.

    Expects ``author_profiles.csv`` (columns ``author``, ``mbti``) and one
    comments CSV (``all_comments_since_2015.csv`` or ``comments.csv``,
    columns ``author``, ``body``).  Authors without an MBTI entry are
    ignored; posts keep file order.
    """
    path = Path(path)
    csv.field_size_limit(min(sys.maxsize, 2**31 - 1))
    labels: dict[str, TraitLabels] = {}
    order: list[str] = []
    with open(path / "author_profiles.csv", encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.DictReader(fh)):
            mbti = (row.get("mbti") or "").strip()
            if not mbti or mbti.lower() == "nan":
                continue
            labels[row["author"]] = _decode_type(mbti, i, "author_profiles.csv")
            order.append(row["author"])
    for name in ("all_comments_since_2015.csv", "comments.csv"):
        comments = path / name
        if comments.exists():
            break
    else:
        raise CorpusError(f"{path}: no comments CSV found")
    posts: dict[str, list[str]] = {a: [] for a in order}
    with open(comments, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            author = row.get("author")
            body = (row.get("body") or "").strip()
            if author in posts and body:
                posts[author].append(body)
    records = []
    for author in order:
        if not posts[author]:
            logger.warning("pandora author %s has no posts; skipped", author)
            continue
        records.append(UserRecord(author, posts[author], labels[author]))
    return records


def read_jsonl(path: str | Path) -> list[UserRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            obj = json.loads(line)
            labels = _decode_type(obj.get("mbti", ""), i, str(path))
            posts = [p for p in obj.get("posts", []) if p]
            if not posts:
                logger.warning("line %d of %s has no posts; skipped", i, path)
                continue
            records.append(UserRecord(str(obj["user_id"]), posts, labels))
    return records


def write_jsonl(records: Iterable[UserRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def parse_dataset(path: str | Path, format: str) -> list[UserRecord]:
    readers = {"kaggle_csv": read_kaggle_csv, "pandora_dir": read_pandora_dir, "jsonl": read_jsonl}
    if format not in readers:
        raise ValueError(f"unknown format {format!r}; expected one of {sorted(readers)}")
    if not Path(path).exists():
        raise FileNotFoundError(path)
    return readers[format](path)


# ---------------------------------------------------------------------------
# preprocessing


def _lexicon_pattern(lexicon: Sequence[str]) -> re.Pattern:
    alternation = "|".join(re.escape(w) for w in sorted(set(lexicon), key=len, reverse=True))
    return re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)


_DEFAULT_PATTERN = _lexicon_pattern(MBTI_TYPES)


def mask_label_words(text: str, lexicon: Sequence[str] | None = None) -> str:
    pattern = _DEFAULT_PATTERN if lexicon is None else _lexicon_pattern(lexicon)
    return pattern.sub(TYPE_TOKEN, text)


def find_label_words(text: str, lexicon: Sequence[str] | None = None) -> list[str]:
    pattern = _DEFAULT_PATTERN if lexicon is None else _lexicon_pattern(lexicon)
    return pattern.findall(text)


def truncate_post(text: str, max_words: int = MAX_WORDS) -> str:
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    words = text.split()
    if len(words) <= max_words:
        return text
    return " ".join(words[:max_words])


def limit_posts(record: UserRecord, max_posts: int = MAX_POSTS) -> UserRecord:
    if len(record.posts) <= max_posts:
        return record
    return UserRecord(record.user_id, record.posts[:max_posts], record.labels)


def preprocess_text(
    text: str, max_words: int = MAX_WORDS, lexicon: Sequence[str] | None = None
) -> str:
    return truncate_post(mask_label_words(text, lexicon), max_words)


def preprocess_record(
    record: UserRecord,
    max_posts: int = MAX_POSTS,
    max_words: int = MAX_WORDS,
    extra_lexicon: Sequence[str] = (),
) -> UserRecord:
    lexicon = (*MBTI_TYPES, *extra_lexicon) if extra_lexicon else None
    limited = limit_posts(record, max_posts)
    posts = [preprocess_text(p, max_words, lexicon) for p in limited.posts]
    return UserRecord(record.user_id, posts, record.labels)


# ---------------------------------------------------------------------------
# splitting and statistics


def split_dataset(
    records: Sequence[UserRecord],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetSplit:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    n = len(records)
    if n < 3:
        raise CorpusError(f"need at least 3 records to split, got {n}")
    ids = [r.user_id for r in records]
    if len(set(ids)) != n:
        raise CorpusError("duplicate user_id in input records")
    # sorting first makes the split independent of input order
    ordered = sorted(records, key=lambda r: r.user_id)
    random.Random(seed).shuffle(ordered)
    n_train = math.floor(ratios[0] * n + 1e-9)
    n_val = math.floor(ratios[1] * n + 1e-9)
    return DatasetSplit(
        ordered[:n_train],
        ordered[n_train : n_train + n_val],
        ordered[n_train + n_val :],
        seed,
        tuple(ratios),
    )


def class_stats(records: Iterable[UserRecord]) -> dict[str, dict[str, int]]:
    counts = np.zeros((4, 2), dtype=int)
    for rec in records:
        counts[np.arange(4), list(rec.labels.poles)] += 1
    return {
        dim: {POLE_LETTERS[t][0]: int(counts[t, 0]), POLE_LETTERS[t][1]: int(counts[t, 1])}
        for t, dim in enumerate(DIMENSIONS)
    }


def format_stats(split_stats: dict[str, dict[str, dict[str, int]]]) -> str:
    """Render ``{split_name: class_stats(...)}`` as a Table-1 style text table."""
    names = list(split_stats)
    lines = ["Types  " + "".join(f"{n:>16}" for n in names)]
    for t, dim in enumerate(DIMENSIONS):
        a, b = POLE_LETTERS[t]
        cells = "".join(f"{split_stats[n][dim][a]:>8d} / {split_stats[n][dim][b]:<5d}" for n in names)
        lines.append(f"{dim:<7}{cells}")
    return "\n".join(lines) + "\n"
