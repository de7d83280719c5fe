"""Macro-F1 evaluation, prediction and report formatting."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .corpus import DIMENSIONS, TraitLabels, UserRecord, preprocess_record


def confusion_2x2(preds: Sequence[int], golds: Sequence[int]) -> np.ndarray:
    """``cm[g, p]`` counts of gold class ``g`` predicted as ``p``."""
    preds = np.asarray(preds, dtype=int)
    golds = np.asarray(golds, dtype=int)
    if preds.shape != golds.shape:
        raise ValueError(f"length mismatch: {preds.shape[0]} predictions vs {golds.shape[0]} golds")
    if preds.size == 0:
        raise ValueError("macro_f1 needs at least one sample")
    if not (np.isin(preds, (0, 1)).all() and np.isin(golds, (0, 1)).all()):
        raise ValueError("labels must be 0 or 1")
    cm = np.zeros((2, 2), dtype=int)
    np.add.at(cm, (golds, preds), 1)
    return cm


def macro_f1_from_confusion(cm: np.ndarray) -> float:
    # F1 = 2tp / (2tp + fp + fn); an empty denominator (class absent from
    # both sides) scores 0 and still counts towards the mean
    scores = []
    for c in (0, 1):
        tp = cm[c, c]
        fp = cm[1 - c, c]
        fn = cm[c, 1 - c]
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def macro_f1(preds: Sequence[int], golds: Sequence[int]) -> float:
    return macro_f1_from_confusion(confusion_2x2(preds, golds))


@dataclass
class EvalReport:
    per_dim_f1: list[float]
    average: float
    confusion: np.ndarray  # (4, 2, 2)
    n_users: int

    @classmethod
    def from_predictions(cls, preds, golds) -> "EvalReport":
        preds = np.asarray(preds, dtype=int).reshape(-1, len(DIMENSIONS))
        golds = np.asarray(golds, dtype=int).reshape(-1, len(DIMENSIONS))
        cms = np.stack([confusion_2x2(preds[:, t], golds[:, t]) for t in range(len(DIMENSIONS))])
        per_dim = [macro_f1_from_confusion(cm) for cm in cms]
        return cls(per_dim, float(np.mean(per_dim)), cms, len(golds))

    def to_dict(self) -> dict:
        scores = dict(zip(DIMENSIONS, self.per_dim_f1))
        scores["average"] = self.average
        return {"macro_f1": scores, "confusion": self.confusion.tolist(), "n_users": self.n_users}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self, name: str = "model") -> str:
        """Percentages with two decimals, columns I/E S/N T/F P/J Average."""
        head = f"{'Method':<12}" + "".join(f"{c:>9}" for c in (*DIMENSIONS, "Average"))
        row = f"{name:<12}" + "".join(f"{100 * v:>9.2f}" for v in (*self.per_dim_f1, self.average))
        return head + "\n" + row + "\n"


def _model_of(obj):
    return getattr(obj, "model", obj)


@torch.no_grad()
def predict_poles(model, users_posts: Sequence[Sequence[str]], batch_size: int = 32):
    """Return ``(poles (B, 4) int array, probabilities (B, 4, 2))``."""
    was_training = model.training
    model.eval()
    probs = []
    try:
        for start in range(0, len(users_posts), batch_size):
            probs.append(model.predict_proba(users_posts[start : start + batch_size]).to(torch.float64))
    finally:
        model.train(was_training)
    P = torch.cat(probs).numpy()
    # ties go to pole 0
    return (P[..., 1] > P[..., 0]).astype(int), P


def evaluate(checkpoint, records: Sequence[UserRecord], config=None) -> EvalReport:
    """Score ``records`` with a model or checkpoint.  Uses posts only."""
    if not records:
        raise ValueError("no records to evaluate")
    model = _model_of(checkpoint)
    config = config if config is not None else checkpoint.config
    tc = config.train
    prepared = [preprocess_record(r, tc.max_posts, tc.max_words) for r in records]
    poles, _ = predict_poles(model, [r.posts for r in prepared])
    golds = np.array([r.labels.poles for r in prepared])
    return EvalReport.from_predictions(poles, golds)


@dataclass
class Prediction:
    labels: TraitLabels
    probabilities: np.ndarray  # (4, 2)

    def to_dict(self) -> dict:
        return {
            "mbti": self.labels.code,
            "probabilities": {d: [float(p) for p in self.probabilities[t]] for t, d in enumerate(DIMENSIONS)},
        }


def predict(checkpoint, posts: Sequence[str]) -> Prediction:
    if not posts:
        raise ValueError("no posts to classify")
    tc = checkpoint.config.train
    placeholder = TraitLabels((0, 0, 0, 0))
    rec = preprocess_record(UserRecord("query", list(posts), placeholder), tc.max_posts, tc.max_words)
    poles, P = predict_poles(_model_of(checkpoint), [rec.posts])
    return Prediction(TraitLabels(tuple(int(p) for p in poles[0])), P[0])
