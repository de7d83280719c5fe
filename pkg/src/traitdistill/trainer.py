"""Classifier heads, detection loss, the joint objective and the training loop."""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .augmenter.cache import text_hash
from .augmenter.generation import AspectAnalyses, LabelDescriptionSet
from .config import RunConfig
from .contrastive import ContrastiveBatch, ProjectionHead, info_nce_multi_positive
from .corpus import DatasetSplit, UserRecord, preprocess_record, preprocess_text
from .encoder import build_encoder, pool_users
from .evaluation import evaluate
from .labelspace import embed_labels, soft_labels

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
PROB_FLOOR = 1e-12


class NonFiniteLossError(FloatingPointError):
    pass


class CheckpointError(RuntimeError):
    pass


class DimensionMismatchError(CheckpointError, ValueError):
    pass


class ClassifierHeads(nn.Module):
    """One linear map ``d -> 2`` per trait dimension."""

    def __init__(self, dim: int, n_dims: int = 4, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.dim = dim
        self.heads = nn.ModuleList(nn.Linear(dim, 2, dtype=dtype) for _ in range(n_dims))

    def logits(self, u: torch.Tensor) -> torch.Tensor:
        return torch.stack([h(u) for h in self.heads], dim=-2)

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.logits(u), dim=-1)


def classify(u: torch.Tensor, heads: ClassifierHeads) -> torch.Tensor:
    """``(d,)`` -> ``(T, 2)`` or ``(B, d)`` -> ``(B, T, 2)`` probabilities."""
    if u.shape[-1] != heads.dim:
        raise ValueError(f"classifier expects width {heads.dim}, got {u.shape[-1]}")
    return heads(u)


def detection_loss(y_c: torch.Tensor, y_hat: torch.Tensor, eps: float = PROB_FLOOR) -> torch.Tensor:
    """Mean over users of the summed per-dimension ``KL(y_c || y_hat)``.

    Accepts ``(T, 2)`` for one user or ``(B, T, 2)``.
    """
    y_c = torch.as_tensor(y_c, dtype=torch.float64)
    y_hat = torch.as_tensor(y_hat).to(torch.float64)
    if y_c.shape != y_hat.shape:
        raise ValueError(f"shape mismatch {tuple(y_c.shape)} vs {tuple(y_hat.shape)}")
    if y_c.ndim == 2:
        y_c, y_hat = y_c.unsqueeze(0), y_hat.unsqueeze(0)
    kl = torch.xlogy(y_c, y_c) - y_c * torch.log(y_hat.clamp(min=eps))
    return kl.sum(dim=(1, 2)).mean()


def total_loss(l_det, l_cl, lam: float):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return l_det + lam * l_cl


class PersonalityDetector(nn.Module):
    def __init__(self, encoder: nn.Module, dim: int, n_dims: int = 4, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.encoder = encoder
        self.projection = ProjectionHead(dim, dtype)
        self.classifier = ClassifierHeads(dim, n_dims, dtype)
        self.dim = dim

    def encode_users(self, users_posts: Sequence[Sequence[str]]):
        """Return ``(U, H, counts)``: pooled user rows, post rows, posts per user."""
        counts = [len(p) for p in users_posts]
        H = self.encoder.encode([t for posts in users_posts for t in posts])
        return pool_users(H, counts), H, counts

    def predict_proba(self, users_posts: Sequence[Sequence[str]]) -> torch.Tensor:
        U, _, _ = self.encode_users(users_posts)
        return self.classifier(U)

    def parameter_groups(self, lr_encoder: float, lr_other: float) -> list[dict]:
        enc = list(self.encoder.parameters())
        enc_ids = {id(p) for p in enc}
        other = [p for p in self.parameters() if id(p) not in enc_ids]
        return [{"params": enc, "lr": lr_encoder}, {"params": other, "lr": lr_other}]


def build_model(config: RunConfig, dtype: torch.dtype = torch.float32) -> PersonalityDetector:
    torch.manual_seed(config.train.seed)
    encoder = build_encoder(config.encoder, dtype)
    return PersonalityDetector(encoder, encoder.dim, dtype=dtype)


@dataclass
class Checkpoint:
    model: PersonalityDetector
    config: RunConfig
    epoch: int = 0
    val_metric: float = float("nan")
    optimizer_state: dict | None = None
    history: list = field(default_factory=list)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": ckpt.config.to_dict(),
        "model_state": ckpt.model.state_dict(),
        "optimizer_state": ckpt.optimizer_state,
        "epoch": ckpt.epoch,
        "val_metric": ckpt.val_metric,
        "history": ckpt.history,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def load_checkpoint(path: str | Path, config: RunConfig | None = None) -> Checkpoint:
    """Load a checkpoint.  When ``config`` is given its encoder settings must
    agree with the stored ones."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"checkpoint format {payload.get('format')!r}, expected {CHECKPOINT_FORMAT}")
    stored = RunConfig.from_dict(payload["config"])
    if config is not None:
        if config.encoder.kind != stored.encoder.kind or (
            config.encoder.kind == "deterministic_tiny" and config.encoder.dim != stored.encoder.dim
        ):
            raise DimensionMismatchError(
                f"checkpoint encoder {stored.encoder.kind}/d={stored.encoder.dim} does not match "
                f"requested {config.encoder.kind}/d={config.encoder.dim}"
            )
    state = payload["model_state"]
    dtype = next(iter(state.values())).dtype
    model = build_model(stored, dtype=dtype)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise DimensionMismatchError(str(exc)) from exc
    return Checkpoint(
        model, stored, payload["epoch"], payload["val_metric"], payload["optimizer_state"], payload["history"]
    )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingUser:
    user_id: str
    posts: list[str]
    onehot: np.ndarray
    analyses: list[list[str | None]]  # per post, one text (or None) per aspect


def prepare_users(
    records: Sequence[UserRecord],
    augmentations: dict[str, AspectAnalyses] | None,
    config: RunConfig,
) -> list[TrainingUser]:
    """Preprocess records and attach per-post analyses (looked up by the hash
    of the preprocessed post)."""
    tc = config.train
    augmentations = augmentations or {}
    users = []
    for rec in records:
        rec = preprocess_record(rec, tc.max_posts, tc.max_words)
        analyses = []
        for post in rec.posts:
            aug = augmentations.get(text_hash(post))
            if aug is None:
                analyses.append([None] * len(config.cl.aspects))
            else:
                analyses.append(
                    [preprocess_text(t, tc.max_words) or None for t in aug.texts(config.cl.aspects)]
                )
        users.append(TrainingUser(rec.user_id, rec.posts, rec.labels.onehot(), analyses))
    return users


def _contrastive_term(model, batch_users, H, config, gen: torch.Generator):
    k = len(config.cl.aspects)
    rows, texts, slots = [], [], []
    offset = 0
    for user in batch_users:
        for n, analyses in enumerate(user.analyses):
            if any(a is not None for a in analyses):
                rows.append((offset + n, analyses))
        offset += len(user.posts)
    if not rows:
        return None
    if len(rows) > config.cl.chunk_size:
        pick = torch.randperm(len(rows), generator=gen)[: config.cl.chunk_size].sort().values
        rows = [rows[i] for i in pick.tolist()]
    mask = torch.zeros(len(rows), k, dtype=torch.bool)
    for r, (_, analyses) in enumerate(rows):
        for a, text in enumerate(analyses):
            if text is not None:
                mask[r, a] = True
                texts.append(text)
                slots.append(r * k + a)
    Z = model.projection(H[[i for i, _ in rows]])
    Zp = model.projection(model.encoder.encode(texts))
    P = Zp.new_zeros(len(rows) * k, Zp.shape[1]).index_copy(0, torch.tensor(slots), Zp)
    batch = ContrastiveBatch(Z, P.reshape(len(rows), k, -1), mask)
    return info_nce_multi_positive(batch, config.cl.temperature, config.cl.sum_of_logs)


def train_step(model, batch_users, V, config, gen):
    """Forward pass for one mini-batch; returns ``(L, L_det, L_cl)`` with
    ``L_cl`` None when the contrastive term is off."""
    U, H, _ = model.encode_users([u.posts for u in batch_users])
    y_hat = model.classifier(U)
    Y = torch.from_numpy(np.stack([u.onehot for u in batch_users]))
    _, y_c = soft_labels(U, V, Y, config.label.alpha)
    l_det = detection_loss(y_c, y_hat)
    l_cl = None
    if config.train.lam > 0:
        l_cl = _contrastive_term(model, batch_users, H, config, gen)
    loss = l_det if l_cl is None else total_loss(l_det, l_cl, config.train.lam)
    return loss, l_det, l_cl


def _dump_batch(dump_dir, epoch, step, batch_users, l_det, l_cl) -> str | None:
    if dump_dir is None:
        return None
    Path(dump_dir).mkdir(parents=True, exist_ok=True)
    path = Path(dump_dir) / f"nonfinite_e{epoch}_s{step}.json"
    path.write_text(
        json.dumps(
            {
                "epoch": epoch,
                "step": step,
                "L_det": float(l_det.detach()),
                "L_cl": None if l_cl is None else float(l_cl.detach()),
                "users": [{"user_id": u.user_id, "posts": u.posts} for u in batch_users],
            },
            indent=1,
        )
    )
    return str(path)


def fit(
    split: DatasetSplit,
    augmentations: dict[str, AspectAnalyses] | None,
    label_descs: LabelDescriptionSet,
    config: RunConfig,
    log_path: str | Path | None = None,
    dump_dir: str | Path | None = None,
    dtype: torch.dtype = torch.float32,
) -> Checkpoint:
    """Train a detector on ``split.train``, selecting the epoch with the best
    average validation Macro-F1."""
    tc = config.train
    tc.validate()
    random.seed(tc.seed)
    np.random.seed(tc.seed)
    model = build_model(config, dtype)
    users = prepare_users(split.train, augmentations, config)
    if not users:
        raise ValueError("training split is empty")
    order_gen = torch.Generator().manual_seed(tc.seed)
    chunk_gen = torch.Generator().manual_seed(tc.seed + 1)
    optimizer = torch.optim.Adam(model.parameter_groups(tc.lr_encoder, tc.lr_other))

    def refresh():
        model.eval()
        V = embed_labels(label_descs, model.encoder)
        model.train()
        return V

    best = Checkpoint(copy.deepcopy(model), config.copy(), 0, -math.inf)
    history = []
    stale = 0
    V = refresh()
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, tc.epochs + 1):
            model.train()
            if config.label.refresh == "per_epoch" and epoch > 1:
                V = refresh()
            perm = torch.randperm(len(users), generator=order_gen).tolist()
            det_sum, cl_sum, cl_steps, steps = 0.0, 0.0, 0, 0
            for step, start in enumerate(range(0, len(perm), tc.batch_size_users)):
                batch_users = [users[i] for i in perm[start : start + tc.batch_size_users]]
                if config.label.refresh == "per_step":
                    V = refresh()
                loss, l_det, l_cl = train_step(model, batch_users, V, config, chunk_gen)
                if not torch.isfinite(loss):
                    where = _dump_batch(dump_dir, epoch, step, batch_users, l_det, l_cl)
                    raise NonFiniteLossError(f"non-finite loss at epoch {epoch} step {step} (dump: {where})")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                det_sum += float(l_det.detach())
                if l_cl is not None:
                    cl_sum += float(l_cl.detach())
                    cl_steps += 1
                steps += 1
            report = evaluate(model, split.validation, config) if split.validation else None
            score = report.average if report is not None else -float(det_sum / steps)
            record = {
                "epoch": epoch,
                "L_det": det_sum / steps,
                "L_cl": cl_sum / cl_steps if cl_steps else None,
                "val_macro_f1": report.to_dict()["macro_f1"] if report is not None else None,
            }
            history.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            logger.info("epoch %d: L_det=%.4f L_cl=%s val=%.4f", epoch, record["L_det"], record["L_cl"], score)
            if score > best.val_metric:
                best = Checkpoint(
                    copy.deepcopy(model), config.copy(), epoch, score, copy.deepcopy(optimizer.state_dict())
                )
                stale = 0
            else:
                stale += 1
                if stale >= tc.patience:
                    logger.info("early stop after epoch %d", epoch)
                    break
    finally:
        if log_fh:
            log_fh.close()
    best.history = history
    return best
