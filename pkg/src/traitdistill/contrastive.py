"""Projection head and multi-positive in-batch InfoNCE.

Every anchor (a post) has up to three positives (its semantic, sentiment and
linguistic analyses).  The positives of all other anchors in the batch act as
negatives.  Similarities are cosine similarities computed in float64.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import torch
from torch import nn

logger = logging.getLogger(__name__)

ASPECTS = ("semantic", "sentiment", "linguistic")


@dataclass
class ContrastiveConfig:
    temperature: float = 0.07
    chunk_size: int = 128
    sum_of_logs: bool = False
    aspects: tuple[str, ...] = ASPECTS


class ZeroVectorError(ValueError):
    pass


class ProjectionHead(nn.Module):
    """``z = tanh(W h + b)`` with a square ``W``."""

    def __init__(self, dim: int, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.dim = dim
        self.linear = nn.Linear(dim, dim, dtype=dtype)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        return project(h, self)


def project(h: torch.Tensor, head: ProjectionHead) -> torch.Tensor:
    if h.shape[-1] != head.dim:
        raise ValueError(f"projection head expects width {head.dim}, got {h.shape[-1]}")
    return torch.tanh(head.linear(h))


def cosine_sim(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    a = torch.as_tensor(a, dtype=torch.float64)
    b = torch.as_tensor(b, dtype=torch.float64)
    na, nb = torch.linalg.vector_norm(a), torch.linalg.vector_norm(b)
    if na == 0 or nb == 0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return (a @ b) / (na * nb)


def cosine_matrix(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Pairwise cosine similarities between rows of ``a`` and rows of ``b``."""
    a = a.to(torch.float64)
    b = b.to(torch.float64)
    na = torch.linalg.vector_norm(a, dim=-1, keepdim=True)
    nb = torch.linalg.vector_norm(b, dim=-1, keepdim=True)
    if (na == 0).any() or (nb == 0).any():
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return (a / na) @ (b / nb).T


@dataclass
class ContrastiveBatch:
    """Projected anchors ``(M, d)``, their positives ``(M, K, d)`` and a
    ``(M, K)`` boolean mask of positives that exist."""

    anchors: torch.Tensor
    positives: torch.Tensor
    valid_mask: torch.Tensor = field(default=None)

    def __post_init__(self):
        if self.valid_mask is None:
            self.valid_mask = torch.ones(self.positives.shape[:2], dtype=torch.bool)
        m, k, d = self.positives.shape
        if self.anchors.shape != (m, d) or self.valid_mask.shape != (m, k):
            raise ValueError(
                f"inconsistent shapes: anchors {tuple(self.anchors.shape)}, "
                f"positives {tuple(self.positives.shape)}, mask {tuple(self.valid_mask.shape)}"
            )


def info_nce_multi_positive(
    batch: ContrastiveBatch, temperature: float = 0.07, sum_of_logs: bool = False
) -> torch.Tensor:
    """Mean over anchors of ``-log(sum_own exp(s/τ) / sum_all exp(s/τ))``.

    With ``sum_of_logs`` each valid positive contributes its own ``-log``
    ratio and these are averaged per anchor.  Anchors without any valid
    positive are left out of the mean.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    m, k, _ = batch.positives.shape
    mask = batch.valid_mask.to(torch.bool)
    included = mask.any(dim=1)
    if m == 0 or not included.any():
        logger.warning("contrastive batch has no anchor with a valid positive; loss set to 0")
        return batch.anchors.sum() * 0.0

    flat_pos = batch.positives.reshape(m * k, -1)
    flat_mask = mask.reshape(m * k)
    logits = cosine_matrix(batch.anchors, flat_pos[flat_mask]) / temperature
    log_denom = torch.logsumexp(logits, dim=1)

    # own-positive logits in (M, K) layout, -inf where the positive is missing
    own_idx = torch.cumsum(flat_mask.long(), 0).reshape(m, k) - 1
    own = logits.gather(1, own_idx.clamp(min=0))
    own = own.masked_fill(~mask, float("-inf"))
    # rows with no positive would give logsumexp(-inf...) and NaN gradients
    own = torch.where(included.unsqueeze(1), own, torch.zeros_like(own))

    if sum_of_logs:
        per_pos = (log_denom.unsqueeze(1) - own).masked_fill(~mask, 0.0)
        losses = per_pos.sum(1)[included] / mask.sum(1)[included]
    else:
        losses = (log_denom - torch.logsumexp(own, dim=1))[included]
    return losses.mean()
