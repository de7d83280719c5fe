"""Label embeddings from trait explanations and soft-label targets."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import torch

from .contrastive import ASPECTS, ZeroVectorError, cosine_matrix

logger = logging.getLogger(__name__)


@dataclass
class LabelConfig:
    alpha: float = 4.0
    refresh: str = "per_epoch"  # per_epoch | per_step | frozen


@torch.no_grad()
def embed_labels(descriptions, encoder) -> torch.Tensor:
    """Encode the 24 explanation texts and average the three aspects of each
    pole.  Returns a detached ``(T, 2, d)`` tensor."""
    texts = []
    n_dims = len(descriptions.entries)
    for t in range(n_dims):
        for j in range(2):
            entry = descriptions.entries[t][j]
            for aspect in ASPECTS:
                text = entry.get(aspect) if isinstance(entry, dict) else getattr(entry, aspect, None)
                if not text:
                    raise ValueError(f"missing {aspect} description for dimension {t}, pole {j}")
                texts.append(text)
    emb = encoder.encode(texts)
    V = emb.reshape(n_dims, 2, len(ASPECTS), -1).mean(dim=2)
    if (torch.linalg.vector_norm(V, dim=-1) == 0).any():
        logger.warning("a label embedding is the zero vector; soft labels will fail for it")
    return V.detach()


def soft_label(u: torch.Tensor, V_t: torch.Tensor, y_t: torch.Tensor, alpha: float):
    """Soft target for one user and one dimension.

    Returns ``(y_s, y_c)`` where ``y_s = softmax(cos(u, V_t[0]), cos(u, V_t[1]))``
    and ``y_c = softmax(alpha * y_t + y_s)``.  ``alpha = inf`` returns the
    one-hot label itself.
    """
    y_s, y_c = soft_labels(u.reshape(1, -1), V_t.reshape(1, 2, -1), torch.as_tensor(y_t).reshape(1, 1, 2), alpha)
    return y_s[0, 0], y_c[0, 0]


def soft_labels(U: torch.Tensor, V: torch.Tensor, Y: torch.Tensor, alpha: float):
    """Batched soft labels.

    ``U``: ``(B, d)`` user embeddings, ``V``: ``(T, 2, d)`` label embeddings,
    ``Y``: ``(B, T, 2)`` one-hot labels.  Returns detached ``(B, T, 2)``
    tensors ``(y_s, y_c)`` in float64.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    U = U.detach()
    n_dims = V.shape[0]
    sims = cosine_matrix(U, V.detach().reshape(n_dims * 2, -1)).reshape(-1, n_dims, 2)
    y_s = torch.softmax(sims, dim=-1)
    Y = torch.as_tensor(Y, dtype=torch.float64)
    if math.isinf(alpha):
        y_c = Y.clone()
    else:
        y_c = torch.softmax(alpha * Y + y_s, dim=-1)
    return y_s, y_c
