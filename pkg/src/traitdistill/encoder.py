"""Sentence encoders and user pooling.

Two backends share one interface (``encode(texts) -> (n, d) tensor``):

* :class:`TinyEncoder` hashes character trigrams into a fixed bucket vector
  and applies a trainable linear map followed by tanh.  It is deterministic
  across processes and small enough for exact gradient checks.
* :class:`PretrainedEncoder` wraps a Hugging Face checkpoint and returns the
  final hidden state at the first (``[CLS]``) position.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

logger = logging.getLogger(__name__)


@dataclass
class EncoderConfig:
    kind: str = "pretrained_transformer"
    checkpoint: str = "bert-base-uncased"
    dim: int = 64
    seed: int = 0
    max_tokens: int = 512
    n_buckets: int = 2**14
    ngram: int = 3


class EncoderError(ValueError):
    pass


def _bucket(gram: str, n_buckets: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


class TinyEncoder(nn.Module):
    """Hashed character n-gram bag -> linear -> tanh."""

    kind = "deterministic_tiny"

    def __init__(
        self,
        dim: int = 64,
        seed: int = 0,
        n_buckets: int = 2**14,
        ngram: int = 3,
        max_tokens: int = 512,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.dim = dim
        self.n_buckets = n_buckets
        self.ngram = ngram
        self.max_tokens = max_tokens
        gen = torch.Generator().manual_seed(seed)
        self.weight = nn.Parameter(torch.randn(n_buckets, dim, generator=gen, dtype=torch.float64).to(dtype))
        self.bias = nn.Parameter(torch.zeros(dim, dtype=dtype))
        self._features: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def featurize(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """Return (bucket ids, weights) of the L2-normalised log-count n-gram bag."""
        cached = self._features.get(text)
        if cached is not None:
            return cached
        padded = f"#{text.lower()}#"
        grams = [padded[i : i + self.ngram] for i in range(max(1, len(padded) - self.ngram + 1))]
        if len(grams) > self.max_tokens:
            logger.warning("text of %d n-grams truncated to %d", len(grams), self.max_tokens)
            grams = grams[: self.max_tokens]
        counts: dict[int, int] = {}
        for g in grams:
            b = _bucket(g, self.n_buckets)
            counts[b] = counts.get(b, 0) + 1
        ids = np.array(sorted(counts), dtype=np.int64)
        vals = np.log1p(np.array([counts[i] for i in ids], dtype=np.float64))
        vals /= np.linalg.norm(vals)
        self._features[text] = (ids, vals)
        return ids, vals

    def encode(self, texts: Sequence[str]) -> torch.Tensor:
        if len(texts) == 0:
            return torch.zeros(0, self.dim, dtype=self.weight.dtype)
        ids, vals, offsets = [], [], []
        pos = 0
        for text in texts:
            i, v = self.featurize(text)
            ids.append(i)
            vals.append(v)
            offsets.append(pos)
            pos += len(i)
        ids_t = torch.from_numpy(np.concatenate(ids))
        vals_t = torch.from_numpy(np.concatenate(vals)).to(self.weight.dtype)
        offsets_t = torch.tensor(offsets, dtype=torch.int64)
        pre = nn.functional.embedding_bag(
            ids_t, self.weight, offsets_t, mode="sum", per_sample_weights=vals_t
        )
        return torch.tanh(pre + self.bias)

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        return self.encode(texts)


class PretrainedEncoder(nn.Module):
    """Final-layer first-token representation of a transformer checkpoint."""

    kind = "pretrained_transformer"

    def __init__(self, checkpoint: str = "bert-base-uncased", max_tokens: int = 512, model=None, tokenizer=None):
        super().__init__()
        if model is None or tokenizer is None:
            from transformers import AutoModel, AutoTokenizer

            tokenizer = tokenizer or AutoTokenizer.from_pretrained(checkpoint)
            model = model or AutoModel.from_pretrained(checkpoint)
        self.checkpoint = checkpoint
        self.tokenizer = tokenizer
        self.model = model
        self.max_tokens = min(max_tokens, getattr(model.config, "max_position_embeddings", max_tokens))
        self.dim = model.config.hidden_size

    def encode(self, texts: Sequence[str]) -> torch.Tensor:
        if len(texts) == 0:
            return torch.zeros(0, self.dim)
        batch = self.tokenizer(list(texts), padding=True, truncation=False, return_tensors="pt")
        if batch["input_ids"].shape[1] > self.max_tokens:
            logger.warning("batch truncated from %d to %d tokens", batch["input_ids"].shape[1], self.max_tokens)
            batch = self.tokenizer(
                list(texts), padding=True, truncation=True, max_length=self.max_tokens, return_tensors="pt"
            )
        out = self.model(**batch)
        return out.last_hidden_state[:, 0]

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        return self.encode(texts)


def build_encoder(config: EncoderConfig, dtype: torch.dtype = torch.float32) -> nn.Module:
    if config.kind == "deterministic_tiny":
        return TinyEncoder(config.dim, config.seed, config.n_buckets, config.ngram, config.max_tokens, dtype)
    if config.kind == "pretrained_transformer":
        return PretrainedEncoder(config.checkpoint, config.max_tokens)
    raise EncoderError(f"unknown encoder kind {config.kind!r}")


def mean_pool_user(post_embeddings: torch.Tensor) -> torch.Tensor:
    if post_embeddings.ndim != 2 or post_embeddings.shape[0] == 0:
        raise EncoderError("mean_pool_user needs an (n >= 1, d) matrix")
    return post_embeddings.mean(dim=0)


def pool_users(post_embeddings: torch.Tensor, counts: Sequence[int]) -> torch.Tensor:
    """Mean-pool consecutive row blocks of sizes ``counts`` into one row per user."""
    if any(c < 1 for c in counts) or sum(counts) != post_embeddings.shape[0]:
        raise EncoderError(f"post counts {list(counts)} do not tile {post_embeddings.shape[0]} rows")
    segment = torch.repeat_interleave(torch.arange(len(counts)), torch.tensor(counts))
    sums = torch.zeros(len(counts), post_embeddings.shape[1], dtype=post_embeddings.dtype)
    sums = sums.index_add(0, segment, post_embeddings)
    return sums / torch.tensor(counts, dtype=post_embeddings.dtype).unsqueeze(1)
