"""
Multi-positive contrastive loss on toy vectors
==============================================

Each post embedding (the *anchor*) has three positives: the embeddings of its
semantic, sentiment and linguistic analyses.  Every other anchor's positives in
the batch act as negatives.  This script builds a tiny batch by hand and shows
how the loss reacts to alignment, masking and temperature.
"""

import torch

from traitdistill.contrastive import ContrastiveBatch, info_nce_multi_positive

torch.set_printoptions(precision=4)

# Two anchors in 2-D.  Anchor 0 points along x, anchor 1 along y.
anchors = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)

# Well-aligned positives: each anchor's analyses point roughly its own way.
aligned = torch.tensor(
    [[[1.0, 0.1], [0.9, -0.1], [1.0, 0.0]], [[0.1, 1.0], [-0.1, 0.9], [0.0, 1.0]]], dtype=torch.float64
)
# Swapped positives: each anchor's analyses look like the *other* anchor.
swapped = aligned.flip(0)

for name, positives in [("aligned", aligned), ("swapped", swapped)]:
    loss = info_nce_multi_positive(ContrastiveBatch(anchors, positives), temperature=0.07)
    print(f"{name:>8} positives: loss = {loss.item():.4f}")

# A missing analysis (say the LLM reply could not be parsed) is masked out;
# the anchor keeps its remaining positives.
mask = torch.tensor([[True, False, True], [True, True, True]])
loss = info_nce_multi_positive(ContrastiveBatch(anchors, aligned, mask), temperature=0.07)
print(f"one analysis masked: loss = {loss.item():.4f}")

# Temperature sharpens or flattens the softmax over similarities.
print("\ntemperature sweep (aligned positives)")
for tau in (0.05, 0.07, 0.2, 0.5, 1.0):
    loss = info_nce_multi_positive(ContrastiveBatch(anchors, aligned), temperature=tau)
    print(f"  tau={tau:<5} loss={loss.item():.4f}")

# The default pools the positives inside the log; the alternative averages
# one log-term per positive, which penalises the weakest positive more.
pooled = info_nce_multi_positive(ContrastiveBatch(anchors, aligned), 0.5)
per_term = info_nce_multi_positive(ContrastiveBatch(anchors, aligned), 0.5, sum_of_logs=True)
print(f"\npooled {pooled.item():.4f} vs per-positive {per_term.item():.4f} (tau=0.5)")
