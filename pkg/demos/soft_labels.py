"""
Soft labels from label-description similarity
=============================================

Each trait pole is represented by the mean embedding of three short
explanations (semantic, sentiment, linguistic).  A user's similarity to the
two poles of a dimension gives a distribution ``y_s``; the training target is
``softmax(alpha * onehot + y_s)``.  Large ``alpha`` recovers the hard label,
small ``alpha`` lets the description space soften it.
"""

import torch

from traitdistill.augmenter import load_label_descriptions
from traitdistill.encoder import TinyEncoder
from traitdistill.labelspace import embed_labels, soft_labels

descs = load_label_descriptions()
print("bundled explanation for Introversion / semantic:")
print("  ", descs.entries[0][0]["semantic"], "\n")

encoder = TinyEncoder(dim=32, seed=0, dtype=torch.float64)
V = embed_labels(descs, encoder)  # (4 dimensions, 2 poles, d)

# A "user" whose posts read like the Introversion explanations.
posts = [descs.entries[0][0][a] for a in ("semantic", "sentiment", "linguistic")]
u = encoder.encode(posts).mean(0, keepdim=True).detach()

# Pretend the gold label is E (pole 1) on I/E and pole 0 elsewhere.
Y = torch.tensor([[[0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]], dtype=torch.float64)

for alpha in (0.0, 1.0, 4.0, 10.0, float("inf")):
    y_s, y_c = soft_labels(u, V, Y, alpha)
    print(f"alpha={alpha:<4}  I/E similarity {y_s[0, 0].numpy().round(3)}  target {y_c[0, 0].numpy().round(3)}")
