"""
Batch-hard triplet mining
=========================

For every anchor the loss picks its farthest same-class row and its
nearest other-class row, then applies a hinge with a margin. Only those
two rows per anchor receive gradient.
"""

import numpy as np

from zslfeedback.losses import TripletConfig, hardest_pairs, triplet_batch_hard
from zslfeedback.tensorcore import pairwise_sq_dists

rng = np.random.default_rng(0)
labels = np.repeat(np.arange(3), 3)
embeds = rng.normal(size=(9, 2)) + 2.0 * labels[:, None]

d = pairwise_sq_dists(embeds)
np.set_printoptions(precision=2, suppress=True)
print("squared distances\n", d)

pos, neg = hardest_pairs(d, labels)
for i in range(labels.size):
    print(f"anchor {i} (class {labels[i]}): hardest positive {pos[i]} "
          f"d={d[i, pos[i]]:.2f}, hardest negative {neg[i]} d={d[i, neg[i]]:.2f}")

for margin in (0.5, 2.0, 8.0):
    loss, grad = triplet_batch_hard(embeds, labels, TripletConfig(margin))
    touched = np.flatnonzero(np.abs(grad).sum(axis=1))
    print(f"margin {margin}: loss {loss:.4f}, rows with gradient {touched}")

# ties go to the lowest index: four identical points of two classes
flat = np.zeros((4, 2))
print("tie-break", hardest_pairs(pairwise_sq_dists(flat), np.array([0, 0, 1, 1])))
