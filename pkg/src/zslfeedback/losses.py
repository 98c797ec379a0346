"""Training losses with analytic gradients.

Every loss returns ``(value, grad...)`` where gradients are taken with
respect to the loss's matrix arguments.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, MiningError, TrainingError
from .tensorcore import as_matrix, pairwise_sq_dists


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.margin) and self.margin > 0):
            raise ContractError(f"triplet margin must be > 0, got {self.margin}")


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 1.0  # reconstruction
    beta: float = 1.0  # regressor feedback
    lam: float = 1.0  # discriminative vs semantic regression

    def __post_init__(self):
        for name in ("alpha", "beta", "lam"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ContractError(f"objective weight {name} must be finite and >= 0, got {v}")


def hardest_pairs(dists, labels):
    """Per-anchor hardest positive and negative indices.

    The hardest positive is the farthest same-class row other than the
    anchor, the hardest negative the nearest row of another class. Ties
    go to the lowest row index.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    same = labels[:, None] == labels[None, :]
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise MiningError(f"batch holds a single class ({classes[0].item()!r}); no negatives")
    lonely = classes[counts < 2]
    if lonely.size:
        raise MiningError(f"class {lonely[0].item()!r} has a single sample in the batch; no positive")
    pos_mask = same & ~np.eye(n, dtype=bool)
    # argmax/argmin return the first extreme, i.e. the lowest index on ties
    pos = np.argmax(np.where(pos_mask, dists, -np.inf), axis=1)
    neg = np.argmin(np.where(same, np.inf, dists), axis=1)
    return pos, neg


def triplet_batch_hard(embeds, labels, cfg=TripletConfig()):
    """Batch-hard triplet hinge ``mean_i max(0, m + d(i, p_i) - d(i, n_i))``.

    Distances are squared Euclidean. The gradient is the exact
    subgradient with the kink treated as inactive.
    """
    e = as_matrix(embeds, "embeds")
    labels = np.asarray(labels)
    if labels.shape != (e.shape[0],):
        raise ContractError(f"{labels.shape[0]} labels for {e.shape[0]} embeddings")
    n = e.shape[0]
    dists = pairwise_sq_dists(e)
    pos, neg = hardest_pairs(dists, labels)
    rows = np.arange(n)
    d_pos = dists[rows, pos]
    d_neg = dists[rows, neg]
    hinge = cfg.margin + d_pos - d_neg
    active = hinge > 0
    # exactly rounded sum: independent of row order
    loss = math.fsum(hinge[active].tolist()) / n

    grad = np.zeros_like(e)
    w = active / n
    diff_p = (e - e[pos]) * (2.0 * w)[:, None]
    diff_n = (e - e[neg]) * (2.0 * w)[:, None]
    grad += diff_p - diff_n
    np.add.at(grad, pos, -diff_p)
    np.add.at(grad, neg, diff_n)
    return loss, grad


def reconstruction_loss(x, x_hat):
    """Mean over rows of ``||x - x_hat||^2``; gradient is w.r.t. ``x_hat``."""
    x = as_matrix(x, "x")
    x_hat = as_matrix(x_hat, "x_hat")
    if x.shape != x_hat.shape:
        raise ContractError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    n = x.shape[0]
    r = x_hat - x
    return float(np.sum(r * r) / n), (2.0 / n) * r


def regressor_loss(sem, dis, attr, embed, lam):
    """Semantic plus ``lam``-weighted discriminative regression error.

    Returns ``(loss, (g_sem, g_dis, g_attr, g_embed))``. The gradient on
    ``embed`` is nonzero because the discriminative target is itself the
    encoder output.
    """
    sem, dis = as_matrix(sem, "sem"), as_matrix(dis, "dis")
    attr, embed = as_matrix(attr, "attr"), as_matrix(embed, "embed")
    if not (sem.shape == dis.shape == attr.shape == embed.shape):
        raise ContractError(
            f"shape mismatch: sem {sem.shape}, dis {dis.shape}, "
            f"attr {attr.shape}, embed {embed.shape}")
    n = sem.shape[0]
    rs = sem - attr
    rd = dis - embed
    loss = float(np.sum(rs * rs) / n + lam * np.sum(rd * rd) / n)
    g_sem = (2.0 / n) * rs
    g_dis = (2.0 * lam / n) * rd
    return loss, (g_sem, g_dis, -g_sem, -g_dis)


def full_objective(l_enc, l_rec, l_reg, w=ObjectiveWeights()):
    """``l_enc + alpha * l_rec + beta * l_reg``."""
    for name, v in (("encoder", l_enc), ("reconstruction", l_rec), ("regressor", l_reg)):
        if not math.isfinite(v):
            raise TrainingError(f"non-finite {name} loss: {v}", term=name)
    return l_enc + w.alpha * l_rec + w.beta * l_reg
