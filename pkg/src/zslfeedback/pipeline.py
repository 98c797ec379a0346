"""Training loop for the full objective, unseen-feature generation and the
final classifiers (one-vs-rest linear SVM, k-nearest neighbours)."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import net
from .dataset import pk_batches
from .errors import ConfigError, ContractError, EvaluationError, TrainingError
from .losses import (ObjectiveWeights, TripletConfig, full_objective,
                     reconstruction_loss, regressor_loss, triplet_batch_hard)
from .tensorcore import as_matrix, cross_sq_dists
from .zslmodel import FeedbackConfig, generate_unseen, split_regression

log = logging.getLogger(__name__)

TERMS = ("encoder", "reconstruction", "regressor", "total")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    P: int = 8
    K: int = 4
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weights: ObjectiveWeights = ObjectiveWeights()
    triplet: TripletConfig = TripletConfig()
    feedback: FeedbackConfig = FeedbackConfig()
    use_triplet: bool = True
    seed: int = 0

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}", field="epochs")
        if not self.lr >= 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}", field="lr")


@dataclass
class TrainLog:
    """Per-epoch batch means of each objective term.

    ``initial`` holds the same means for the untrained model over the
    first epoch's batches and ``initial_sem`` their standard errors
    (batch standard deviation over the square root of the batch count).
    """

    records: list = field(default_factory=list)
    initial: dict = None
    initial_sem: dict = None

    def append(self, epoch, values):
        self.records.append({"epoch": epoch, **{k: float(values[k]) for k in TERMS}})

    def series(self, term):
        return np.array([r[term] for r in self.records])

    def to_json(self):
        return {"initial": self.initial, "initial_sem": self.initial_sem,
                "records": self.records}


# -- objective ---------------------------------------------------------------

def objective(model, x, attr, labels, weights=ObjectiveWeights(),
              triplet=TripletConfig(), feedback=FeedbackConfig(), use_triplet=True):
    """Full objective on one batch and its gradient for every parameter.

    Reconstruction and regressor terms are averaged over the feedback
    iterations (one iteration reproduces the plain objective). Returns
    ``(terms, grads)`` with ``grads`` aligned to ``model.params()``.
    When ``use_triplet`` is false the encoder term is still evaluated for
    logging but contributes neither to the total nor to the gradient.
    """
    x = as_matrix(x, "x")
    attr = as_matrix(attr, "attr")
    D, T = model.D, feedback.iterations
    e, enc_cache = net.forward(model.encoder, x)
    l_enc, g_trip = triplet_batch_hard(e, labels, triplet)

    steps = []
    z = np.concatenate([e, attr], axis=1)
    l_rec = l_reg = 0.0
    for t in range(T):
        x_hat, dec_cache = net.forward(model.decoder, z)
        out, reg_cache = net.forward(model.regressor, x_hat)
        sem, dis = split_regression(model, out)
        lr_t, g_xhat = reconstruction_loss(x, x_hat)
        lg_t, (g_sem, g_dis, _, g_emb) = regressor_loss(sem, dis, attr, e, weights.lam)
        l_rec += lr_t / T
        l_reg += lg_t / T
        steps.append((dec_cache, reg_cache, g_xhat, g_sem, g_dis, g_emb))
        z = np.concatenate([dis, sem], axis=1)

    total = full_objective(l_enc if use_triplet else 0.0, l_rec, l_reg, weights)
    terms = {"encoder": l_enc, "reconstruction": l_rec, "regressor": l_reg, "total": total}

    a_w, b_w = weights.alpha / T, weights.beta / T
    g_dec = [np.zeros_like(p) for p in model.decoder.params()]
    g_reg = [np.zeros_like(p) for p in model.regressor.params()]
    g_e = g_trip.copy() if use_triplet else np.zeros_like(e)
    carry_sem = carry_dis = 0.0
    for t in range(T - 1, -1, -1):
        dec_cache, reg_cache, g_xhat, g_sem, g_dis, g_emb = steps[t]
        if model.regressor_head == "shared":
            g_out = b_w * (g_sem + g_dis) + carry_sem + carry_dis
        else:
            g_out = np.concatenate([b_w * g_sem + carry_sem, b_w * g_dis + carry_dis], axis=1)
        g_e += b_w * g_emb
        pg, g_from_reg = net.backward(model.regressor, reg_cache, g_out)
        for acc, g in zip(g_reg, pg):
            acc += g
        pg, g_z = net.backward(model.decoder, dec_cache, a_w * g_xhat + g_from_reg)
        for acc, g in zip(g_dec, pg):
            acc += g
        if t > 0:
            carry_dis, carry_sem = g_z[:, :D], g_z[:, D:]
        else:
            g_e += g_z[:, :D]
    g_enc, _ = net.backward(model.encoder, enc_cache, g_e)
    return terms, g_enc + g_dec + g_reg


def train(model, ds, cfg=TrainConfig()):
    """Minimize the full objective over P x K batches with one joint Adam.

    The model is updated in place and returned together with its
    :class:`TrainLog`. A non-finite loss raises :class:`TrainingError`
    carrying the epoch and batch; epoch 0 is the evaluation of the
    untrained model that precedes the first update.
    """
    params = model.params()
    state = net.AdamState.for_params(params, lr=cfg.lr, beta1=cfg.beta1,
                                     beta2=cfg.beta2, eps=cfg.adam_eps)
    history = TrainLog()
    seeds = [int(s.generate_state(1)[0])
             for s in np.random.SeedSequence(cfg.seed).spawn(cfg.epochs)]
    values = []
    for b, idx in enumerate(pk_batches(ds, cfg.P, cfg.K, seeds[0])):
        y = ds.labels[idx]
        try:
            terms, _ = objective(model, ds.features[idx], ds.attributes[y], y, cfg.weights,
                                 cfg.triplet, cfg.feedback, cfg.use_triplet)
        except TrainingError as exc:
            raise TrainingError(f"initial model (epoch 0), batch {b}: {exc}",
                                epoch=0, batch=b, term=exc.term) from exc
        values.append([terms[k] for k in TERMS])
    values = np.array(values)
    sem = values.std(axis=0, ddof=1) / np.sqrt(len(values)) if len(values) > 1 \
        else np.zeros(len(TERMS))
    history.initial = {k: float(v) for k, v in zip(TERMS, values.mean(axis=0))}
    history.initial_sem = {k: float(v) for k, v in zip(TERMS, sem)}
    for epoch in range(cfg.epochs):
        sums = dict.fromkeys(TERMS, 0.0)
        n_batches = 0
        for b, idx in enumerate(pk_batches(ds, cfg.P, cfg.K, seeds[epoch])):
            y = ds.labels[idx]
            try:
                terms, grads = objective(
                    model, ds.features[idx], ds.attributes[y], y, cfg.weights,
                    cfg.triplet, cfg.feedback, cfg.use_triplet)
                net.adam_step(params, grads, state, batch_index=b)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch + 1}, batch {b}: {exc}",
                                    epoch=epoch + 1, batch=b, term=exc.term) from exc
            for k in TERMS:
                sums[k] += terms[k]
            n_batches += 1
        history.append(epoch + 1, {k: v / n_batches for k, v in sums.items()})
        log.debug("epoch %d: %s", epoch + 1, history.records[-1])
    return model, history


# -- classifiers -------------------------------------------------------------

@dataclass
class LinearSvm:
    classes: np.ndarray  # sorted class ids, one row of weights each
    weights: np.ndarray  # (n_classes, d)
    bias: np.ndarray  # (n_classes,)
    reg: float = 1e-4

    def decision_function(self, x):
        x = as_matrix(x, "x")
        if x.shape[1] != self.weights.shape[1]:
            raise ContractError(
                f"x has {x.shape[1]} columns, classifier expects {self.weights.shape[1]}")
        return x @ self.weights.T + self.bias


def fit_svm(x, y, reg=1e-4, epochs=50, seed=0, batch_size=8, balanced=True):
    """One-vs-rest linear SVM by Pegasos mini-batch subgradient descent.

    Step size at step ``t`` is ``1 / (reg * t)``; the bias is handled as a
    constant extra feature and each class's iterate is projected onto the
    ball of radius ``1 / sqrt(reg)``. With ``balanced`` each draw first
    picks a class uniformly, then one of its samples.
    """
    x = as_matrix(x, "x")
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise ConfigError("SVM training needs at least two classes", field="classes")
    if not reg > 0:
        raise ConfigError(f"SVM regularization must be > 0, got {reg}", field="reg")
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    targets = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
    members = [np.flatnonzero(y == c) for c in classes]
    rng = np.random.default_rng(seed)
    w = np.zeros((classes.size, d + 1))
    radius = 1.0 / math.sqrt(reg)
    steps_per_epoch = max(1, math.ceil(n / batch_size))
    t = 0
    for _ in range(epochs):
        if balanced:
            cls = rng.integers(classes.size, size=steps_per_epoch * batch_size)
            pick = np.array([members[c][rng.integers(members[c].size)] for c in cls])
        else:
            pick = np.concatenate([rng.permutation(n)
                                   for _ in range(math.ceil(steps_per_epoch * batch_size / n))])
        for s in range(steps_per_epoch):
            t += 1
            idx = pick[s * batch_size:(s + 1) * batch_size]
            xb, tb = xa[idx], targets[idx]
            viol = (tb * (xb @ w.T)) < 1.0
            eta = 1.0 / (reg * t)
            w *= 1.0 - eta * reg
            w += (eta / idx.size) * ((viol * tb).T @ xb)
            norms = np.sqrt(np.einsum("ij,ij->i", w, w))
            over = norms > radius
            if over.any():
                w[over] *= (radius / norms[over])[:, None]
    return LinearSvm(classes, w[:, :d].copy(), w[:, d].copy(), reg)


def svm_predict(svm, x):
    """Labels (argmax score, lowest class id on ties) and the score matrix."""
    scores = svm.decision_function(x)
    return svm.classes[np.argmax(scores, axis=1)], scores


def knn_scores(train_x, train_y, x, k):
    """Vote fractions of the ``k`` nearest training rows for every class."""
    train_x = as_matrix(train_x, "train_x")
    train_y = np.asarray(train_y)
    if train_x.shape[0] == 0:
        raise ContractError("k-NN needs a non-empty training set")
    if not 1 <= k <= train_x.shape[0]:
        raise ContractError(f"k must be in [1, {train_x.shape[0]}], got {k}")
    classes = np.unique(train_y)
    d = cross_sq_dists(x, train_x)
    # stable sort: equidistant neighbours are taken in training-row order
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    col = np.searchsorted(classes, train_y[nearest])
    votes = np.zeros((d.shape[0], classes.size))
    np.add.at(votes, (np.arange(d.shape[0])[:, None], col), 1.0)
    return classes, votes / k


def knn_predict(train_x, train_y, x, k=1):
    """Majority vote of the ``k`` nearest neighbours; ties go to the lowest id."""
    classes, votes = knn_scores(train_x, train_y, x, k)
    return classes[np.argmax(votes, axis=1)]


# -- zero-shot prediction ----------------------------------------------------

@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "svm"
    reg: float = 1e-4
    epochs: int = 50
    batch_size: int = 8
    knn_k: int = 5
    gen_samples: int = 200
    gen_noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("svm", "knn"):
            raise ConfigError(f"classifier kind must be 'svm' or 'knn', got {self.kind!r}",
                              field="kind")
        if int(self.gen_samples) < 1:
            raise ConfigError(f"gen_samples must be >= 1, got {self.gen_samples}",
                              field="gen_samples")
        if not self.gen_noise >= 0:
            raise ConfigError(f"gen_noise must be >= 0, got {self.gen_noise}", field="gen_noise")


@dataclass
class Prediction:
    labels: np.ndarray
    truth: np.ndarray
    scores: np.ndarray  # (n, len(classes))
    classes: np.ndarray


def _fit_and_predict(train_x, train_y, test_x, ccfg):
    if ccfg.kind == "svm":
        svm = fit_svm(train_x, train_y, ccfg.reg, ccfg.epochs, ccfg.seed, ccfg.batch_size)
        labels, scores = svm_predict(svm, test_x)
        return labels, scores, svm.classes
    k = min(ccfg.knn_k, len(train_y))
    classes, scores = knn_scores(train_x, train_y, test_x, k)
    return classes[np.argmax(scores, axis=1)], scores, classes


def generate_for(model, ds, ccfg, feedback=FeedbackConfig()):
    """Generated features and labels for every unseen class of ``ds``."""
    unseen = ds.split.unseen
    if unseen.size == 0:
        raise EvaluationError("dataset has no unseen classes")
    return generate_unseen(model, ds.attributes[unseen], k=ccfg.gen_samples,
                           sigma=ccfg.gen_noise, seed=ccfg.seed, labels=unseen,
                           cfg=feedback)


def zsl_predict(model, ds, ccfg=ClassifierConfig(), feedback=FeedbackConfig()):
    """Classify real unseen test features with a classifier fit on
    generated unseen features only."""
    test = ds.split.test_unseen
    if test.size == 0:
        raise EvaluationError("empty test_unseen pool")
    gx, gy = generate_for(model, ds, ccfg, feedback)
    labels, scores, classes = _fit_and_predict(gx, gy, ds.features[test], ccfg)
    return Prediction(labels, ds.labels[test], scores, classes)


def gzsl_predict(model, ds, ccfg=ClassifierConfig(), feedback=FeedbackConfig()):
    """One classifier over seen and unseen classes, trained on real seen
    training features plus generated unseen features.

    Returns ``(seen_prediction, unseen_prediction)``.
    """
    s = ds.split
    if s.test_seen.size == 0 or s.test_unseen.size == 0:
        raise EvaluationError("GZSL needs non-empty test_seen and test_unseen pools")
    gx, gy = generate_for(model, ds, ccfg, feedback)
    train_x = np.vstack([ds.features[s.train], gx])
    train_y = np.concatenate([ds.labels[s.train], gy])
    test_idx = np.concatenate([s.test_seen, s.test_unseen])
    labels, scores, classes = _fit_and_predict(train_x, train_y, ds.features[test_idx], ccfg)
    ns = s.test_seen.size
    truth = ds.labels[test_idx]
    return (Prediction(labels[:ns], truth[:ns], scores[:ns], classes),
            Prediction(labels[ns:], truth[ns:], scores[ns:], classes))
