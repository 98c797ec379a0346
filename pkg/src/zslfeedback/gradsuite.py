"""Finite-difference checks for every layer type, every loss, and the
composed training objective on a tiny model.

Each check perturbs one group of inputs or parameters and compares the
analytic gradient against central differences with :func:`grad_check`.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import net
from .losses import (ObjectiveWeights, TripletConfig, reconstruction_loss,
                     regressor_loss, triplet_batch_hard)
from .tensorcore import grad_check
from .zslmodel import FeedbackConfig, build_model

TOLERANCE = 1e-4
EPS = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    n_params: int
    seconds: float

    @property
    def passed(self):
        return self.max_rel_error <= TOLERANCE


def _flatten(arrays):
    return np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0)


def _assign(arrays, theta):
    pos = 0
    for a in arrays:
        a[...] = theta[pos:pos + a.size].reshape(a.shape)
        pos += a.size


def _with_params(arrays, f):
    """Wrap ``f()`` so it is evaluated with ``arrays`` set from ``theta``."""
    def wrapped(theta):
        saved = [a.copy() for a in arrays]
        _assign(arrays, theta)
        try:
            return f()
        finally:
            _assign(arrays, _flatten(saved))
    return wrapped


# -- individual checks -------------------------------------------------------

def _layer_check(activation, rng):
    mlp = net.init_mlp([5, 4], None, activations=[activation], rng=rng)
    x = rng.normal(size=(6, 5))
    r = rng.normal(size=(6, 4))

    def value():
        return float(np.sum(net.forward(mlp, x)[0] * r))

    params = mlp.params()
    _, cache = net.forward(mlp, x)
    grads, gx = net.backward(mlp, cache, r)
    f_params = _with_params(params, value)
    f_input = _with_params([x], value)
    return [(f_params, _flatten(grads), _flatten(params)), (f_input, gx, x.ravel())]


def _mlp_check(rng):
    mlp = net.init_mlp([5, 7, 6, 3], None, rng=rng)
    x = rng.normal(size=(6, 5))
    r = rng.normal(size=(6, 3))
    params = mlp.params()
    _, cache = net.forward(mlp, x)
    grads, _ = net.backward(mlp, cache, r)
    f = _with_params(params, lambda: float(np.sum(net.forward(mlp, x)[0] * r)))
    return [(f, _flatten(grads), _flatten(params))]


def _triplet_check(rng):
    labels = np.repeat(np.arange(3), 3)
    e = rng.normal(size=(9, 4))
    cfg = TripletConfig(margin=1.0)
    _, g = triplet_batch_hard(e, labels, cfg)
    f = _with_params([e], lambda: triplet_batch_hard(e, labels, cfg)[0])
    return [(f, g, e.ravel())]


def _reconstruction_check(rng):
    x = rng.normal(size=(6, 5))
    x_hat = rng.normal(size=(6, 5))
    _, g = reconstruction_loss(x, x_hat)
    f = _with_params([x_hat], lambda: reconstruction_loss(x, x_hat)[0])
    return [(f, g, x_hat.ravel())]


def _regressor_check(rng, which):
    sem, dis, attr, emb = (rng.normal(size=(6, 4)) for _ in range(4))
    if which == "semantic":
        lam, wrt = 0.0, [sem]
    elif which == "discriminative":
        # zero semantic residual isolates the discriminative term
        sem, lam, wrt = attr.copy(), 1.0, [dis, emb]
    else:
        lam, wrt = 0.7, [sem, dis, attr, emb]
    _, (g_sem, g_dis, g_attr, g_emb) = regressor_loss(sem, dis, attr, emb, lam)
    by_id = {id(sem): g_sem, id(dis): g_dis, id(attr): g_attr, id(emb): g_emb}
    f = _with_params(wrt, lambda: regressor_loss(sem, dis, attr, emb, lam)[0])
    return [(f, _flatten([by_id[id(a)] for a in wrt]), _flatten(wrt))]


def _objective_check(rng, iterations, head):
    from .pipeline import objective

    model = build_model(12, 4, seed=int(rng.integers(2 ** 31)), encoder_hidden=(8, 6),
                        decoder_hidden=(8,), regressor_hidden=(8,), regressor_head=head)
    labels = np.repeat(np.arange(3), 3)
    x = rng.normal(size=(9, 12))
    attr = rng.uniform(size=(3, 4))[labels]
    w = ObjectiveWeights(alpha=0.5, beta=0.8, lam=0.6)
    fb = FeedbackConfig(iterations)
    params = model.params()

    def value():
        return objective(model, x, attr, labels, w, TripletConfig(), fb)[0]["total"]

    _, grads = objective(model, x, attr, labels, w, TripletConfig(), fb)
    return [(_with_params(params, value), _flatten(grads), _flatten(params))]


CHECKS = {
    "dense_linear": lambda rng: _layer_check("linear", rng),
    "dense_leaky_relu": lambda rng: _layer_check("leaky_relu", rng),
    "mlp_stack": _mlp_check,
    "triplet_loss": _triplet_check,
    "reconstruction_loss": _reconstruction_check,
    "semantic_regression": lambda rng: _regressor_check(rng, "semantic"),
    "discriminative_regression": lambda rng: _regressor_check(rng, "discriminative"),
    "regressor_loss": lambda rng: _regressor_check(rng, "combined"),
    "full_objective": lambda rng: _objective_check(rng, 1, "shared"),
    "full_objective_feedback2": lambda rng: _objective_check(rng, 2, "shared"),
    "full_objective_split_head": lambda rng: _objective_check(rng, 1, "split"),
}


def run_gradchecks(seed=0, corrupt=None, names=None):
    """Run the named checks (all by default) and return their results.

    ``corrupt`` names a check whose analytic gradient gets a deliberate
    error of 1e-2 on its first coordinate, to prove the harness notices.
    """
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names + ([corrupt] if corrupt else []) if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown gradient check {unknown[0]!r}")
    results = []
    for i, name in enumerate(names):
        rng = np.random.default_rng([seed, i])
        start = time.perf_counter()
        worst, size = 0.0, 0
        for f, g, theta in CHECKS[name](rng):
            g = np.array(g, dtype=np.float64).ravel()
            if name == corrupt:
                g[0] += 1e-2
            worst = max(worst, grad_check(f, g, theta, EPS))
            size += g.size
        results.append(CheckResult(name, worst, size, time.perf_counter() - start))
    return results
