"""Dense numeric helpers: checked matrix product, exact pairwise distances,
and the central-difference gradient checker used across the test-suite.

Matrices are plain 2-D ``numpy.float64`` arrays in C order.
"""

import numpy as np

from .errors import ContractError, GradCheckError


def as_matrix(a, name="matrix"):
    """Return ``a`` as a 2-D float64 array, rejecting other ranks."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b):
    """Matrix product with an explicit shape check.

    An empty inner dimension yields a zero matrix of shape
    ``(a.rows, b.cols)``.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ContractError(
            f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def pairwise_sq_dists(x):
    """Squared Euclidean distances between all rows of ``x``.

    The sum runs over columns left to right, so entry ``(i, j)`` is
    bit-identical to ``sum((x[i, k] - x[j, k]) ** 2 for k in ...)``
    accumulated in the same order. The result is exactly symmetric, has
    an exactly zero diagonal and is non-negative by construction.
    """
    x = as_matrix(x, "x")
    n, d = x.shape
    if n < 1:
        raise ContractError("pairwise_sq_dists needs at least one row")
    out = np.zeros((n, n))
    for k in range(d):
        col = x[:, k]
        diff = col[:, None] - col[None, :]
        out += diff * diff
    return out


def cross_sq_dists(a, b):
    """Squared distances between rows of ``a`` and rows of ``b``.

    Uses the Gram expansion (one matmul) and clamps small negative
    round-off to zero. Intended for large query/reference sets where the
    exact column loop in :func:`pairwise_sq_dists` would be slow.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ContractError(
            f"cross_sq_dists column mismatch: {a.shape} vs {b.shape}")
    sq_a = np.einsum("ij,ij->i", a, a)
    sq_b = np.einsum("ij,ij->i", b, b)
    d = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0)


def central_difference(f, theta, eps=1e-5):
    """Central-difference gradient of a scalar function of a vector."""
    theta = np.array(theta, dtype=np.float64).ravel()
    if not eps > 0:
        raise ContractError(f"eps must be positive, got {eps}")
    g = np.empty_like(theta)
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + eps
        fp = float(f(theta))
        theta[k] = orig - eps
        fm = float(f(theta))
        theta[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise GradCheckError(
                f"non-finite function value while perturbing coordinate {k}",
                coordinate=k)
        g[k] = (fp - fm) / (2.0 * eps)
    return g


def grad_check(f, grad, theta, eps=1e-5):
    """Maximum relative error between an analytic and a numerical gradient.

    Parameters
    ----------
    f : callable
        Maps a 1-D parameter vector to a scalar.
    grad : callable or array_like
        Analytic gradient, either as a function of ``theta`` or already
        evaluated at ``theta``.
    theta : array_like
        Point at which to compare.
    eps : float
        Central-difference step.

    Returns
    -------
    float
        ``max_k |ga[k] - gn[k]| / max(1, |ga[k]| + |gn[k]|)``; zero for an
        empty parameter vector.
    """
    theta = np.array(theta, dtype=np.float64).ravel()
    ga = grad(theta.copy()) if callable(grad) else grad
    ga = np.asarray(ga, dtype=np.float64).ravel()
    if ga.shape != theta.shape:
        raise ContractError(
            f"analytic gradient shape {ga.shape} != parameter shape {theta.shape}")
    bad = np.flatnonzero(~np.isfinite(ga))
    if bad.size:
        raise GradCheckError(
            f"non-finite analytic gradient at coordinate {bad[0]}",
            coordinate=int(bad[0]))
    gn = central_difference(f, theta, eps)
    if theta.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.abs(ga) + np.abs(gn))
    return float(np.max(np.abs(ga - gn) / denom))
