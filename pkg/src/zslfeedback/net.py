"""Dense networks with analytic backpropagation, Adam, and weight files.

A network is an :class:`Mlp`: an ordered list of :class:`DenseLayer`
objects computing ``act(x @ W + b)``. Hidden layers use LeakyReLU with a
fixed negative slope of 0.2, output layers are linear.

Weight file layout (all integers little-endian)::

    b"ZSLF"                      magic
    u16  version (=1)
    u32  layer count L
    L x (u32 fan_in, u32 fan_out, u8 activation tag)
    L x (f32[fan_in * fan_out] weights row-major, f32[fan_out] bias)
    u32  CRC32 of every preceding byte
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FormatError, TrainingError
from .tensorcore import as_matrix

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("linear", "leaky_relu")

WEIGHTS_MAGIC = b"ZSLF"
WEIGHTS_VERSION = 1


@dataclass
class DenseLayer:
    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        self.weights = as_matrix(self.weights, "weights")
        self.bias = np.asarray(self.bias, dtype=np.float64).ravel()
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ContractError(
                f"bias length {self.bias.shape[0]} != fan_out {self.weights.shape[1]}")

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]


@dataclass
class Mlp:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ContractError("an Mlp needs at least one layer")
        for k in range(len(self.layers) - 1):
            a, b = self.layers[k], self.layers[k + 1]
            if a.fan_out != b.fan_in:
                raise ContractError(
                    f"layer {k} fan_out {a.fan_out} != layer {k + 1} fan_in {b.fan_in}")

    @property
    def in_dim(self):
        return self.layers[0].fan_in

    @property
    def out_dim(self):
        return self.layers[-1].fan_out

    @property
    def dims(self):
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    def params(self):
        """Parameter arrays in a fixed order: ``[W0, b0, W1, b1, ...]``."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def n_params(self):
        return sum(p.size for p in self.params())

    def copy(self):
        return Mlp([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation)
                    for l in self.layers])


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    pre: list  # pre-activation of each layer

    def __len__(self):
        return len(self.pre)


def _activate(z, activation):
    if activation == "linear":
        return z
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _activation_grad(z, activation):
    if activation == "linear":
        return np.ones_like(z)
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def forward(mlp, batch):
    """Run ``batch`` through ``mlp``; return the output and the cache."""
    x = as_matrix(batch, "batch")
    if x.shape[1] != mlp.in_dim:
        raise ContractError(
            f"batch has {x.shape[1]} columns, network expects {mlp.in_dim}")
    inputs, pre = [], []
    for layer in mlp.layers:
        inputs.append(x)
        z = x @ layer.weights + layer.bias
        pre.append(z)
        x = _activate(z, layer.activation)
    return x, ForwardCache(inputs, pre)


def backward(mlp, cache, grad_output):
    """Backpropagate ``grad_output`` through the cached forward pass.

    Returns ``(param_grads, grad_input)`` where ``param_grads`` follows the
    order of :meth:`Mlp.params`.
    """
    if len(cache) != len(mlp.layers):
        raise ContractError(
            f"cache depth {len(cache)} != layer count {len(mlp.layers)}")
    g = as_matrix(grad_output, "grad_output")
    if g.shape != cache.pre[-1].shape:
        raise ContractError(
            f"grad_output shape {g.shape} != output shape {cache.pre[-1].shape}")
    grads = [None] * (2 * len(mlp.layers))
    for k in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[k]
        gz = g * _activation_grad(cache.pre[k], layer.activation)
        grads[2 * k] = cache.inputs[k].T @ gz
        grads[2 * k + 1] = gz.sum(axis=0)
        g = gz @ layer.weights.T
    return grads, g


def init_mlp(dims, seed, activations=None, rng=None):
    """Build an Mlp with uniform ``±sqrt(6/fan_in)`` weights and zero bias.

    ``dims`` is the width chain ``[in, h1, ..., out]``. By default every
    layer is LeakyReLU except the last, which is linear. Pass ``rng`` to
    draw from an existing generator instead of ``seed``.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ContractError("dims needs at least an input and an output width")
    if any(d < 1 for d in dims):
        raise ContractError(f"zero-width layer in {dims}")
    n = len(dims) - 1
    if activations is None:
        activations = ["leaky_relu"] * (n - 1) + ["linear"]
    if len(activations) != n:
        raise ContractError(f"{len(activations)} activations for {n} layers")
    if rng is None:
        rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Mlp(layers)


@dataclass
class AdamState:
    """Adam moment accumulators for a fixed list of parameter arrays."""

    m: list
    v: list
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params, **hyper):
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state, batch_index=None):
    """One bias-corrected Adam update, applied to ``params`` in place.

    Raises :class:`TrainingError` before touching anything if a gradient
    is not finite.
    """
    if not (len(params) == len(grads) == len(state.m)):
        raise ContractError("params, grads and Adam state differ in length")
    for i, (p, g, m) in enumerate(zip(params, grads, state.m)):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractError(
                f"parameter {i}: shapes {p.shape}, {np.shape(g)}, {m.shape} disagree")
        # a sum is non-finite iff some entry is (or the sum overflows)
        if not np.isfinite(np.sum(g)):
            raise TrainingError(
                f"non-finite gradient in parameter {i} (batch {batch_index})",
                batch=batch_index)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        tmp = np.multiply(g, 1.0 - state.beta1)
        m *= state.beta1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - state.beta2
        v *= state.beta2
        v += tmp
        # p -= lr * (m / c1) / (sqrt(v / c2) + eps)
        np.divide(v, c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= state.lr / c1
        p -= tmp
    return params


# -- serialization ---------------------------------------------------------

_ACT_TAGS = {"linear": 0, "leaky_relu": 1}
_TAG_ACTS = {v: k for k, v in _ACT_TAGS.items()}


def weights_to_bytes(mlp):
    head = [WEIGHTS_MAGIC, struct.pack("<HI", WEIGHTS_VERSION, len(mlp.layers))]
    for layer in mlp.layers:
        head.append(struct.pack("<IIB", layer.fan_in, layer.fan_out,
                                _ACT_TAGS[layer.activation]))
    for layer in mlp.layers:
        head.append(layer.weights.astype("<f4").tobytes(order="C"))
        head.append(layer.bias.astype("<f4").tobytes())
    body = b"".join(head)
    return body + struct.pack("<I", zlib.crc32(body))


def weights_from_bytes(buf, base_offset=0):
    """Parse one weight block. Returns ``(mlp, bytes_consumed)``."""
    buf = memoryview(buf)

    def need(pos, n, what):
        if pos + n > len(buf):
            raise FormatError(f"truncated weight file while reading {what}",
                              base_offset + pos)

    need(0, 10, "header")
    if bytes(buf[:4]) != WEIGHTS_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}", base_offset)
    version, n_layers = struct.unpack_from("<HI", buf, 4)
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported weight file version {version}",
                          base_offset + 4)
    pos = 10
    table = []
    for k in range(n_layers):
        need(pos, 9, f"layer table entry {k}")
        fan_in, fan_out, tag = struct.unpack_from("<IIB", buf, pos)
        if tag not in _TAG_ACTS:
            raise FormatError(f"unknown activation tag {tag}", base_offset + pos + 8)
        if fan_in < 1 or fan_out < 1:
            raise FormatError(f"zero-width layer {k}", base_offset + pos)
        table.append((fan_in, fan_out, _TAG_ACTS[tag]))
        pos += 9
    layers = []
    for k, (fan_in, fan_out, act) in enumerate(table):
        nbytes = 4 * (fan_in * fan_out + fan_out)
        need(pos, nbytes, f"parameters of layer {k}")
        w = np.frombuffer(buf, dtype="<f4", count=fan_in * fan_out, offset=pos)
        b = np.frombuffer(buf, dtype="<f4", count=fan_out,
                          offset=pos + 4 * fan_in * fan_out)
        layers.append(DenseLayer(w.astype(np.float64).reshape(fan_in, fan_out),
                                 b.astype(np.float64), act))
        pos += nbytes
    need(pos, 4, "checksum")
    (crc,) = struct.unpack_from("<I", buf, pos)
    if crc != zlib.crc32(buf[:pos]):
        raise FormatError("checksum mismatch", base_offset + pos)
    try:
        mlp = Mlp(layers)
    except ContractError as exc:
        raise FormatError(f"inconsistent layer table: {exc}", base_offset + 10) from exc
    return mlp, pos + 4


def save_weights(mlp, path):
    with open(path, "wb") as fh:
        fh.write(weights_to_bytes(mlp))


def load_weights(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    mlp, used = weights_from_bytes(buf)
    if used != len(buf):
        raise FormatError("trailing bytes after weight block", used)
    return mlp
