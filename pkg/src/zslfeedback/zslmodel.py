"""Encoder / decoder / regressor-feedback model.

* encoder ``d_x -> 1024 -> 512 -> D`` maps image features to a
  discriminative embedding the size of the attribute vector;
* decoder ``2D -> 1024 -> d_x`` reconstructs features from the
  concatenation ``[embedding, attribute]``;
* regressor ``d_x -> 1024 -> D`` maps a reconstruction back to the
  embedding space. With the default *shared* head its single output is
  compared against both the attribute and the encoder embedding; a
  *split* head (``-> 2D``) instead emits ``[semantic | discriminative]``
  halves. The head kind follows from the regressor's output width.

Model file layout (little-endian)::

    b"ZSLM", u16 version, u32 d_x, u32 D,
    3 x (u64 block length, ZSLF weight block)   # encoder, decoder, regressor
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import net
from .errors import ContractError, FormatError
from .tensorcore import as_matrix

MODEL_MAGIC = b"ZSLM"
MODEL_VERSION = 1


@dataclass
class ZslModel:
    d_x: int
    D: int
    encoder: net.Mlp
    decoder: net.Mlp
    regressor: net.Mlp

    def __post_init__(self):
        checks = [
            (self.encoder.in_dim, self.d_x, "encoder input"),
            (self.encoder.out_dim, self.D, "encoder output"),
            (self.decoder.in_dim, 2 * self.D, "decoder input"),
            (self.decoder.out_dim, self.d_x, "decoder output"),
            (self.regressor.in_dim, self.d_x, "regressor input"),
        ]
        for got, want, what in checks:
            if got != want:
                raise ContractError(f"{what} width {got}, expected {want}")
        if self.regressor.out_dim not in (self.D, 2 * self.D):
            raise ContractError(
                f"regressor output width {self.regressor.out_dim}, expected "
                f"{self.D} (shared) or {2 * self.D} (split)")

    @property
    def regressor_head(self):
        return "shared" if self.regressor.out_dim == self.D else "split"

    def networks(self):
        return (self.encoder, self.decoder, self.regressor)

    def params(self):
        return [p for mlp in self.networks() for p in mlp.params()]

    def copy(self):
        return ZslModel(self.d_x, self.D, self.encoder.copy(),
                        self.decoder.copy(), self.regressor.copy())


@dataclass(frozen=True)
class FeedbackConfig:
    """Number of decode/regress passes. ``iterations == 1`` means the
    regressor only regularizes training; larger values refine outputs."""

    iterations: int = 1

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise ContractError(f"feedback iterations must be >= 1, got {self.iterations}")

    @property
    def mode(self):
        return "regularizer_only" if self.iterations == 1 else "refine"


def build_model(d_x, D, seed=0, encoder_hidden=(1024, 512), decoder_hidden=(1024,),
                regressor_hidden=(1024,), regressor_head="shared"):
    """Fresh model with the default widths; all three nets share one RNG."""
    if regressor_head not in ("shared", "split"):
        raise ContractError(f"regressor_head must be 'shared' or 'split', got {regressor_head!r}")
    rng = np.random.default_rng(seed)
    enc = net.init_mlp([d_x, *encoder_hidden, D], None, rng=rng)
    dec = net.init_mlp([2 * D, *decoder_hidden, d_x], None, rng=rng)
    reg_out = D if regressor_head == "shared" else 2 * D
    reg = net.init_mlp([d_x, *regressor_hidden, reg_out], None, rng=rng)
    return ZslModel(int(d_x), int(D), enc, dec, reg)


def encode(model, x):
    x = as_matrix(x, "x")
    if x.shape[1] != model.d_x:
        raise ContractError(f"x has {x.shape[1]} columns, model expects {model.d_x}")
    return net.forward(model.encoder, x)[0]


def _decoder_input(model, embed, attr):
    embed = as_matrix(embed, "embed")
    attr = as_matrix(attr, "attr")
    if embed.shape != attr.shape or embed.shape[1] != model.D:
        raise ContractError(
            f"decode needs two n x {model.D} inputs, got {embed.shape} and {attr.shape}")
    return np.concatenate([embed, attr], axis=1)


def decode(model, embed, attr):
    """Reconstruct features from ``[embed, attr]``."""
    return net.forward(model.decoder, _decoder_input(model, embed, attr))[0]


def split_regression(model, out):
    """Raw regressor output as ``(semantic, discriminative)``.

    A shared head returns its one output in both positions.
    """
    if model.regressor_head == "shared":
        return out, out
    return out[:, :model.D], out[:, model.D:]


def regress(model, x_hat):
    x_hat = as_matrix(x_hat, "x_hat")
    if x_hat.shape[1] != model.d_x:
        raise ContractError(
            f"x_hat has {x_hat.shape[1]} columns, model expects {model.d_x}")
    out = net.forward(model.regressor, x_hat)[0]
    return split_regression(model, out)


def refine_from(model, embed, attr, cfg):
    """Run the feedback loop starting from decoder input ``[embed, attr]``.

    Iteration 1 decodes ``[embed, attr]``; each later iteration decodes the
    previous reconstruction's regressor output: the discriminative part
    goes in the embedding slot and the semantic part in the attribute slot
    (with a shared head both slots receive the same vector).
    """
    outs = []
    e, a = embed, attr
    for t in range(cfg.iterations):
        x_hat = decode(model, e, a)
        outs.append(x_hat)
        if t + 1 < cfg.iterations:
            a, e = regress(model, x_hat)
    return outs


def feedback_refine(model, x, attr, cfg=FeedbackConfig()):
    """All ``cfg.iterations`` reconstructions of ``x``, in order."""
    return refine_from(model, encode(model, x), attr, cfg)


def generate_unseen(model, a_u, k=200, sigma=0.05, seed=0, labels=None,
                    cfg=FeedbackConfig()):
    """Synthesize ``k`` features per unseen class from its attribute row.

    The decoder input for each sample is ``[a + noise, a]`` with Gaussian
    noise of std ``sigma`` on the embedding slot only. Rows come out
    grouped by class. Returns ``(features, labels)``; labels default to
    ``0 .. c_u - 1``.
    """
    a_u = as_matrix(a_u, "a_u")
    if a_u.shape[1] != model.D:
        raise ContractError(f"attribute rows have {a_u.shape[1]} columns, expected {model.D}")
    if k < 1:
        raise ContractError(f"samples per class must be >= 1, got {k}")
    if labels is None:
        labels = np.arange(a_u.shape[0])
    labels = np.asarray(labels)
    if labels.shape != (a_u.shape[0],):
        raise ContractError("need one label per attribute row")
    attr = np.repeat(a_u, k, axis=0)
    embed = attr.copy()
    if sigma > 0:
        rng = np.random.default_rng(seed)
        embed += rng.normal(0.0, sigma, size=attr.shape)
    feats = refine_from(model, embed, attr, cfg)[-1]
    return feats, np.repeat(labels, k)


# -- serialization ---------------------------------------------------------

def model_to_bytes(model):
    parts = [MODEL_MAGIC, struct.pack("<HII", MODEL_VERSION, model.d_x, model.D)]
    for mlp in model.networks():
        block = net.weights_to_bytes(mlp)
        parts.append(struct.pack("<Q", len(block)))
        parts.append(block)
    return b"".join(parts)


def model_from_bytes(buf):
    buf = memoryview(buf)
    if len(buf) < 14:
        raise FormatError("truncated model header", len(buf))
    if bytes(buf[:4]) != MODEL_MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}", 0)
    version, d_x, D = struct.unpack_from("<HII", buf, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model file version {version}", 4)
    pos = 14
    nets = []
    for name in ("encoder", "decoder", "regressor"):
        if pos + 8 > len(buf):
            raise FormatError(f"truncated before {name} block", pos)
        (length,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        if pos + length > len(buf):
            raise FormatError(f"truncated {name} block", len(buf))
        mlp, used = net.weights_from_bytes(buf[pos:pos + length], base_offset=pos)
        if used != length:
            raise FormatError(f"{name} block length mismatch", pos + used)
        nets.append(mlp)
        pos += length
    if pos != len(buf):
        raise FormatError("trailing bytes after model", pos)
    try:
        return ZslModel(d_x, D, *nets)
    except ContractError as exc:
        raise FormatError(f"inconsistent model dimensions: {exc}", 6) from exc


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
