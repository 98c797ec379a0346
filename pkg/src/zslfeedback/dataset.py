"""Zero-shot datasets: in-memory model, on-disk format, synthetic
benchmark and P x K batch sampling.

A dataset directory holds::

    features.npy | features.csv     n x d_x
    attributes.npy | attributes.csv C x D, entries in [0, 1]
    labels.txt                      one class id per line
    split.json                      {"seen", "unseen", "train", "test_seen", "test_unseen"}

CSV files carry exactly one header row.
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from . import net
from .errors import ConfigError, DatasetError, FormatError
from .npyio import read_npy, write_npy

SPLIT_KEYS = ("seen", "unseen", "train", "test_seen", "test_unseen")


@dataclass
class SplitSpec:
    seen: np.ndarray
    unseen: np.ndarray
    train: np.ndarray
    test_seen: np.ndarray
    test_unseen: np.ndarray

    def __post_init__(self):
        for key in SPLIT_KEYS:
            setattr(self, key, np.asarray(getattr(self, key), dtype=np.int64).ravel())

    def to_json(self):
        return {k: [int(v) for v in getattr(self, k)] for k in SPLIT_KEYS}

    @classmethod
    def from_json(cls, obj, file=None):
        if not isinstance(obj, dict):
            raise DatasetError("split manifest must be a JSON object", file=file)
        missing = [k for k in SPLIT_KEYS if k not in obj]
        extra = sorted(set(obj) - set(SPLIT_KEYS))
        if missing or extra:
            raise DatasetError(
                f"split manifest keys: missing {missing}, unexpected {extra}", file=file)
        for k in SPLIT_KEYS:
            vals = obj[k]
            if not isinstance(vals, list) or not all(
                    isinstance(v, int) and not isinstance(v, bool) for v in vals):
                raise DatasetError(f"split entry {k!r} must be a list of integers", file=file)
        return cls(**{k: obj[k] for k in SPLIT_KEYS})


@dataclass
class ZslDataset:
    features: np.ndarray
    labels: np.ndarray
    attributes: np.ndarray
    split: SplitSpec

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        self.attributes = np.asarray(self.attributes, dtype=np.float64)
        self.validate()

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d_x(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return self.attributes.shape[0]

    @property
    def D(self):
        return self.attributes.shape[1]

    def validate(self, files=None):
        """Check every dataset invariant; raise :class:`DatasetError`."""
        files = files or {}
        ff, lf, af, sf = (files.get(k) for k in ("features", "labels", "attributes", "split"))
        x, y, a, s = self.features, self.labels, self.attributes, self.split
        if x.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {x.shape}", file=ff)
        if a.ndim != 2:
            raise DatasetError(f"attributes must be 2-D, got shape {a.shape}", file=af)
        bad = np.argwhere(~np.isfinite(x))
        if bad.size:
            raise DatasetError("non-finite feature value", file=ff, row=int(bad[0, 0]))
        if y.shape[0] != x.shape[0]:
            raise DatasetError(
                f"{y.shape[0]} labels for {x.shape[0]} feature rows", file=lf)
        C = a.shape[0]
        bad = np.flatnonzero((y < 0) | (y >= C))
        if bad.size:
            raise DatasetError(
                f"label {y[bad[0]]} outside [0, {C})", file=lf, row=int(bad[0]))
        bad = np.argwhere(~np.isfinite(a) | (a < 0) | (a > 1))
        if bad.size:
            raise DatasetError("attribute entry outside [0, 1]", file=af, row=int(bad[0, 0]))
        seen, unseen = set(s.seen.tolist()), set(s.unseen.tolist())
        if len(seen) != s.seen.size or len(unseen) != s.unseen.size:
            raise DatasetError("duplicate class ids in split", file=sf)
        for cls in seen | unseen:
            if not 0 <= cls < C:
                raise DatasetError(f"split class {cls} outside [0, {C})", file=sf)
        overlap = seen & unseen
        if overlap:
            raise DatasetError(
                f"seen and unseen classes overlap: {sorted(overlap)}", file=sf)
        pools = {}
        for key in ("train", "test_seen", "test_unseen"):
            idx = getattr(s, key)
            out = np.flatnonzero((idx < 0) | (idx >= x.shape[0]))
            if out.size:
                raise DatasetError(f"{key} index {idx[out[0]]} out of range", file=sf)
            if np.unique(idx).size != idx.size:
                raise DatasetError(f"duplicate indices in {key}", file=sf)
            allowed = unseen if key == "test_unseen" else seen
            wrong = [int(i) for i in idx if int(y[i]) not in allowed]
            if wrong:
                kind = "unseen" if key == "test_unseen" else "seen"
                raise DatasetError(
                    f"{key} index {wrong[0]} has label {y[wrong[0]]}, not a {kind} class",
                    file=sf)
            pools[key] = set(idx.tolist())
        for a_key, b_key in (("train", "test_seen"), ("train", "test_unseen"),
                             ("test_seen", "test_unseen")):
            both = pools[a_key] & pools[b_key]
            if both:
                raise DatasetError(
                    f"{a_key} and {b_key} share index {min(both)}", file=sf)

    def train_attributes(self):
        """Attribute row of every training sample, aligned with ``split.train``."""
        return self.attributes[self.labels[self.split.train]]


# -- disk format -------------------------------------------------------------

def _read_csv_matrix(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError("empty CSV (header row required)", file=path)
    header, body = rows[0], rows[1:]
    out = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetError(
                f"expected {len(header)} columns, found {len(row)}", file=path, row=r)
        try:
            out[r - 2] = [float(v) for v in row]
        except ValueError as exc:
            raise DatasetError(f"non-numeric value: {exc}", file=path, row=r) from exc
    return out


def _write_csv_matrix(path, m, prefix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{prefix}{j}" for j in range(m.shape[1])])
        for row in m:
            w.writerow([format(float(v), ".17g") for v in row])


def _read_matrix(dirpath, stem):
    npy = os.path.join(dirpath, stem + ".npy")
    csv_path = os.path.join(dirpath, stem + ".csv")
    if os.path.exists(npy):
        try:
            m = read_npy(npy)
        except FormatError as exc:
            raise DatasetError(str(exc), file=npy) from exc
        if m.ndim != 2:
            raise DatasetError(f"expected a 2-D array, got shape {m.shape}", file=npy)
        return m.astype(np.float64), npy
    if os.path.exists(csv_path):
        return _read_csv_matrix(csv_path), csv_path
    raise DatasetError(f"missing {stem}.npy or {stem}.csv", file=dirpath)


def _read_labels(path):
    if not os.path.exists(path):
        raise DatasetError("missing labels file", file=path)
    out = []
    with open(path) as fh:
        for r, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError as exc:
                raise DatasetError(f"not an integer label: {line!r}", file=path, row=r) from exc
    return np.asarray(out, dtype=np.int64)


def load(dirpath):
    """Read and validate a dataset directory."""
    features, ffile = _read_matrix(dirpath, "features")
    attributes, afile = _read_matrix(dirpath, "attributes")
    lfile = os.path.join(dirpath, "labels.txt")
    labels = _read_labels(lfile)
    sfile = os.path.join(dirpath, "split.json")
    if not os.path.exists(sfile):
        raise DatasetError("missing split manifest", file=sfile)
    with open(sfile) as fh:
        try:
            split = SplitSpec.from_json(json.load(fh), file=sfile)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid JSON: {exc}", file=sfile, row=exc.lineno) from exc
    ds = ZslDataset.__new__(ZslDataset)
    ds.features, ds.labels, ds.attributes, ds.split = features, labels, attributes, split
    ds.validate({"features": ffile, "labels": lfile, "attributes": afile, "split": sfile})
    return ds


def save(ds, dirpath, fmt="npy", descr="<f8"):
    """Write ``ds`` in the directory format. ``fmt`` is ``"npy"`` or ``"csv"``."""
    os.makedirs(dirpath, exist_ok=True)
    if fmt == "npy":
        write_npy(os.path.join(dirpath, "features.npy"), ds.features, descr)
        write_npy(os.path.join(dirpath, "attributes.npy"), ds.attributes, descr)
    elif fmt == "csv":
        _write_csv_matrix(os.path.join(dirpath, "features.csv"), ds.features, "f")
        _write_csv_matrix(os.path.join(dirpath, "attributes.csv"), ds.attributes, "a")
    else:
        raise ConfigError(f"unknown dataset format {fmt!r}", field="format")
    with open(os.path.join(dirpath, "labels.txt"), "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in ds.labels)
    with open(os.path.join(dirpath, "split.json"), "w") as fh:
        json.dump(ds.split.to_json(), fh)
        fh.write("\n")


# -- synthetic benchmark ------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    D: int = 16
    d_x: int = 64
    n_seen: int = 20
    n_unseen: int = 5
    per_class: int = 100
    sigma_x: float = 0.3
    seed: int = 0
    test_seen_frac: float = 0.2

    def __post_init__(self):
        for name in ("D", "d_x", "n_seen", "n_unseen", "per_class"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}", field=name)
        if self.d_x < self.D:
            raise ConfigError(f"d_x ({self.d_x}) must be >= D ({self.D})", field="d_x")
        if not self.sigma_x >= 0:
            raise ConfigError(f"sigma_x must be >= 0, got {self.sigma_x}", field="sigma_x")
        if not 0 <= self.test_seen_frac < 1:
            raise ConfigError(
                f"test_seen_frac must be in [0, 1), got {self.test_seen_frac}",
                field="test_seen_frac")


def class_means(attributes, d_x, rng):
    """Fixed random two-layer LeakyReLU map from attributes to feature means."""
    D = attributes.shape[1]
    hidden = max(d_x, 2 * D)
    w1 = rng.normal(0.0, 1.0 / np.sqrt(D), size=(D, hidden))
    b1 = rng.normal(0.0, 0.5, size=hidden)
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, d_x))
    z = attributes @ w1 + b1
    h = np.where(z > 0, z, net.LEAKY_SLOPE * z)
    return h @ w2


def synth_generate(cfg=SynthConfig()):
    """Deterministic synthetic dataset; unseen classes take the top ids."""
    rng = np.random.default_rng(cfg.seed)
    C = cfg.n_seen + cfg.n_unseen
    attributes = rng.uniform(0.0, 1.0, size=(C, cfg.D))
    means = class_means(attributes, cfg.d_x, rng)
    labels = np.repeat(np.arange(C), cfg.per_class)
    noise = rng.normal(0.0, 1.0, size=(labels.size, cfg.d_x))
    features = means[labels] + cfg.sigma_x * noise
    n_test = int(round(cfg.test_seen_frac * cfg.per_class))
    train, test_seen, test_unseen = [], [], []
    for c in range(C):
        idx = np.arange(c * cfg.per_class, (c + 1) * cfg.per_class)
        if c < cfg.n_seen:
            held = rng.permutation(idx)
            test_seen.append(np.sort(held[:n_test]))
            train.append(np.sort(held[n_test:]))
        else:
            test_unseen.append(idx)
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, np.int64)
    split = SplitSpec(np.arange(cfg.n_seen), np.arange(cfg.n_seen, C),
                      cat(train), cat(test_seen), cat(test_unseen))
    return ZslDataset(features, labels, attributes, split)


# -- batch sampling ----------------------------------------------------------

def pk_batches(ds, P, K, seed):
    """One epoch of P-classes x K-samples batches of training indices.

    Each eligible class's training indices are shuffled and cut into
    chunks of K; batches draw P distinct classes (weighted by remaining
    chunks) until fewer than P classes have chunks left. No index repeats
    within an epoch.
    """
    if P < 2 or K < 2:
        raise ConfigError(f"need P >= 2 and K >= 2, got P={P}, K={K}", field="P" if P < 2 else "K")
    rng = np.random.default_rng(seed)
    train = ds.split.train
    by_class = {}
    for c in np.unique(ds.labels[train]):
        idx = train[ds.labels[train] == c]
        if idx.size >= K:
            by_class[int(c)] = idx
    if len(by_class) < P:
        raise ConfigError(
            f"only {len(by_class)} seen classes have >= {K} training samples; P={P}",
            field="P")
    classes = sorted(by_class)
    chunks = {}
    for c in classes:
        perm = rng.permutation(by_class[c])
        chunks[c] = [perm[i:i + K] for i in range(0, perm.size - K + 1, K)]
    while True:
        live = [c for c in classes if chunks[c]]
        if len(live) < P:
            return
        weights = np.array([len(chunks[c]) for c in live], dtype=np.float64)
        pick = rng.choice(len(live), size=P, replace=False, p=weights / weights.sum())
        yield np.concatenate([chunks[live[i]].pop() for i in sorted(pick)])
