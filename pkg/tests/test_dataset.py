import json
import os

import numpy as np
import pytest

from zslfeedback import dataset
from zslfeedback.dataset import SplitSpec, SynthConfig, ZslDataset, pk_batches, synth_generate
from zslfeedback.errors import ConfigError, DatasetError
from zslfeedback.npyio import write_npy


def write_dir(path, ds, fmt="npy", descr="<f8"):
    dataset.save(ds, path, fmt=fmt, descr=descr)
    return path


def nearest_mean_accuracy(ds):
    tr = ds.split.train
    means = {c: ds.features[tr][ds.labels[tr] == c].mean(0) for c in ds.split.seen.tolist()}
    keys = sorted(means)
    m = np.stack([means[c] for c in keys])
    test = ds.split.test_seen
    d = ((ds.features[test][:, None, :] - m[None]) ** 2).sum(-1)
    pred = np.array(keys)[d.argmin(1)]
    return float(np.mean(pred == ds.labels[test])), pred


def test_synth_counts_and_determinism():
    a = synth_generate(SynthConfig())
    b = synth_generate(SynthConfig())
    assert a.features.shape == (2500, 64) and a.attributes.shape == (25, 16)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.split.unseen, np.arange(20, 25))
    assert a.split.train.size == 1600 and a.split.test_seen.size == 400
    assert a.split.test_unseen.size == 500
    assert np.all((a.attributes >= 0) & (a.attributes <= 1))


def test_synth_zero_noise():
    ds = synth_generate(SynthConfig(sigma_x=0.0, per_class=5, n_seen=2, n_unseen=1))
    for c in range(3):
        rows = ds.features[ds.labels == c]
        assert np.all(rows == rows[0])


def test_default_benchmark_separation():
    ds = synth_generate(SynthConfig())
    acc, _ = nearest_mean_accuracy(ds)
    assert acc >= 0.95
    # the class means classify their own training set perfectly
    tr = ds.split.train
    keys = ds.split.seen
    m = np.stack([ds.features[tr][ds.labels[tr] == c].mean(0) for c in keys])
    d = ((ds.features[tr][:, None, :] - m[None]) ** 2).sum(-1)
    assert np.array_equal(keys[d.argmin(1)], ds.labels[tr])


@pytest.mark.parametrize("field,kw", [("n_seen", {"n_seen": 0}), ("per_class", {"per_class": 0}),
                                      ("d_x", {"d_x": 8, "D": 16}), ("sigma_x", {"sigma_x": -1})])
def test_synth_config_validation(field, kw):
    with pytest.raises(ConfigError) as info:
        SynthConfig(**kw)
    assert info.value.field == field


@pytest.mark.parametrize("fmt,descr", [("npy", "<f8"), ("npy", "<f4"), ("csv", "<f8")])
def test_save_load_round_trip(tmp_path, small_ds, fmt, descr):
    back = dataset.load(write_dir(tmp_path / "d", small_ds, fmt, descr))
    want = small_ds.features.astype(descr).astype(np.float64)
    assert np.array_equal(back.features, want)
    assert np.array_equal(back.labels, small_ds.labels)
    for key in dataset.SPLIT_KEYS:
        assert np.array_equal(getattr(back.split, key), getattr(small_ds.split, key))


def test_load_rejects_out_of_range_label(tmp_path, small_ds):
    d = write_dir(tmp_path / "d", small_ds)
    labels = (d / "labels.txt").read_text().splitlines()
    labels[7] = str(small_ds.n_classes)
    (d / "labels.txt").write_text("\n".join(labels) + "\n")
    with pytest.raises(DatasetError) as info:
        dataset.load(d)
    assert info.value.row == 7 and "labels.txt" in str(info.value)


def test_load_rejects_overlapping_classes(tmp_path, small_ds):
    d = write_dir(tmp_path / "d", small_ds)
    split = json.loads((d / "split.json").read_text())
    split["unseen"].append(split["seen"][0])
    (d / "split.json").write_text(json.dumps(split))
    with pytest.raises(DatasetError, match="overlap"):
        dataset.load(d)


def test_load_errors_name_file(tmp_path, small_ds):
    d = write_dir(tmp_path / "d", small_ds)
    os.remove(d / "split.json")
    with pytest.raises(DatasetError, match="split.json"):
        dataset.load(d)
    d = write_dir(tmp_path / "e", small_ds, fmt="csv")
    lines = (d / "features.csv").read_text().splitlines()
    lines[3] = lines[3] + ",1.0"
    (d / "features.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError) as info:
        dataset.load(d)
    assert info.value.row == 4
    d = write_dir(tmp_path / "f", small_ds)
    a = small_ds.attributes.copy()
    a[2, 0] = 1.5
    write_npy(d / "attributes.npy", a)
    with pytest.raises(DatasetError) as info:
        dataset.load(d)
    assert info.value.row == 2


def test_split_validation(small_ds):
    s = small_ds.split
    bad = SplitSpec(s.seen, s.unseen, np.r_[s.train, s.test_unseen[:1]], s.test_seen,
                    s.test_unseen)
    with pytest.raises(DatasetError):
        ZslDataset(small_ds.features, small_ds.labels, small_ds.attributes, bad)
    bad = SplitSpec(s.seen, s.unseen, s.train, np.r_[s.test_seen, s.train[:1]], s.test_unseen)
    with pytest.raises(DatasetError, match="share"):
        ZslDataset(small_ds.features, small_ds.labels, small_ds.attributes, bad)
    with pytest.raises(DatasetError):
        SplitSpec.from_json({"seen": [0]})


def test_awa2_shaped_load(tmp_path):
    # PS split sizes of the AWA2 benchmark: 40/10 classes, 23527 train,
    # 5882 seen test and 7913 unseen test images, 37322 in total
    rng = np.random.default_rng(0)
    n, n_seen_test, n_unseen_test = 37322, 5882, 7913
    n_seen_rows = n - n_unseen_test
    labels = np.r_[rng.integers(0, 40, n_seen_rows), rng.integers(40, 50, n_unseen_test)]
    labels[:40] = np.arange(40)
    labels[n_seen_rows:n_seen_rows + 10] = np.arange(40, 50)
    d = tmp_path / "awa2"
    d.mkdir()
    write_npy(d / "features.npy", rng.standard_normal((n, 2048), dtype=np.float32), "<f4")
    write_npy(d / "attributes.npy", rng.uniform(size=(50, 85)), "<f8")
    (d / "labels.txt").write_text("".join(f"{v}\n" for v in labels))
    seen_rows = np.arange(n_seen_rows)
    split = {"seen": list(range(40)), "unseen": list(range(40, 50)),
             "train": seen_rows[n_seen_test:].tolist(),
             "test_seen": seen_rows[:n_seen_test].tolist(),
             "test_unseen": list(range(n_seen_rows, n))}
    (d / "split.json").write_text(json.dumps(split))
    ds = dataset.load(d)
    assert ds.n == 37322 and ds.d_x == 2048 and ds.D == 85 and ds.n_classes == 50
    assert ds.split.train.size == 23527
    assert ds.split.test_unseen.size == 7913 and ds.split.test_seen.size == 5882


def tiny_two_class():
    return ZslDataset(np.arange(10.0).reshape(5, 2), [0, 0, 1, 1, 2], np.full((3, 2), 0.5),
                      SplitSpec([0, 1], [2], [0, 1, 2, 3], [], [4]))


def test_pk_exhaustive_batch():
    batches = list(pk_batches(tiny_two_class(), 2, 2, seed=0))
    assert len(batches) == 1 and sorted(batches[0].tolist()) == [0, 1, 2, 3]


def test_pk_batches_structure(small_ds):
    seen_idx = []
    for batch in pk_batches(small_ds, 4, 3, seed=1):
        y = small_ds.labels[batch]
        classes, counts = np.unique(y, return_counts=True)
        assert batch.size == 12 and classes.size == 4 and np.all(counts == 3)
        assert set(batch.tolist()) <= set(small_ds.split.train.tolist())
        seen_idx.extend(batch.tolist())
    assert len(seen_idx) == len(set(seen_idx))
    a = [b.tolist() for b in pk_batches(small_ds, 4, 3, seed=1)]
    b = [b.tolist() for b in pk_batches(small_ds, 4, 3, seed=1)]
    assert a == b


def test_pk_default_batch_size():
    ds = synth_generate(SynthConfig())
    assert {b.size for b in pk_batches(ds, 8, 4, seed=0)} == {32}


def test_pk_infeasible():
    with pytest.raises(ConfigError):
        list(pk_batches(tiny_two_class(), 3, 2, seed=0))
    with pytest.raises(ConfigError):
        list(pk_batches(tiny_two_class(), 2, 1, seed=0))
