import json

import numpy as np
import pytest

from zslfeedback import pipeline
from zslfeedback.dataset import SplitSpec, ZslDataset
from zslfeedback.errors import ConfigError, ContractError, EvaluationError, TrainingError
from zslfeedback.losses import ObjectiveWeights
from zslfeedback.pipeline import (ClassifierConfig, TrainConfig, fit_svm, gzsl_predict,
                                  knn_predict, objective, svm_predict, train, zsl_predict)
from zslfeedback.zslmodel import FeedbackConfig, build_model, decode


def small_model(ds, seed=0, head="shared"):
    return build_model(ds.d_x, ds.D, seed=seed, encoder_hidden=(32, 16), decoder_hidden=(32,),
                       regressor_hidden=(32,), regressor_head=head)


def two_clusters(rng, n=40):
    x = np.r_[rng.normal(size=(n, 3)) + [4, 0, 0], rng.normal(size=(n, 3)) - [4, 0, 0]]
    return x, np.repeat([3, 7], n)


def test_objective_alpha_beta_zero_touches_encoder_only(small_ds):
    model = small_model(small_ds)
    idx = next(pipeline.pk_batches(small_ds, 3, 4, seed=0))
    y = small_ds.labels[idx]
    w = ObjectiveWeights(alpha=0.0, beta=0.0)
    terms, grads = objective(model, small_ds.features[idx], small_ds.attributes[y], y, w)
    assert terms["total"] == terms["encoder"]
    n_enc = len(model.encoder.params())
    assert any(np.any(g != 0) for g in grads[:n_enc])
    assert all(np.all(g == 0) for g in grads[n_enc:])
    before = [p.copy() for p in model.params()]
    train(model, small_ds, TrainConfig(epochs=1, P=3, K=4, weights=w))
    after = model.params()
    assert any(not np.array_equal(a, b) for a, b in zip(before[:n_enc], after[:n_enc]))
    assert all(np.array_equal(a, b) for a, b in zip(before[n_enc:], after[n_enc:]))


def test_train_log_and_determinism(small_ds):
    cfg = TrainConfig(epochs=3, P=3, K=4, lr=1e-3, seed=4)
    m1, log1 = train(small_model(small_ds), small_ds, cfg)
    m2, log2 = train(small_model(small_ds), small_ds, cfg)
    assert [r["epoch"] for r in log1.records] == [1, 2, 3]
    assert log1.to_json() == log2.to_json()
    for p, q in zip(m1.params(), m2.params()):
        assert np.array_equal(p, q)
    assert set(log1.initial) == set(pipeline.TERMS)
    assert all(np.isfinite(log1.series(t)).all() for t in pipeline.TERMS)


def test_use_triplet_off_excludes_encoder_term(small_ds):
    model = small_model(small_ds)
    idx = next(pipeline.pk_batches(small_ds, 3, 4, seed=0))
    y = small_ds.labels[idx]
    terms, _ = objective(model, small_ds.features[idx], small_ds.attributes[y], y,
                         use_triplet=False)
    assert terms["encoder"] > 0
    assert terms["total"] == terms["reconstruction"] + terms["regressor"]


def test_non_finite_loss_aborts_with_location(small_ds):
    huge = ZslDataset(small_ds.features * 1e200, small_ds.labels, small_ds.attributes,
                      small_ds.split)
    with np.errstate(all="ignore"), pytest.raises(TrainingError) as info:
        train(small_model(small_ds), huge, TrainConfig(epochs=2, P=3, K=4))
    # caught while evaluating the untrained model, before any update
    assert info.value.epoch == 0 and info.value.batch == 0
    assert info.value.term is not None


def test_divergence_reports_training_epoch(small_ds, monkeypatch):
    real = pipeline.objective

    def poisoned(*args, **kw):
        terms, grads = real(*args, **kw)
        grads[0] = grads[0] * np.nan
        return terms, grads

    # the initial evaluation ignores gradients, so the first update trips
    monkeypatch.setattr(pipeline, "objective", poisoned)
    with pytest.raises(TrainingError) as info:
        train(small_model(small_ds), small_ds, TrainConfig(epochs=3, P=3, K=4))
    assert (info.value.epoch, info.value.batch) == (1, 0)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)


def test_total_descends_on_benchmark(benchmark):
    log = json.loads((benchmark["dir"] / "trainlog.json").read_text())
    records = log["records"]
    assert len(records) == 50
    assert records[29]["total"] < records[0]["total"]
    assert all(np.isfinite(r[t]) for r in records for t in pipeline.TERMS)


# -- SVM ---------------------------------------------------------------------

def test_svm_separable(rng):
    x, y = two_clusters(rng)
    svm = fit_svm(x, y, reg=1e-3, epochs=30, seed=0)
    assert svm.weights.shape == (2, 3) and list(svm.classes) == [3, 7]
    labels, scores = svm_predict(svm, x)
    assert np.array_equal(labels, y) and scores.shape == (80, 2)


def test_svm_strong_regularization_shrinks_weights(rng):
    x, y = two_clusters(rng)
    weak = fit_svm(x, y, reg=1e-3, epochs=10)
    strong = fit_svm(x, y, reg=1e6, epochs=10)
    assert np.abs(strong.weights).max() < 1e-3 * np.abs(weak.weights).max()


def test_svm_scores_affine(rng):
    x, y = two_clusters(rng)
    svm = fit_svm(x, y, epochs=5)
    a, b, t = x[0], x[5], 0.3
    s = svm.decision_function(np.stack([a, b, t * a + (1 - t) * b]))
    np.testing.assert_allclose(s[2], t * s[0] + (1 - t) * s[1], rtol=1e-12, atol=1e-9)


def test_svm_deterministic(rng):
    x, y = two_clusters(rng)
    a, b = fit_svm(x, y, seed=3, epochs=5), fit_svm(x, y, seed=3, epochs=5)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)


def test_svm_single_class_rejected():
    with pytest.raises(ConfigError):
        fit_svm(np.ones((3, 2)), [1, 1, 1])


def test_svm_predict_bias_only_and_ties():
    svm = pipeline.LinearSvm(np.array([2, 5, 9]), np.zeros((3, 2)), np.array([0.1, 0.7, 0.3]))
    labels, _ = svm_predict(svm, np.random.default_rng(0).normal(size=(6, 2)))
    assert np.all(labels == 5)
    tie = pipeline.LinearSvm(np.array([2, 5]), np.zeros((2, 2)), np.array([0.4, 0.4]))
    assert np.all(svm_predict(tie, np.ones((3, 2)))[0] == 2)
    with pytest.raises(ContractError):
        svm_predict(svm, np.ones((2, 3)))


def test_svm_argmax_scale_invariant(rng):
    x, y = two_clusters(rng)
    svm = fit_svm(x, y, epochs=5)
    scaled = pipeline.LinearSvm(svm.classes, 3.5 * svm.weights, 3.5 * svm.bias)
    assert np.array_equal(svm_predict(svm, x)[0], svm_predict(scaled, x)[0])


# -- KNN ---------------------------------------------------------------------

def test_knn_examples(rng):
    tx = rng.normal(size=(10, 3))
    ty = rng.integers(0, 3, 10)
    assert np.array_equal(knn_predict(tx, ty, tx, k=1), ty)
    tx = np.array([[0.0], [1.0], [2.0], [10.0]])
    ty = np.array([4, 4, 4, 8])
    assert np.all(knn_predict(tx, ty, np.array([[9.0], [10.0], [-3.0]]), k=4) == 4)


def test_knn_order_invariant(rng):
    tx = rng.normal(size=(30, 4))
    ty = rng.integers(0, 4, 30)
    q = rng.normal(size=(20, 4))
    perm = rng.permutation(30)
    assert np.array_equal(knn_predict(tx, ty, q, 5), knn_predict(tx[perm], ty[perm], q, 5))


def test_knn_ties_lowest_class():
    tx = np.array([[-1.0], [1.0]])
    assert knn_predict(tx, np.array([6, 2]), np.array([[0.0]]), k=2)[0] == 2


def test_knn_errors():
    with pytest.raises(ContractError):
        knn_predict(np.zeros((0, 2)), np.zeros(0), np.ones((1, 2)))
    with pytest.raises(ContractError):
        knn_predict(np.ones((3, 2)), [0, 1, 1], np.ones((1, 2)), k=4)


# -- zero-shot prediction ----------------------------------------------------

def test_zsl_and_gzsl_label_sets(small_ds):
    model = small_model(small_ds)
    ccfg = ClassifierConfig(gen_samples=10, epochs=3)
    pred = zsl_predict(model, small_ds, ccfg)
    unseen = set(small_ds.split.unseen.tolist())
    assert set(pred.labels.tolist()) <= unseen and list(pred.classes) == sorted(unseen)
    seen_p, unseen_p = gzsl_predict(model, small_ds, ccfg)
    assert len(seen_p.classes) == small_ds.n_classes
    assert set(np.r_[seen_p.labels, unseen_p.labels].tolist()) <= set(range(small_ds.n_classes))
    again = zsl_predict(model, small_ds, ccfg)
    assert np.array_equal(again.scores, pred.scores)


def test_noiseless_single_sample_is_prototype_classifier(small_ds):
    model = small_model(small_ds)
    unseen = small_ds.split.unseen
    protos = decode(model, small_ds.attributes[unseen], small_ds.attributes[unseen])
    test = small_ds.features[small_ds.split.test_unseen]
    nearest = unseen[((test[:, None] - protos[None]) ** 2).sum(-1).argmin(1)]
    knn = ClassifierConfig(kind="knn", knn_k=1, gen_samples=1, gen_noise=0.0)
    assert np.array_equal(zsl_predict(model, small_ds, knn).labels, nearest)


def test_awa2_ps_zsl_shape(rng):
    # 40 seen / 10 unseen classes, 7913 unseen test rows, 2048-d features
    unseen_rows = 7913
    labels = np.r_[np.repeat(np.arange(40), 2), 40 + np.arange(unseen_rows) % 10]
    feats = rng.standard_normal((labels.size, 2048), dtype=np.float32)
    split = SplitSpec(np.arange(40), np.arange(40, 50), np.arange(80), [],
                      np.arange(80, labels.size))
    ds = ZslDataset(feats, labels, rng.uniform(size=(50, 85)), split)
    pred = zsl_predict(build_model(2048, 85, seed=0), ds,
                       ClassifierConfig(epochs=1, gen_samples=20))
    assert len(pred.classes) == 10 and pred.labels.shape == (7913,)
    assert pred.scores.shape == (7913, 10)


def test_prediction_errors(small_ds):
    model = small_model(small_ds)
    s = small_ds.split
    no_seen_test = ZslDataset(small_ds.features, small_ds.labels, small_ds.attributes,
                              SplitSpec(s.seen, s.unseen, s.train, [], s.test_unseen))
    with pytest.raises(EvaluationError):
        gzsl_predict(model, no_seen_test)
    no_unseen = ZslDataset(small_ds.features, small_ds.labels, small_ds.attributes,
                           SplitSpec(s.seen, [], s.train, s.test_seen, []))
    with pytest.raises(EvaluationError):
        zsl_predict(model, no_unseen)
    with pytest.raises(ConfigError):
        ClassifierConfig(kind="forest")


def test_feedback_training_runs(small_ds):
    cfg = TrainConfig(epochs=1, P=3, K=4, feedback=FeedbackConfig(2))
    _, log = train(small_model(small_ds, head="split"), small_ds, cfg)
    assert len(log.records) == 1
