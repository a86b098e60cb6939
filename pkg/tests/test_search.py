import numpy as np
import pytest

import osbench.search as search_mod
from osbench.classifiers import ClassifierSpec, fit as real_fit
from osbench.data import Label, UNKNOWN
from osbench.errors import OsbenchError, OsbenchInputError
from osbench.protocols import plan_closed, plan_open
from osbench.search import (
    Grid,
    default_grid,
    grid_search,
    parse_grid_file,
    save_search_log,
    selection_metric_for,
)
from tests.test_protocols import grid_dataset


@pytest.fixture(scope="module")
def train():
    return grid_dataset(n_classes=4, images=6, patches=3, dim=4, seed=2)


def test_grid_validation():
    with pytest.raises(OsbenchInputError):
        Grid({"C": []})
    with pytest.raises(OsbenchInputError):
        Grid({"C": [1.0]}, selection_metric="f1")
    assert Grid({"a": [1, 2], "b": [3]}).size == 2


def test_parse_grid_file(tmp_path):
    path = tmp_path / "g.grid"
    path.write_text("# comment\nC=0.1,1,10\nkernel=rbf,linear\nT=0.5\n")
    grid = parse_grid_file(str(path))
    assert grid.axes["C"] == [0.1, 1, 10]
    assert grid.axes["kernel"] == ["rbf", "linear"]
    assert grid.axes["T"] == [0.5]


def test_selection_metric_follows_protocol(train):
    assert selection_metric_for(plan_closed(train, 0.2, 0)) == "acc"
    assert selection_metric_for(plan_open(train, 0.2, 0)) == "na"


def test_single_point_grid(train):
    plan = plan_closed(train, 0.2, seed=1)
    res = grid_search(ClassifierSpec("ncm", {}, seed=1), plan, Grid({"tau": [0.3]}))
    assert res.best_hyperparams == {"tau": 0.3}
    assert len(res.log) == 1
    assert res.metric_name == "acc"
    # final model trained on final_train: knows all 4 classes
    assert res.final_model.n_classes == 4


def test_mock_peak_recovery(train, monkeypatch):
    """Injected classifier whose validation metric peaks at a known value."""
    plan = plan_open(train, 0.25, seed=3)
    peak = 0.6

    class MockModel:
        def __init__(self, knob, class_ids):
            self.knob = knob
            self.class_ids = class_ids
            self.threshold = None

        def score_batch(self, x):
            return np.zeros((x.shape[0], len(self.class_ids)))

        def decide_batch(self, scores):
            # fraction of correct answers degrades away from the peak
            quality = max(0.0, 1.0 - abs(self.knob - peak))
            out = []
            for i in range(scores.shape[0]):
                truth = self._truths[i]
                if (i * 2654435761 % 1000) / 1000.0 < quality:
                    out.append(truth)
                else:
                    out.append(Label(self.class_ids[0]) if truth.is_unknown else UNKNOWN)
            return out

    def mock_fit(spec, data):
        model = MockModel(spec.hyperparams["knob"], tuple(sorted(data.present_class_ids)))
        return model

    def run(spec, plan, grid):
        # attach validation truths so the mock can grade itself
        orig = MockModel.decide_batch

        def decide(self, scores):
            self._truths = list(plan.validation.labels)[: scores.shape[0]]
            return orig(self, scores)

        monkeypatch.setattr(MockModel, "decide_batch", decide)
        return grid_search(spec, plan, grid)

    monkeypatch.setattr(search_mod, "fit", mock_fit)
    monkeypatch.setattr(search_mod, "THRESHOLD_KEY", {})
    grid = Grid({"knob": [0.1, 0.3, 0.5, 0.6, 0.7, 0.9]})
    res = run(ClassifierSpec("osnn", {"T": 0.5}, seed=0), plan, grid)
    assert res.best_hyperparams["knob"] == peak
    assert len(res.log) == 6
    assert res.best_metric == max(e.metric for e in res.log)


def test_tie_breaks_to_first_point(train, monkeypatch):
    plan = plan_closed(train, 0.2, seed=0)

    class FlatModel:
        class_ids = (0, 1, 2, 3)
        threshold = None

        def __init__(self, data):
            self._labels = None

        def score_batch(self, x):
            return np.zeros((x.shape[0], 4))

        def decide_batch(self, scores):
            return [Label(0)] * scores.shape[0]

    monkeypatch.setattr(search_mod, "fit", lambda spec, data: FlatModel(data))
    monkeypatch.setattr(search_mod, "THRESHOLD_KEY", {})
    res = grid_search(ClassifierSpec("ncm", {}, seed=0), plan, Grid({"tau": [0.5, 0.6, 0.7]}))
    assert res.best_hyperparams == {"tau": 0.5}


def test_all_points_fail(train, monkeypatch):
    plan = plan_closed(train, 0.2, seed=0)

    def broken_fit(spec, data):
        raise OsbenchInputError("nope")

    monkeypatch.setattr(search_mod, "fit", broken_fit)
    with pytest.raises(OsbenchError):
        grid_search(ClassifierSpec("ncm", {}, seed=0), plan, Grid({"tau": [0.1, 0.2]}))


def test_failures_recorded_and_skipped(train):
    plan = plan_closed(train, 0.2, seed=0)
    # nu = 5.0 is invalid and must fail without sinking the whole search
    res = grid_search(
        ClassifierSpec("occ_perclass", {}, seed=0), plan, Grid({"nu": [5.0, 0.1]})
    )
    assert res.best_hyperparams == {"nu": 0.1}
    assert len(res.log) == 2
    assert res.log[0].error is not None and np.isnan(res.log[0].metric)
    assert res.log[1].error is None


def test_search_determinism_and_threshold_reuse(train):
    plan = plan_open(train, 0.25, seed=4)
    grid = Grid({"C": [1.0, 10.0], "delta": [0.1, 0.5, 0.9]})
    a = grid_search(ClassifierSpec("pisvm", {}, seed=5), plan, grid)
    b = grid_search(ClassifierSpec("pisvm", {}, seed=5), plan, grid)
    assert a.best_hyperparams == b.best_hyperparams
    assert [e.metric for e in a.log] == [e.metric for e in b.log]
    assert len(a.log) == 6
    # threshold axis reuses fits: jobs=2 must not change anything
    c = grid_search(ClassifierSpec("pisvm", {}, seed=5), plan, grid, jobs=2)
    assert [e.metric for e in c.log] == [e.metric for e in a.log]
    assert c.best_hyperparams == a.best_hyperparams


def test_threshold_reuse_equals_fresh_fit(train):
    """A threshold-clone scores exactly like a model fit at that threshold."""
    plan = plan_open(train, 0.25, seed=4)
    grid = Grid({"tau": [0.2, 0.7]})
    res = grid_search(ClassifierSpec("ncm", {}, seed=0), plan, grid)
    fresh = real_fit(ClassifierSpec("ncm", {"tau": 0.7}, seed=0), plan.fit)
    preds_fresh = fresh.predict_batch(plan.validation.features)
    from osbench.search import _evaluate_metric

    value = _evaluate_metric("na", list(plan.validation.labels), preds_fresh, fresh.class_ids)
    assert res.log[1].metric == pytest.approx(value, abs=1e-12)


def test_default_grids_exist():
    for variant in ("osnn", "svm_ova", "psvm", "softmax", "ncm", "et",
                    "occ_perclass", "two_stage", "pisvm"):
        grid = default_grid(variant, 16)
        assert grid.size >= 1


def test_save_search_log(train, tmp_path):
    plan = plan_closed(train, 0.2, seed=1)
    res = grid_search(ClassifierSpec("ncm", {}, seed=1), plan, Grid({"tau": [0.2, 0.4]}))
    path = tmp_path / "log.tsv"
    save_search_log(res, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0].split("\t") == ["index", "tau", "acc", "error"]
    assert len(lines) == 3


def test_binary_detector_through_plans():
    train = grid_dataset(n_classes=6, images=6, patches=2, dim=4, seed=3)
    extra = grid_dataset(n_classes=3, images=4, patches=2, dim=4, seed=4, name_prefix="ext")
    grid = Grid({"C": [10.0], "tau": [0.5]})
    from osbench.protocols import plan_netopen

    for plan in (plan_open(train, 0.25, seed=1),
                 plan_netopen(train, extra, 0.25, seed=1)):
        res = grid_search(
            ClassifierSpec("binary_detector", {"base": "psvm"}, seed=2), plan, grid
        )
        model = res.final_model
        assert model.variant == "binary_detector"
        # the final detector still answers over the full feature space
        assert model.detect(train.features[0].astype(float)) in (True, False)
    # closed plans carry no known-unknown data
    with pytest.raises(OsbenchError):
        grid_search(
            ClassifierSpec("binary_detector", {"base": "psvm"}, seed=2),
            plan_closed(train, 0.25, seed=1), grid,
        )
