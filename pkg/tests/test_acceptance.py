"""Acceptance suite: every release criterion with its runtime budget.

Each test prints one pass/fail line.  Criteria are property- and
oracle-based plus directional checks on the synthetic benchmark; published
reference numbers from the original large-scale study are documentation
constants only (see README) and are not reproduced here.
"""

import os
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from osbench.classifiers import ClassifierSpec, fit
from osbench.data import (
    Dataset,
    Label,
    UNKNOWN,
    concat_datasets,
    load_manifest,
    relabel_as_unknown,
    save_manifest,
)
from osbench.errors import MetricsError
from osbench.evaluation import evaluate_models
from osbench.fusion import ensemble_vote, image_vote
from osbench.metrics import (
    ConfusionMatrix,
    aks,
    aus,
    confusion,
    da,
    dks,
    dus,
    fm_macro,
    fm_micro,
    na,
    osfm_macro,
    osfm_micro,
)
from osbench.numerics import KernelSpec, WeibullParams, logistic_loss_and_grad, svm_train_binary, weibull_mle
from osbench.protocols import plan_closed, plan_netopen, plan_open
from osbench.rng import make_rng
from osbench.search import Grid, default_grid, grid_search
from osbench.synth import blob_dataset, make_benchmark, sphere_point

from tests.test_metrics import brute_force_metrics, hand_example
from tests.test_protocols import grid_dataset


@contextmanager
def criterion(number: int, name: str, budget_s: float):
    start = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        status = "PASS" if ok else "FAIL"
        print(f"[criterion {number:02d}] {status} {name} ({elapsed:.2f}s / budget {budget_s:.0f}s)")
    assert elapsed < budget_s, f"criterion {number} exceeded its {budget_s}s budget"


# -- 1: metrics oracle equivalence ------------------------------------------------


def test_criterion_01_metrics_oracle():
    with criterion(1, "metrics oracle equivalence", 5.0):
        cm = hand_example()
        assert aks(cm) == pytest.approx(0.7, abs=0)
        assert aus(cm) == pytest.approx(0.7, abs=0)
        assert na(cm) == pytest.approx(0.7, abs=0)
        assert dks(cm) == pytest.approx(0.85, abs=0)
        # the defining identity holds to the bit; the decimal is 1 ulp off
        assert da(cm) == (dks(cm) + dus(cm)) / 2.0
        assert da(cm) == pytest.approx(0.775, abs=1e-15)
        assert na(cm) == (aks(cm) + aus(cm)) / 2.0
        assert osfm_micro(cm) == pytest.approx(0.7, abs=1e-15)
        assert fm_micro(cm) == pytest.approx(0.7, abs=1e-15)

        rng = np.random.default_rng(20240101)
        fns = {
            "aks": aks, "aus": aus, "dks": dks, "dus": dus,
            "osfm_macro": osfm_macro, "osfm_micro": osfm_micro,
            "fm_macro": fm_macro, "fm_micro": fm_micro,
        }
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            counts = rng.integers(0, 51, size=(n + 1, n + 1))
            cm = ConfusionMatrix(counts.astype(np.int64), n)
            want = brute_force_metrics(counts.tolist(), n)
            for key, fn in fns.items():
                if want[key] is None:
                    with pytest.raises(MetricsError):
                        fn(cm)
                else:
                    assert abs(fn(cm) - want[key]) <= 1e-12, key


# -- 2: macro f-measure structure --------------------------------------------------


def test_criterion_02_macro_structure():
    with criterion(2, "macro f is not mean of per-class f1", 5.0):
        rng = np.random.default_rng(77)
        found = False
        for _ in range(100):
            n = int(rng.integers(2, 6))
            counts = rng.integers(0, 30, size=(n + 1, n + 1)).astype(np.int64)
            cm = ConfusionMatrix(counts, n)
            tp = np.diag(counts)[:n].astype(float)
            col = counts.sum(axis=0)[:n].astype(float)
            row = counts.sum(axis=1)[:n].astype(float)
            prec = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
            rec = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
            denom = prec + rec
            f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
            if abs(osfm_macro(cm) - float(f1.mean())) > 1e-6:
                found = True
                break
        assert found


# -- 3: weibull recovery -------------------------------------------------------------


def test_criterion_03_weibull_recovery():
    with criterion(3, "weibull mle recovery", 2.0):
        truth = WeibullParams(2.0, 1.0)
        u = make_rng(314159).random(10_000)
        fitted = weibull_mle(truth.inverse_cdf(u))
        assert abs(fitted.shape - 2.0) <= 0.05 * 2.0
        assert abs(fitted.scale - 1.0) <= 0.02


# -- 4: svm correctness ---------------------------------------------------------------


def test_criterion_04_svm():
    with criterion(4, "svm analytic margin and dual feasibility", 10.0):
        tol = 1e-4
        m = svm_train_binary(
            np.array([[0.0], [2.0]]), np.array([-1.0, 1.0]), c=1e5,
            kernel=KernelSpec("linear"), tol=tol,
        )
        assert abs(m.decision(np.array([1.0]))) <= tol

        rng = make_rng(2718)
        for trial in range(50):
            dim = int(rng.integers(2, 5))
            direction = rng.normal(size=dim)
            direction /= np.linalg.norm(direction)
            x = np.vstack(
                [rng.normal(size=(15, dim)) - 4 * direction,
                 rng.normal(size=(15, dim)) + 4 * direction]
            )
            y = np.asarray([-1.0] * 15 + [1.0] * 15)
            c = float(rng.choice([0.5, 1.0, 10.0]))
            kernel = KernelSpec("linear") if trial % 2 else KernelSpec("rbf", gamma=0.25)
            model = svm_train_binary(x, y, c, kernel, tol=1e-3)
            assert model.alpha.min() >= -1e-12
            assert model.alpha.max() <= c + 1e-12
            assert abs(float(model.alpha @ model.labels)) <= 1e-3
            assert (np.sign(model.decision_batch(x)) == y).all()


# -- 5: logistic gradient check ----------------------------------------------------------


def test_criterion_05_logistic_gradient():
    with criterion(5, "logistic analytic vs finite-difference gradient", 5.0):
        rng = make_rng(1618)
        eps = 1e-6
        for _ in range(20):
            n, d, k = int(rng.integers(4, 9)), int(rng.integers(2, 5)), int(rng.integers(2, 5))
            x = rng.normal(size=(n, d))
            y = rng.integers(0, k, size=n)
            w = rng.normal(size=(k, d))
            b = rng.normal(size=k)
            l2 = float(rng.choice([0.0, 0.05]))
            _, gw, gb = logistic_loss_and_grad(w, b, x, y, l2)
            for arr, grad in ((w, gw), (b, gb)):
                flat, gflat = arr.ravel(), grad.ravel()
                for idx in range(flat.size):
                    orig = flat[idx]
                    flat[idx] = orig + eps
                    lp, _, _ = logistic_loss_and_grad(w, b, x, y, l2)
                    flat[idx] = orig - eps
                    lm, _, _ = logistic_loss_and_grad(w, b, x, y, l2)
                    flat[idx] = orig
                    num = (lp - lm) / (2 * eps)
                    scale = max(abs(num), abs(gflat[idx]), 1e-8)
                    assert abs(num - gflat[idx]) / scale < 1e-5


# -- 6: protocol invariants ---------------------------------------------------------------


def test_criterion_06_protocol_invariants(tmp_path):
    with criterion(6, "protocol invariants over 100 seeded plans each", 10.0):
        manifest = tmp_path / "train18.manifest"
        save_manifest(grid_dataset(n_classes=18, images=6, patches=2, dim=4), str(manifest))
        train = load_manifest(str(manifest))
        extra = grid_dataset(n_classes=5, images=3, patches=2, dim=4, name_prefix="ext")

        class_of_image = {}
        for lab, img in zip(train.labels, train.image_ids):
            class_of_image[img] = lab.class_id

        for seed in range(100):
            closed = plan_closed(train, 0.2, seed)
            opened = plan_open(train, 0.2, seed)
            net = plan_netopen(train, extra, 0.2, seed)
            for plan in (closed, opened, net):
                fit_imgs = set(plan.fit.image_ids)
                val_imgs = set(plan.validation.image_ids)
                assert not fit_imgs & val_imgs
                assert plan.final_train.n_known == 18

            fit_classes = {l.class_id for l in opened.fit.labels}
            assert len(fit_classes) == 9
            assert len(opened.ku_class_ids) == 9
            assert fit_classes.isdisjoint(opened.ku_class_ids)
            val_sources = {class_of_image[img] for img in opened.validation.image_ids}
            assert val_sources == set(range(18))
            val_known = {l.class_id for l in opened.validation.labels if not l.is_unknown}
            assert val_known == fit_classes
            n_ku_samples = sum(
                1 for l in train.labels if l.class_id in opened.ku_class_ids
            )
            assert sum(l.is_unknown for l in opened.validation.labels) == n_ku_samples

            net_unknown = sum(l.is_unknown for l in net.validation.labels)
            assert net_unknown == len(extra)
            assert set(extra.image_ids) <= set(net.validation.image_ids)
            assert not set(extra.image_ids) & set(net.fit.image_ids)
            assert not set(extra.image_ids) & set(net.final_train.image_ids)


# -- 7 & 8 share a compact benchmark ------------------------------------------------------


@pytest.fixture(scope="module")
def compact_bench():
    return make_benchmark(
        10, 8, images_per_class=6, patches_per_image=8, dim=16, separation=10.0, seed=42
    )


def test_criterion_07_boundedness(compact_bench):
    with criterion(7, "open-set boundedness at radius 1e6", 30.0):
        train = compact_bench["train"]
        center = train.features.astype(np.float64).mean(axis=0)
        rng = make_rng(424242)
        directions = rng.normal(size=(20, train.feature_dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        queries = center[None, :] + 1e6 * directions

        zoo = {
            "osnn": {"T": 0.7},
            "occ_perclass": {"nu": 0.05},
            "pisvm": {"C": 10.0, "delta": 0.1},
            "ncm": {"tau": 0.5},
            "psvm": {"C": 10.0, "tau": 0.5},
            "softmax": {"l2": 1e-4, "lr": 0.5, "epochs": 60, "tau": 0.5},
            "et": {"M": 50, "K": None, "min_leaf": 1, "tau": 0.5},
        }
        for name, hp in zoo.items():
            model = fit(ClassifierSpec(name, hp, seed=7), train)
            preds = model.predict_batch(queries)
            assert all(p.is_unknown for p in preds), name

        closed = fit(
            ClassifierSpec("softmax", {"l2": 1e-4, "lr": 0.5, "epochs": 60, "tau": 0.0}, seed=7),
            train,
        )
        preds = closed.predict_batch(queries)
        assert any(not p.is_unknown for p in preds)


def test_criterion_08_threshold_monotonicity(compact_bench):
    with criterion(8, "threshold sweeps never un-reject or flip argmax", 30.0):
        train = compact_bench["train"]
        rng = make_rng(808)
        queries = np.vstack(
            [
                train.features[rng.choice(len(train), size=250, replace=False)],
                rng.normal(size=(250, train.feature_dim)) * 8,
            ]
        )
        zoo = {
            "ncm": ({"tau": 0.1}, "tau"),
            "psvm": ({"C": 10.0, "tau": 0.1}, "tau"),
            "softmax": ({"l2": 1e-4, "lr": 0.5, "epochs": 60, "tau": 0.1}, "tau"),
            "et": ({"M": 50, "K": None, "min_leaf": 1, "tau": 0.1}, "tau"),
            "two_stage": ({"nu": 0.05, "C": 10.0, "tau": 0.1}, "tau"),
            "pisvm": ({"C": 10.0, "delta": 0.1}, "delta"),
        }
        sweep = [0.1, 0.3, 0.5, 0.7, 0.9]
        for name, (hp, key) in zoo.items():
            model = fit(ClassifierSpec(name, hp, seed=11), train)
            previous = None
            for value in sweep:
                preds = model.with_threshold(value, key).predict_batch(queries)
                if previous is not None:
                    for a, b in zip(previous, preds):
                        if a.is_unknown:
                            assert b.is_unknown, name
                        elif not b.is_unknown:
                            assert a == b, name
                previous = preds


# -- 9: synthetic end-to-end -----------------------------------------------------------------


def test_criterion_09_synthetic_end_to_end():
    with criterion(9, "synthetic end-to-end: osnn quality, open >= closed", 180.0):
        bench = make_benchmark(
            10, 8, images_per_class=10, patches_per_image=32, dim=16,
            separation=10.0, seed=42,
        )
        train, test = bench["train"], bench["test"]
        open_plan = plan_open(train, 0.2, seed=42)

        osnn = grid_search(
            ClassifierSpec("osnn", {}, seed=42), open_plan,
            Grid({"T": [round(0.3 + 0.1 * i, 1) for i in range(7)]}),
        )
        rep, *_ = evaluate_models([osnn.final_model], test, granularity="image")
        assert rep.aks >= 0.95
        assert rep.aus >= 0.95

        closed_plan = plan_closed(train, 0.2, seed=42)
        grid = default_grid("pisvm", train.feature_dim)
        pis_open = grid_search(ClassifierSpec("pisvm", {}, seed=42), open_plan, grid)
        pis_closed = grid_search(ClassifierSpec("pisvm", {}, seed=42), closed_plan, grid)
        rep_open, *_ = evaluate_models([pis_open.final_model], test, granularity="image")
        rep_closed, *_ = evaluate_models([pis_closed.final_model], test, granularity="image")
        assert rep_open.na >= rep_closed.na - 0.01


# -- 10: binary-detector worst case ------------------------------------------------------------


def test_criterion_10_detector_worst_case():
    with criterion(10, "same-family detector collapses on shifted unknowns", 60.0):
        dim, sep = 16, 10.0
        rng = make_rng(123)
        known_means = np.stack([sphere_point(dim, sep, rng) for _ in range(8)])
        ku_means = np.stack([sphere_point(dim, sep, rng) for _ in range(8)])
        shifted_means = known_means + np.stack(
            [sphere_point(dim, 6.0, rng) for _ in range(8)]
        )
        names = [f"cam{c:02d}" for c in range(8)]
        train = blob_dataset(known_means, names, 8, 8, rng, "trn")
        ku = blob_dataset(ku_means, [f"ku{c:02d}" for c in range(8)], 8, 8, rng, "ku")
        test_known = blob_dataset(known_means, names, 8, 8, rng, "tsk")
        test_unknown = blob_dataset(
            shifted_means, None, 8, 8, rng, "tsu", registry=train.class_registry
        )
        test = concat_datasets([test_known, test_unknown], train.class_registry)

        detector_data = concat_datasets(
            [train, relabel_as_unknown(ku, set(ku.present_class_ids))], train.class_registry
        )
        detector = fit(
            ClassifierSpec("binary_detector", {"base": "psvm", "C": 10.0, "tau": 0.5}, seed=5),
            detector_data,
        )
        pisvm = fit(ClassifierSpec("pisvm", {"C": 10.0, "delta": 0.1}, seed=5), train)

        rep_det, *_ = evaluate_models([detector], test, granularity="image")
        rep_pis, *_ = evaluate_models([pisvm], test, granularity="image")
        assert rep_det.dus < rep_pis.dus


# -- 11: fusion rules ---------------------------------------------------------------------------


def test_criterion_11_fusion_rules():
    with criterion(11, "fusion voting rules and unanimity", 5.0):
        K0, K1 = Label(0), Label(1)
        assert image_vote([K0, K0, K1]) == K0
        assert image_vote([UNKNOWN, UNKNOWN, K0]) == UNKNOWN
        assert image_vote([K0, K1]) == K0
        assert image_vote([K0, UNKNOWN]) == UNKNOWN
        assert ensemble_vote([UNKNOWN, UNKNOWN, K0]) == UNKNOWN
        assert ensemble_vote([UNKNOWN, K0, K0, K1, K1, K0]) == K0
        assert ensemble_vote([K1, K1]) == K1
        assert ensemble_vote([UNKNOWN, UNKNOWN, K0, K1]) == K0  # half is not a majority

        rng = make_rng(11)
        preds = [UNKNOWN if v == 2 else Label(int(v)) for v in rng.integers(0, 3, size=100)]
        for k in (1, 3, 5, 7):
            assert [ensemble_vote([p] * k) for p in preds] == preds


# -- 12: determinism and round-trips -------------------------------------------------------------


def _run_pipeline(workdir: str) -> bytes:
    env = dict(os.environ)
    cmds = [
        ["synth", "--out", os.path.join(workdir, "bench"), "--n-known", "5",
         "--n-unknown", "3", "--images-per-class", "5", "--patches-per-image", "6",
         "--dim", "10", "--separation", "10", "--seed", "42"],
        ["split", "--manifest", os.path.join(workdir, "bench", "train.manifest"),
         "--protocol", "open", "--seed", "7", "--out", os.path.join(workdir, "p.plan")],
        ["train", "--plan", os.path.join(workdir, "p.plan"), "--classifier", "osnn",
         "--grid", os.path.join(workdir, "osnn.grid"),
         "--out-model", os.path.join(workdir, "m.osm"),
         "--out-log", os.path.join(workdir, "m.log"), "--seed", "7"],
        ["evaluate", "--model", os.path.join(workdir, "m.osm"),
         "--test", os.path.join(workdir, "bench", "test.manifest"),
         "--out", os.path.join(workdir, "report.txt"), "--no-figures"],
    ]
    with open(os.path.join(workdir, "osnn.grid"), "w") as fh:
        fh.write("T=0.4,0.6,0.8\n")
    for cmd in cmds:
        proc = subprocess.run(
            [sys.executable, "-m", "osbench.cli", *cmd],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0, proc.stderr
    with open(os.path.join(workdir, "report.txt"), "rb") as fh:
        return fh.read()


def test_criterion_12_determinism(tmp_path, compact_bench):
    with criterion(12, "bit-exact round-trips and byte-identical pipeline", 60.0):
        from osbench.classifiers import load_model, save_model
        from osbench.protocols import save_plan, load_plan, with_manifests

        train = compact_bench["train"]
        rng = make_rng(99)
        queries = np.vstack(
            [train.features[::7], rng.normal(size=(40, train.feature_dim)) * 12]
        )
        for name, hp in (
            ("pisvm", {"C": 10.0, "delta": 0.1}),
            ("et", {"M": 20, "K": None, "min_leaf": 1, "tau": 0.5}),
            ("osnn", {"T": 0.6}),
        ):
            model = fit(ClassifierSpec(name, hp, seed=3), train)
            path = tmp_path / f"{name}.osm"
            save_model(model, str(path))
            back = load_model(str(path))
            assert np.array_equal(model.score_batch(queries), back.score_batch(queries))
            assert model.predict_batch(queries) == back.predict_batch(queries)

        man = tmp_path / "train.manifest"
        save_manifest(train, str(man))
        again = load_manifest(str(man))
        assert np.array_equal(again.features, train.features)
        assert list(again.labels) == list(train.labels)

        plan = with_manifests(plan_open(again, 0.2, seed=5), str(man), None)
        plan_path = tmp_path / "p.plan"
        save_plan(plan, str(plan_path))
        back_plan = load_plan(str(plan_path))
        assert back_plan.image_roles == plan.image_roles
        assert np.array_equal(back_plan.validation.features, plan.validation.features)

        run_a = tmp_path / "runA"
        run_b = tmp_path / "runB"
        run_a.mkdir()
        run_b.mkdir()
        report_a = _run_pipeline(str(run_a))
        report_b = _run_pipeline(str(run_b))
        assert report_a == report_b
