import numpy as np
import pytest

from osbench.data import Dataset, Label, UNKNOWN, save_manifest
from osbench.errors import OsbenchInputError
from osbench.protocols import (
    load_plan,
    make_plan,
    plan_closed,
    plan_netopen,
    plan_open,
    save_plan,
    with_manifests,
)
from osbench.rng import make_rng


def grid_dataset(n_classes=18, images=10, patches=2, dim=3, seed=0, name_prefix="cam",
                 image_prefix=""):
    rng = make_rng(seed)
    feats, labels, image_ids, patch_idx = [], [], [], []
    for c in range(n_classes):
        for i in range(images):
            img = f"{image_prefix}{name_prefix}{c:02d}_img{i:02d}"
            for p in range(patches):
                feats.append(rng.normal(size=dim) + 3 * c)
                labels.append(Label(c))
                image_ids.append(img)
                patch_idx.append(p)
    registry = {c: f"{name_prefix}{c:02d}" for c in range(n_classes)}
    return Dataset(np.asarray(feats, np.float32), labels, image_ids, patch_idx, registry)


def images_of(ds):
    return set(ds.image_ids)


def test_closed_split_counts():
    train = grid_dataset()
    plan = plan_closed(train, val_fraction=0.2, seed=1)
    assert plan.protocol == "closed"
    assert plan.ku_class_ids == frozenset()
    assert len(images_of(plan.validation)) == 18 * 2
    assert len(images_of(plan.fit)) == 18 * 8
    assert not images_of(plan.fit) & images_of(plan.validation)
    assert plan.validation.n_known == 18
    assert not any(l.is_unknown for l in plan.validation.labels)
    assert plan.final_train is train


def test_closed_minimum_one_validation_image():
    train = grid_dataset(n_classes=3, images=2)
    plan = plan_closed(train, val_fraction=0.01, seed=0)
    per_class = {c: 0 for c in range(3)}
    for img, role in plan.image_roles.items():
        if role == "validation":
            cls = int(img[3:5])
            per_class[cls] += 1
    assert all(v == 1 for v in per_class.values())


def test_closed_single_image_class_errors():
    train = grid_dataset(n_classes=2, images=1)
    with pytest.raises(OsbenchInputError):
        plan_closed(train, 0.2, 0)


def test_open_split_shape():
    train = grid_dataset()
    plan = plan_open(train, val_fraction=0.2, seed=7)
    assert len(plan.ku_class_ids) == 9
    fit_classes = {l.class_id for l in plan.fit.labels}
    assert len(fit_classes) == 9
    assert fit_classes.isdisjoint(plan.ku_class_ids)
    val_known = {l.class_id for l in plan.validation.labels if not l.is_unknown}
    assert val_known == fit_classes
    assert any(l.is_unknown for l in plan.validation.labels)
    # every ku image is in validation, relabeled
    ku_images = {
        img for img, l in zip(train.image_ids, train.labels) if l.class_id in plan.ku_class_ids
    }
    assert ku_images <= images_of(plan.validation)
    assert plan.final_train.n_known == 18


def test_open_two_classes():
    plan = plan_open(grid_dataset(n_classes=2, images=4), 0.25, seed=3)
    assert len(plan.ku_class_ids) == 1
    assert len({l.class_id for l in plan.fit.labels}) == 1


def test_open_determinism():
    train = grid_dataset()
    a = plan_open(train, 0.2, seed=11)
    b = plan_open(train, 0.2, seed=11)
    assert a.ku_class_ids == b.ku_class_ids
    assert a.image_roles == b.image_roles
    assert np.array_equal(a.fit.features, b.fit.features)
    assert list(a.validation.labels) == list(b.validation.labels)
    c = plan_open(train, 0.2, seed=12)
    assert a.image_roles != c.image_roles or a.ku_class_ids != c.ku_class_ids


def test_netopen_split_shape():
    train = grid_dataset()
    extra = grid_dataset(n_classes=9, images=4, name_prefix="ext")
    plan = plan_netopen(train, extra, 0.2, seed=5)
    assert plan.ku_class_ids == frozenset()
    assert len({l.class_id for l in plan.fit.labels}) == 18
    val_known = {l.class_id for l in plan.validation.labels if not l.is_unknown}
    assert val_known == set(range(18))
    unk = [l for l in plan.validation.labels if l.is_unknown]
    assert len(unk) == len(extra)
    assert set(extra.image_ids) <= images_of(plan.validation)
    assert not set(extra.image_ids) & images_of(plan.fit)
    assert not images_of(plan.fit) & (images_of(plan.validation) - set(extra.image_ids))


def test_netopen_errors():
    train = grid_dataset(n_classes=3)
    with pytest.raises(OsbenchInputError):
        plan_netopen(train, grid_dataset(n_classes=2), 0.2, 0)  # overlapping names
    empty = Dataset(np.zeros((0, 3), np.float32), [], [], [], {})
    with pytest.raises(OsbenchInputError):
        plan_netopen(train, empty, 0.2, 0)


def test_netopen_single_extra_class():
    train = grid_dataset(n_classes=3)
    extra = grid_dataset(n_classes=1, images=3, name_prefix="ext")
    plan = plan_netopen(train, extra, 0.2, 0)
    assert sum(l.is_unknown for l in plan.validation.labels) == len(extra)


def test_plan_roundtrip(tmp_path):
    train = grid_dataset(n_classes=6, images=5)
    extra = grid_dataset(n_classes=2, images=3, name_prefix="ext")
    train_man = tmp_path / "train.manifest"
    extra_man = tmp_path / "extra.manifest"
    save_manifest(train, str(train_man))
    save_manifest(extra, str(extra_man))

    for protocol, extra_arg in (("closed", None), ("open", None), ("netopen", extra)):
        plan = make_plan(protocol, train, extra_arg, val_fraction=0.2, seed=9)
        plan = with_manifests(plan, str(train_man), str(extra_man) if extra_arg else None)
        path = tmp_path / f"{protocol}.plan"
        save_plan(plan, str(path))
        back = load_plan(str(path))
        assert back.protocol == plan.protocol
        assert back.seed == plan.seed
        assert back.ku_class_ids == plan.ku_class_ids
        assert back.image_roles == plan.image_roles
        assert np.array_equal(back.fit.features, plan.fit.features)
        assert list(back.validation.labels) == list(plan.validation.labels)
        assert np.array_equal(back.validation.features, plan.validation.features)


def test_plan_requires_provenance(tmp_path):
    plan = plan_closed(grid_dataset(n_classes=2, images=3), 0.2, 0)
    with pytest.raises(OsbenchInputError):
        save_plan(plan, str(tmp_path / "p.plan"))


def test_mixed_label_image_rejected():
    feats = np.zeros((2, 2), np.float32)
    ds = Dataset(feats, [Label(0), Label(1)], ["same", "same"], [0, 1], {0: "a", 1: "b"})
    with pytest.raises(OsbenchInputError):
        plan_closed(ds, 0.2, 0)


def test_val_fraction_bounds():
    with pytest.raises(OsbenchInputError):
        plan_closed(grid_dataset(n_classes=2, images=3), 0.0, 0)
    with pytest.raises(OsbenchInputError):
        plan_closed(grid_dataset(n_classes=2, images=3), 1.0, 0)
