import numpy as np
import pytest

from osbench.data import Dataset, Label
from osbench.rng import make_rng


def blob_classes(n_classes, per_class, dim, separation, seed, patches_per_image=4, prefix="c"):
    """Small labeled blob dataset for classifier tests."""
    rng = make_rng(seed)
    means = []
    for _ in range(n_classes):
        v = rng.normal(size=dim)
        means.append(separation * v / np.linalg.norm(v))
    feats, labels, image_ids, patch_idx = [], [], [], []
    for c in range(n_classes):
        for i in range(per_class):
            feats.append(means[c] + rng.normal(size=dim))
            labels.append(Label(c))
            image_ids.append(f"{prefix}{c}_img{i // patches_per_image}")
            patch_idx.append(i % patches_per_image)
    registry = {c: f"cam{c:02d}" for c in range(n_classes)}
    return Dataset(np.asarray(feats), labels, image_ids, patch_idx, registry), np.asarray(means)


@pytest.fixture(scope="session")
def blobs4():
    return blob_classes(4, 48, 8, 10.0, seed=42)
