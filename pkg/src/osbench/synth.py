"""Synthetic benchmark generator.

Each class is a Gaussian "camera fingerprint": a mean drawn on a sphere of
radius `separation`, unit within-class noise, and a shared per-image offset
of magnitude 0.3 so patches of one image are correlated.  The generator
emits the four datasets a full experiment needs:

* train: the known classes.
* test_known: fresh images of the known classes.
* test_unknown: fresh classes (unknown-unknowns), labeled unknown.
* extra_ku: more fresh classes with their own names, for netopen plans.

plus the merged test set.  Everything is a pure function of the seed.
"""

from __future__ import annotations

import os

import numpy as np

from .data import Dataset, Label, UNKNOWN, concat_datasets, save_manifest
from .errors import OsbenchInputError
from .rng import make_rng

IMAGE_OFFSET = 0.3


def sphere_point(dim: int, radius: float, rng) -> np.ndarray:
    v = rng.normal(size=dim)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        v[0] = 1.0
        norm = 1.0
    return radius * v / norm


def blob_dataset(
    means: np.ndarray,
    class_names: list[str] | None,
    images_per_class: int,
    patches_per_image: int,
    rng,
    image_prefix: str,
    registry: dict[int, str] | None = None,
) -> Dataset:
    """Sample a dataset of per-image patch features around the given means.

    With ``class_names`` None every sample is labeled unknown and `registry`
    supplies the label space (typically the training registry).
    """
    means = np.asarray(means, dtype=np.float64)
    n_classes, dim = means.shape
    if class_names is not None:
        if len(class_names) != n_classes:
            raise OsbenchInputError("one class name per mean required")
        registry = {i: name for i, name in enumerate(sorted(class_names))}
        id_of = {name: i for i, name in registry.items()}
    elif registry is None:
        registry = {}

    feats = []
    labels: list[Label] = []
    image_ids: list[str] = []
    patch_idx: list[int] = []
    for c in range(n_classes):
        label = Label(id_of[class_names[c]]) if class_names is not None else UNKNOWN
        for img in range(images_per_class):
            offset = sphere_point(dim, IMAGE_OFFSET, rng)
            image_id = f"{image_prefix}{c:02d}_{img:03d}"
            for p in range(patches_per_image):
                feats.append(means[c] + offset + rng.normal(size=dim))
                labels.append(label)
                image_ids.append(image_id)
                patch_idx.append(p)
    return Dataset(np.asarray(feats, dtype=np.float32), labels, image_ids, patch_idx, registry)


def make_benchmark(
    n_known: int,
    n_unknown: int,
    images_per_class: int = 10,
    patches_per_image: int = 32,
    dim: int = 16,
    separation: float = 10.0,
    seed: int = 0,
) -> dict[str, Dataset]:
    if n_known < 2 or n_unknown < 1:
        raise OsbenchInputError("need n_known >= 2 and n_unknown >= 1")
    if images_per_class < 2 or patches_per_image < 1 or dim < 1:
        raise OsbenchInputError("bad benchmark size parameters")
    if separation < 0:
        raise OsbenchInputError("separation must be nonnegative")

    rng = make_rng(seed)
    known_means = np.stack([sphere_point(dim, separation, rng) for _ in range(n_known)])
    unknown_means = np.stack([sphere_point(dim, separation, rng) for _ in range(n_unknown)])
    extra_means = np.stack([sphere_point(dim, separation, rng) for _ in range(n_unknown)])

    known_names = [f"cam{c:02d}" for c in range(n_known)]
    extra_names = [f"ext{c:02d}" for c in range(n_unknown)]

    train = blob_dataset(known_means, known_names, images_per_class, patches_per_image, rng, "trn")
    test_known = blob_dataset(known_means, known_names, images_per_class, patches_per_image, rng, "tsk")
    test_unknown = blob_dataset(
        unknown_means, None, images_per_class, patches_per_image, rng, "tsu",
        registry=train.class_registry,
    )
    extra_ku = blob_dataset(extra_means, extra_names, images_per_class, patches_per_image, rng, "ext")
    test = concat_datasets([test_known, test_unknown], train.class_registry)
    return {
        "train": train,
        "test_known": test_known,
        "test_unknown": test_unknown,
        "test": test,
        "extra_ku": extra_ku,
    }


def write_benchmark(bench: dict[str, Dataset], outdir: str, fmt: str = "osfv") -> dict[str, str]:
    """Write every benchmark dataset as manifest + feature file pairs."""
    os.makedirs(outdir, exist_ok=True)
    paths = {}
    for name, ds in bench.items():
        manifest = os.path.join(outdir, f"{name}.manifest")
        save_manifest(ds, manifest, fmt=fmt)
        paths[name] = manifest
    return paths
