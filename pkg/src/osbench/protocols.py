"""Deterministic split planners: closed, open, and netopen.

A plan splits a training dataset into a fitting set and a validation set
for hyperparameter search, at image granularity (all patches of an image
stay on one side), and always carries the full training set as
``final_train`` so the winning hyperparameters are refit on all known
classes.

* closed: per class, a seeded image split; validation is all-known.
* open: a seeded half of the classes becomes known-unknown; fitting uses
  the training share of the remaining classes, validation mixes their
  held-out images with every known-unknown image relabeled unknown.
* netopen: fitting uses the training share of all classes; validation adds
  every sample of a disjoint extra dataset relabeled unknown.

Plan files (text) record the protocol, seed, known-unknown classes and the
per-image role assignment, so a run can be audited and replayed::

    osbench_plan_v1
    protocol=open
    seed=7
    val_fraction=0.2
    train_manifest=train.manifest
    extra_manifest=
    ku_classes=camC,camD
    image,img001,fit
    image,img002,validation
    extra_image,x01,validation
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import (
    Dataset,
    concat_datasets,
    load_manifest,
    relabel_as_unknown,
)
from .errors import ManifestError, OsbenchInputError
from .rng import make_rng

CLOSED = "closed"
OPEN = "open"
NETOPEN = "netopen"
PROTOCOLS = (CLOSED, OPEN, NETOPEN)

DEFAULT_VAL_FRACTION = 0.2


@dataclass(frozen=True)
class SplitPlan:
    protocol: str
    seed: int
    val_fraction: float
    fit: Dataset
    validation: Dataset
    final_train: Dataset
    ku_class_ids: frozenset[int]
    image_roles: dict[str, str]  # train image_id -> "fit" | "validation"
    extra_image_ids: tuple[str, ...]  # netopen only; all in validation
    train_manifest: str | None = None
    extra_manifest: str | None = None

    @property
    def n_known(self) -> int:
        return self.final_train.n_known


def _images_by_class(dataset: Dataset) -> dict[int, list[str]]:
    """Class id -> image ids in first-appearance order."""
    out: dict[int, list[str]] = {}
    seen: set[str] = set()
    for lab, img in zip(dataset.labels, dataset.image_ids):
        if img in seen:
            continue
        seen.add(img)
        if lab.is_unknown:
            raise OsbenchInputError("training data must not contain unknown labels")
        out.setdefault(lab.class_id, []).append(img)
    return out


def _check_uniform_images(dataset: Dataset) -> None:
    label_of: dict[str, object] = {}
    for lab, img in zip(dataset.labels, dataset.image_ids):
        if img in label_of and label_of[img] != lab:
            raise OsbenchInputError(f"image {img!r} carries mixed labels")
        label_of[img] = lab


def _val_count(n_images: int, val_fraction: float) -> int:
    n_val = int(np.floor(val_fraction * n_images + 0.5))
    return min(max(1, n_val), n_images - 1)


def _split_images(
    images_by_class: dict[int, list[str]],
    class_ids: list[int],
    val_fraction: float,
    rng,
) -> dict[str, str]:
    """Seeded per-class image split; classes visited in sorted order."""
    roles: dict[str, str] = {}
    for cid in class_ids:
        images = list(images_by_class[cid])
        if len(images) < 2:
            raise OsbenchInputError(
                f"class id {cid} has {len(images)} image(s); need at least 2"
            )
        order = rng.permutation(len(images))
        n_val = _val_count(len(images), val_fraction)
        chosen = {images[i] for i in order[:n_val]}
        for img in images:
            roles[img] = "validation" if img in chosen else "fit"
    return roles


def _subset_by_role(dataset: Dataset, roles: dict[str, str], role: str) -> Dataset:
    idx = [i for i, img in enumerate(dataset.image_ids) if roles.get(img) == role]
    return dataset.subset(idx)


def _validate_fraction(val_fraction: float) -> None:
    if not 0.0 < val_fraction < 1.0:
        raise OsbenchInputError("val_fraction must be in (0, 1)")


def plan_closed(train: Dataset, val_fraction: float = DEFAULT_VAL_FRACTION, seed: int = 0) -> SplitPlan:
    _validate_fraction(val_fraction)
    _check_uniform_images(train)
    by_class = _images_by_class(train)
    rng = make_rng(seed)
    roles = _split_images(by_class, sorted(by_class), val_fraction, rng)
    return SplitPlan(
        protocol=CLOSED,
        seed=seed,
        val_fraction=val_fraction,
        fit=_subset_by_role(train, roles, "fit"),
        validation=_subset_by_role(train, roles, "validation"),
        final_train=train,
        ku_class_ids=frozenset(),
        image_roles=roles,
        extra_image_ids=(),
    )


def plan_open(train: Dataset, val_fraction: float = DEFAULT_VAL_FRACTION, seed: int = 0) -> SplitPlan:
    _validate_fraction(val_fraction)
    _check_uniform_images(train)
    by_class = _images_by_class(train)
    class_ids = sorted(by_class)
    n = len(class_ids)
    if n < 2:
        raise OsbenchInputError("open protocol needs at least 2 classes")
    rng = make_rng(seed)
    ku = rng.choice(np.asarray(class_ids), size=n // 2, replace=False)
    ku_ids = frozenset(int(c) for c in ku)
    kept = [c for c in class_ids if c not in ku_ids]

    roles = _split_images(by_class, kept, val_fraction, rng)
    for cid in sorted(ku_ids):
        for img in by_class[cid]:
            roles[img] = "validation"

    fit_ds = _subset_by_role(train, roles, "fit")
    val_ds = relabel_as_unknown(_subset_by_role(train, roles, "validation"), ku_ids)
    return SplitPlan(
        protocol=OPEN,
        seed=seed,
        val_fraction=val_fraction,
        fit=fit_ds,
        validation=val_ds,
        final_train=train,
        ku_class_ids=ku_ids,
        image_roles=roles,
        extra_image_ids=(),
    )


def plan_netopen(
    train: Dataset,
    extra_ku: Dataset,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    seed: int = 0,
) -> SplitPlan:
    _validate_fraction(val_fraction)
    _check_uniform_images(train)
    if len(extra_ku) == 0:
        raise OsbenchInputError("netopen needs a nonempty extra known-unknown dataset")
    train_names = set(train.class_registry.values())
    extra_names = {
        extra_ku.class_registry[l.class_id] for l in extra_ku.labels if not l.is_unknown
    }
    overlap = train_names & extra_names
    if overlap:
        raise OsbenchInputError(f"extra-ku class names overlap training: {sorted(overlap)}")
    collisions = set(train.image_ids) & set(extra_ku.image_ids)
    if collisions:
        raise OsbenchInputError(f"extra-ku image ids collide with training: {sorted(collisions)[:3]}")

    by_class = _images_by_class(train)
    rng = make_rng(seed)
    roles = _split_images(by_class, sorted(by_class), val_fraction, rng)

    extra_unknown = relabel_as_unknown(extra_ku, set(extra_ku.present_class_ids))
    validation = concat_datasets(
        [_subset_by_role(train, roles, "validation"), extra_unknown], train.class_registry
    )
    extra_images = tuple(dict.fromkeys(extra_ku.image_ids))
    return SplitPlan(
        protocol=NETOPEN,
        seed=seed,
        val_fraction=val_fraction,
        fit=_subset_by_role(train, roles, "fit"),
        validation=validation,
        final_train=train,
        ku_class_ids=frozenset(),
        image_roles=roles,
        extra_image_ids=extra_images,
    )


def make_plan(
    protocol: str,
    train: Dataset,
    extra_ku: Dataset | None = None,
    val_fraction: float = DEFAULT_VAL_FRACTION,
    seed: int = 0,
) -> SplitPlan:
    if protocol == CLOSED:
        return plan_closed(train, val_fraction, seed)
    if protocol == OPEN:
        return plan_open(train, val_fraction, seed)
    if protocol == NETOPEN:
        if extra_ku is None:
            raise OsbenchInputError("netopen requires an extra known-unknown dataset")
        return plan_netopen(train, extra_ku, val_fraction, seed)
    raise OsbenchInputError(f"unknown protocol {protocol!r}")


# -- plan files ----------------------------------------------------------


def save_plan(plan: SplitPlan, path: str) -> None:
    if plan.train_manifest is None:
        raise OsbenchInputError("plan lacks manifest provenance; cannot be saved")
    base = os.path.dirname(os.path.abspath(path))
    ku_names = sorted(
        plan.final_train.class_registry[cid] for cid in plan.ku_class_ids
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("osbench_plan_v1\n")
        fh.write(f"protocol={plan.protocol}\n")
        fh.write(f"seed={plan.seed}\n")
        fh.write(f"val_fraction={plan.val_fraction!r}\n")
        fh.write(f"train_manifest={os.path.relpath(os.path.abspath(plan.train_manifest), base)}\n")
        extra = (
            os.path.relpath(os.path.abspath(plan.extra_manifest), base)
            if plan.extra_manifest
            else ""
        )
        fh.write(f"extra_manifest={extra}\n")
        fh.write("ku_classes=" + ",".join(ku_names) + "\n")
        for img in sorted(plan.image_roles):
            fh.write(f"image,{img},{plan.image_roles[img]}\n")
        for img in plan.extra_image_ids:
            fh.write(f"extra_image,{img},validation\n")


def load_plan(path: str) -> SplitPlan:
    """Rebuild a plan from its file and the manifests it references.

    Roles are applied as recorded; the planner is not re-run.
    """
    if not os.path.exists(path):
        raise ManifestError(f"plan file not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    header: dict[str, str] = {}
    roles: dict[str, str] = {}
    extra_images: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != "osbench_plan_v1":
            raise ManifestError(f"{path}: not a plan file")
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("image,"):
                _, img, role = line.split(",", 2)
                if role not in ("fit", "validation"):
                    raise ManifestError(f"{path}: bad role {role!r}")
                roles[img] = role
                continue
            if line.startswith("extra_image,"):
                _, img, _role = line.split(",", 2)
                extra_images.append(img)
                continue
            if "=" in line:
                key, value = line.split("=", 1)
                header[key] = value
                continue
            raise ManifestError(f"{path}: unrecognized line {line!r}")

    protocol = header.get("protocol", "")
    if protocol not in PROTOCOLS:
        raise ManifestError(f"{path}: unknown protocol {protocol!r}")
    seed = int(header["seed"])
    val_fraction = float(header["val_fraction"])
    train_manifest = os.path.join(base, header["train_manifest"])
    train = load_manifest(train_manifest)

    by_name = {name: cid for cid, name in train.class_registry.items()}
    ku_ids = frozenset(
        by_name[name] for name in header.get("ku_classes", "").split(",") if name
    )

    missing = [img for img in train.image_ids if img not in roles]
    if missing:
        raise ManifestError(f"{path}: image {missing[0]!r} has no recorded role")

    fit_ds = _subset_by_role(train, roles, "fit")
    val_ds = _subset_by_role(train, roles, "validation")
    if ku_ids:
        val_ds = relabel_as_unknown(val_ds, set(ku_ids))

    extra_manifest = header.get("extra_manifest", "")
    extra_path = os.path.join(base, extra_manifest) if extra_manifest else None
    if protocol == NETOPEN:
        if extra_path is None:
            raise ManifestError(f"{path}: netopen plan lacks extra_manifest")
        extra = load_manifest(extra_path)
        extra_unknown = relabel_as_unknown(extra, set(extra.present_class_ids))
        val_ds = concat_datasets([val_ds, extra_unknown], train.class_registry)

    return SplitPlan(
        protocol=protocol,
        seed=seed,
        val_fraction=val_fraction,
        fit=fit_ds,
        validation=val_ds,
        final_train=train,
        ku_class_ids=ku_ids,
        image_roles=roles,
        extra_image_ids=tuple(extra_images),
        train_manifest=train_manifest,
        extra_manifest=extra_path,
    )


def with_manifests(plan: SplitPlan, train_manifest: str, extra_manifest: str | None) -> SplitPlan:
    """Attach manifest provenance so the plan can be serialized."""
    from dataclasses import replace

    return replace(plan, train_manifest=train_manifest, extra_manifest=extra_manifest)
