"""Core data model: labels, samples, datasets, and manifest/feature file I/O.

Label space
-----------
A label is either a known class (non-negative integer id) or the
distinguished "unknown" label.  Class ids are assigned deterministically:
sorted lexicographic order of the class names appearing in a manifest,
starting at 0.  The class name ``unknown`` is reserved and always denotes
the unknown label.

Manifest format (text)
----------------------
Header lines, then one record per patch::

    feature_file=<path relative to the manifest>
    format=osfv|csv
    dim=<feature dimension>
    classes=<name,name,...>          # optional, pins the class registry
    <image_id>,<patch_index>,<class_name>,<row_index>

Blank lines and lines starting with ``#`` are ignored.  ``row_index``
addresses a row of the feature file, so several manifests may share one
feature file.  When a ``classes=`` header is present, any record naming a
class outside it (other than ``unknown``) is an error.  Image ids and class
names must not contain ``,`` or ``=``.

Feature file formats
--------------------
``osfv``: binary, little endian: magic ``OSFV``, uint32 dim, uint32 row
count, then rows of float32.  ``csv``: one row per line, comma separated
decimal floats.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ManifestError, OsbenchInputError

UNKNOWN_NAME = "unknown"

_OSFV_MAGIC = b"OSFV"


@dataclass(frozen=True)
class Label:
    """A known class id, or the unknown label when ``class_id`` is None."""

    class_id: int | None = None

    @property
    def is_unknown(self) -> bool:
        return self.class_id is None

    def __repr__(self) -> str:  # compact, used in error messages and tests
        return "UNKNOWN" if self.class_id is None else f"K{self.class_id}"

    def __lt__(self, other: "Label") -> bool:
        # UNKNOWN sorts after every known label; used by deterministic ties.
        if self.class_id is None:
            return False
        if other.class_id is None:
            return True
        return self.class_id < other.class_id


UNKNOWN = Label(None)


def known(class_id: int) -> Label:
    if class_id < 0:
        raise OsbenchInputError(f"known class id must be >= 0, got {class_id}")
    return Label(int(class_id))


@dataclass(frozen=True)
class Sample:
    """One feature vector with its provenance."""

    features: np.ndarray
    label: Label
    image_id: str
    patch_index: int


class Dataset:
    """Immutable ordered collection of samples sharing one feature space.

    ``features`` is an (N, d) float32 array; row i belongs to sample i.
    The class registry maps class id to class name and may register classes
    that are currently absent from the samples (e.g. after relabeling).
    """

    def __init__(
        self,
        features: np.ndarray,
        labels: list[Label] | tuple[Label, ...],
        image_ids: list[str] | tuple[str, ...],
        patch_indices: np.ndarray | list[int],
        class_registry: dict[int, str],
    ):
        features = np.asarray(features, dtype=np.float32)
        if features.ndim != 2:
            raise OsbenchInputError("features must be a 2-D array")
        n = features.shape[0]
        if not (len(labels) == len(image_ids) == n):
            raise OsbenchInputError("features, labels and image_ids must agree in length")
        patch_indices = np.asarray(patch_indices, dtype=np.int64)
        if patch_indices.shape != (n,):
            raise OsbenchInputError("patch_indices must be one per sample")

        registry = dict(class_registry)
        for cid, name in registry.items():
            if name == UNKNOWN_NAME:
                raise OsbenchInputError("class name 'unknown' is reserved")
            if cid < 0:
                raise OsbenchInputError("registered class ids must be >= 0")

        seen: set[tuple[str, int]] = set()
        for lab, img, pi in zip(labels, image_ids, patch_indices):
            if not lab.is_unknown and lab.class_id not in registry:
                raise OsbenchInputError(f"label {lab} not in class registry")
            key = (img, int(pi))
            if key in seen:
                raise OsbenchInputError(f"duplicate (image_id, patch_index): {key}")
            seen.add(key)

        features = features.copy()
        features.setflags(write=False)
        patch_indices = patch_indices.copy()
        patch_indices.setflags(write=False)

        self.features = features
        self.labels: tuple[Label, ...] = tuple(labels)
        self.image_ids: tuple[str, ...] = tuple(image_ids)
        self.patch_indices = patch_indices
        self.class_registry = registry

    # -- basic views ----------------------------------------------------

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_known(self) -> int:
        return len({l.class_id for l in self.labels if not l.is_unknown})

    @property
    def present_class_ids(self) -> tuple[int, ...]:
        return tuple(sorted({l.class_id for l in self.labels if not l.is_unknown}))

    @property
    def samples(self) -> list[Sample]:
        return [
            Sample(self.features[i], self.labels[i], self.image_ids[i], int(self.patch_indices[i]))
            for i in range(len(self))
        ]

    def subset(self, indices) -> "Dataset":
        """New dataset keeping rows at `indices`, in the given order."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx],
            [self.labels[i] for i in idx],
            [self.image_ids[i] for i in idx],
            self.patch_indices[idx],
            self.class_registry,
        )

    def class_name(self, label: Label) -> str:
        return UNKNOWN_NAME if label.is_unknown else self.class_registry[label.class_id]


def group_by_image(dataset: Dataset) -> dict[str, list[Sample]]:
    """Partition samples by image id; within a group, order by patch_index."""
    order: dict[str, list[int]] = {}
    for i, img in enumerate(dataset.image_ids):
        order.setdefault(img, []).append(i)
    out: dict[str, list[Sample]] = {}
    samples = dataset.samples
    for img, idxs in order.items():
        idxs.sort(key=lambda i: int(dataset.patch_indices[i]))
        out[img] = [samples[i] for i in idxs]
    return out


def relabel_as_unknown(dataset: Dataset, class_ids: set[int]) -> Dataset:
    """Copy of `dataset` with all samples of the given classes marked unknown.

    Every id must be registered; feature bytes are shared verbatim.
    """
    for cid in class_ids:
        if cid not in dataset.class_registry:
            raise OsbenchInputError(f"cannot relabel unregistered class id {cid}")
    labels = [
        UNKNOWN if (not l.is_unknown and l.class_id in class_ids) else l
        for l in dataset.labels
    ]
    return Dataset(dataset.features, labels, dataset.image_ids, dataset.patch_indices, dataset.class_registry)


def align_to_registry(dataset: Dataset, registry: dict[int, str]) -> Dataset:
    """Re-express labels of `dataset` in another registry, matching by name.

    Class names absent from the target registry become unknown, which is the
    correct reading for test data containing classes a model never saw.
    """
    by_name = {name: cid for cid, name in registry.items()}
    labels: list[Label] = []
    for lab in dataset.labels:
        if lab.is_unknown:
            labels.append(UNKNOWN)
            continue
        name = dataset.class_registry[lab.class_id]
        labels.append(Label(by_name[name]) if name in by_name else UNKNOWN)
    return Dataset(dataset.features, labels, dataset.image_ids, dataset.patch_indices, dict(registry))


def concat_datasets(parts: list[Dataset], class_registry: dict[int, str]) -> Dataset:
    """Concatenate datasets row-wise under one explicit registry.

    Labels of every part must already be valid in `class_registry` (or
    unknown); image ids must not collide across parts.
    """
    if not parts:
        raise OsbenchInputError("concat_datasets needs at least one part")
    dim = parts[0].feature_dim
    for p in parts:
        if p.feature_dim != dim:
            raise OsbenchInputError("feature dimension mismatch in concat")
    feats = np.vstack([p.features for p in parts])
    labels: list[Label] = []
    image_ids: list[str] = []
    patch_indices: list[int] = []
    for p in parts:
        labels.extend(p.labels)
        image_ids.extend(p.image_ids)
        patch_indices.extend(int(x) for x in p.patch_indices)
    return Dataset(feats, labels, image_ids, patch_indices, class_registry)


# -- feature files ------------------------------------------------------


def write_feature_file(path: str, features: np.ndarray, fmt: str = "osfv") -> None:
    arr = np.asarray(features, dtype=np.float32)
    if arr.ndim != 2:
        raise OsbenchInputError("feature array must be 2-D")
    if fmt == "osfv":
        with open(path, "wb") as fh:
            fh.write(_OSFV_MAGIC)
            fh.write(struct.pack("<II", arr.shape[1], arr.shape[0]))
            fh.write(arr.astype("<f4").tobytes(order="C"))
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for row in arr:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
    else:
        raise ManifestError(f"unknown feature file format {fmt!r}")


def read_feature_file(path: str, fmt: str = "osfv") -> np.ndarray:
    if not os.path.exists(path):
        raise ManifestError(f"feature file not found: {path}")
    if fmt == "osfv":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _OSFV_MAGIC:
                raise ManifestError(f"bad magic in feature file {path}")
            dim, count = struct.unpack("<II", fh.read(8))
            data = fh.read()
        arr = np.frombuffer(data, dtype="<f4")
        if arr.size != dim * count:
            raise ManifestError(f"feature file {path} truncated")
        return arr.reshape(count, dim).astype(np.float32)
    if fmt == "csv":
        rows: list[list[float]] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rows.append([float(tok) for tok in line.split(",")])
        if not rows:
            return np.zeros((0, 0), dtype=np.float32)
        width = len(rows[0])
        for i, r in enumerate(rows):
            if len(r) != width:
                raise ManifestError(f"ragged csv feature file {path} at row {i}")
        return np.asarray(rows, dtype=np.float32)
    raise ManifestError(f"unknown feature file format {fmt!r}")


# -- manifests ----------------------------------------------------------


def load_manifest(path: str) -> Dataset:
    """Read a manifest and its feature file into a Dataset.

    Sample order is the manifest record order.  Class ids are assigned by
    sorted class name; a ``classes=`` header pins the registry explicitly.
    """
    if not os.path.exists(path):
        raise ManifestError(f"manifest not found: {path}")
    header: dict[str, str] = {}
    records: list[tuple[str, int, str, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and line.split("=", 1)[0].isidentifier():
                key, value = line.split("=", 1)
                header[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ManifestError(f"{path}:{lineno}: expected 4 comma-separated fields")
            image_id, patch_s, class_name, row_s = (p.strip() for p in parts)
            try:
                patch_index = int(patch_s)
                row_index = int(row_s)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: bad integer field") from exc
            if patch_index < 0 or row_index < 0:
                raise ManifestError(f"{path}:{lineno}: negative index")
            records.append((image_id, patch_index, class_name, row_index))

    for req in ("feature_file", "dim"):
        if req not in header:
            raise ManifestError(f"{path}: missing header line {req}=")
    fmt = header.get("format", "osfv")
    try:
        dim = int(header["dim"])
    except ValueError as exc:
        raise ManifestError(f"{path}: dim= must be an integer") from exc

    feature_path = os.path.join(os.path.dirname(os.path.abspath(path)), header["feature_file"])
    feats_all = read_feature_file(feature_path, fmt)
    if len(records) > 0 or feats_all.size > 0:
        if feats_all.ndim != 2 or (feats_all.shape[0] > 0 and feats_all.shape[1] != dim):
            raise ManifestError(
                f"{path}: dimension mismatch: manifest says {dim}, "
                f"feature file has {feats_all.shape[1] if feats_all.ndim == 2 else '?'}"
            )

    names = sorted({r[2] for r in records if r[2] != UNKNOWN_NAME})
    if "classes" in header:
        pinned = sorted(n.strip() for n in header["classes"].split(",") if n.strip())
        for n in names:
            if n not in pinned:
                raise ManifestError(f"{path}: unregistered class name {n!r}")
        names = pinned
    registry = {i: name for i, name in enumerate(names)}
    by_name = {name: i for i, name in registry.items()}

    rows = []
    labels: list[Label] = []
    image_ids: list[str] = []
    patch_indices: list[int] = []
    for image_id, patch_index, class_name, row_index in records:
        if row_index >= feats_all.shape[0]:
            raise ManifestError(f"{path}: row_index {row_index} out of range")
        rows.append(row_index)
        labels.append(UNKNOWN if class_name == UNKNOWN_NAME else Label(by_name[class_name]))
        image_ids.append(image_id)
        patch_indices.append(patch_index)

    if rows:
        feats = feats_all[np.asarray(rows, dtype=np.int64)]
    else:
        feats = np.zeros((0, dim), dtype=np.float32)
    try:
        return Dataset(feats, labels, image_ids, patch_indices, registry)
    except OsbenchInputError as exc:
        raise ManifestError(f"{path}: {exc}") from exc


def save_manifest(
    dataset: Dataset,
    manifest_path: str,
    feature_path: str | None = None,
    fmt: str = "osfv",
) -> None:
    """Write `dataset` as a manifest plus feature file.

    Row order, labels and feature bytes round-trip exactly through
    ``load_manifest``.
    """
    if feature_path is None:
        stem, _ = os.path.splitext(manifest_path)
        feature_path = stem + (".osfv" if fmt == "osfv" else ".csv")
    write_feature_file(feature_path, dataset.features, fmt)
    rel = os.path.relpath(
        os.path.abspath(feature_path), os.path.dirname(os.path.abspath(manifest_path))
    )
    names = [dataset.class_registry[cid] for cid in sorted(dataset.class_registry)]
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(f"feature_file={rel}\n")
        fh.write(f"format={fmt}\n")
        fh.write(f"dim={dataset.feature_dim}\n")
        if names:
            fh.write("classes=" + ",".join(names) + "\n")
        for i in range(len(dataset)):
            fh.write(
                f"{dataset.image_ids[i]},{int(dataset.patch_indices[i])},"
                f"{dataset.class_name(dataset.labels[i])},{i}\n"
            )
