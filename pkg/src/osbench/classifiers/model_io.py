"""Model persistence.

File layout: magic ``OSM1``, a little-endian uint32 header length, a JSON
header, then one contiguous binary block of little-endian float64 values.
The header carries the variant tag, hyperparameters, class registry,
standardization statistics location, and a manifest of every array (name,
shape, logical dtype), so files are self-describing.  Integer arrays are
stored as float64 (exact for index-sized values) and cast back on load.

``load_model(save_model(m))`` reproduces predictions bit-exactly: all model
state is float64 end to end.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ManifestError, OsbenchInputError
from ..numerics import KernelSpec, SvmModel, WeibullParams
from .base import Standardizer, SupportBox
from .enclosing_ball import BallModel, OccPerClassModel
from .extra_trees import ExtraTreesModel, Tree
from .nearest import NcmModel, OsnnModel
from .softmax import SoftmaxModel
from .svm_family import (
    BinaryDetectorModel,
    PiSvmModel,
    PlattSvmModel,
    SvmOvaModel,
    TwoStageModel,
)

_MAGIC = b"OSM1"
_FORMAT = "osbench_model_v1"


def _kernel_meta(k: KernelSpec):
    return [k.kind, k.gamma]


def _kernel_from(meta) -> KernelSpec:
    kind, gamma = meta
    return KernelSpec(kind, gamma=gamma)


def _svm_pack(svm: SvmModel, prefix: str, arrays: dict) -> dict:
    arrays[prefix + "sv"] = svm.support_vectors
    arrays[prefix + "coef"] = svm.dual_coef
    arrays[prefix + "alpha"] = svm.alpha
    arrays[prefix + "labels"] = svm.labels
    return {
        "bias": svm.bias,
        "kernel": _kernel_meta(svm.kernel),
        "converged": svm.converged,
    }


def _svm_unpack(meta: dict, prefix: str, arrays: dict) -> SvmModel:
    return SvmModel(
        support_vectors=arrays[prefix + "sv"],
        dual_coef=arrays[prefix + "coef"],
        bias=float(meta["bias"]),
        kernel=_kernel_from(meta["kernel"]),
        converged=bool(meta["converged"]),
        alpha=arrays[prefix + "alpha"],
        labels=arrays[prefix + "labels"],
    )


def _ball_pack(ball: BallModel, prefix: str, arrays: dict) -> dict:
    arrays[prefix + "points"] = ball.points
    arrays[prefix + "beta"] = ball.beta
    return {
        "kernel": _kernel_meta(ball.kernel),
        "radius": ball.radius,
        "center_sq": ball.center_sq,
        "converged": ball.converged,
    }


def _ball_unpack(meta: dict, prefix: str, arrays: dict) -> BallModel:
    return BallModel(
        points=arrays[prefix + "points"],
        beta=arrays[prefix + "beta"],
        kernel=_kernel_from(meta["kernel"]),
        radius=float(meta["radius"]),
        center_sq=float(meta["center_sq"]),
        converged=bool(meta["converged"]),
    )


def _trees_pack(trees, prefix: str, arrays: dict) -> dict:
    for t, tree in enumerate(trees):
        arrays[f"{prefix}tree{t}/feature"] = tree.feature
        arrays[f"{prefix}tree{t}/threshold"] = tree.threshold
        arrays[f"{prefix}tree{t}/left"] = tree.left
        arrays[f"{prefix}tree{t}/right"] = tree.right
        arrays[f"{prefix}tree{t}/leaf_probs"] = tree.leaf_probs
    return {"n_trees": len(trees)}


def _trees_unpack(meta: dict, prefix: str, arrays: dict) -> tuple[Tree, ...]:
    out = []
    for t in range(int(meta["n_trees"])):
        out.append(
            Tree(
                feature=arrays[f"{prefix}tree{t}/feature"].astype(np.int64),
                threshold=arrays[f"{prefix}tree{t}/threshold"],
                left=arrays[f"{prefix}tree{t}/left"].astype(np.int64),
                right=arrays[f"{prefix}tree{t}/right"].astype(np.int64),
                leaf_probs=arrays[f"{prefix}tree{t}/leaf_probs"],
            )
        )
    return tuple(out)


def _box_pack(box: SupportBox, prefix: str, arrays: dict) -> None:
    arrays[prefix + "box_lo"] = box.lo
    arrays[prefix + "box_hi"] = box.hi


def _box_unpack(prefix: str, arrays: dict) -> SupportBox:
    return SupportBox(lo=arrays[prefix + "box_lo"], hi=arrays[prefix + "box_hi"])


def _pack(model, prefix: str = "") -> tuple[dict, dict]:
    """Common fields plus variant payload; arrays keyed under `prefix`."""
    arrays: dict[str, np.ndarray] = {}
    arrays[prefix + "scaler_mean"] = model.scaler.mean
    arrays[prefix + "scaler_std"] = model.scaler.std
    meta: dict = {
        "variant": model.variant,
        "seed": model.seed,
        "feature_dim": model.feature_dim,
        "threshold": model.threshold,
        "hyperparams": model.hyperparams,
        "class_ids": list(model.class_ids),
        "class_names": {str(k): v for k, v in model.class_names.items()},
    }

    v = model.variant
    if v == "osnn":
        arrays[prefix + "train_x"] = model.train_x
        arrays[prefix + "train_y"] = model.train_y
    elif v == "ncm":
        arrays[prefix + "means"] = model.means
        _box_pack(model.support, prefix, arrays)
    elif v == "softmax":
        arrays[prefix + "weights"] = model.weights
        arrays[prefix + "bias"] = model.bias
        _box_pack(model.support, prefix, arrays)
    elif v == "et":
        meta["forest"] = _trees_pack(model.trees, prefix, arrays)
        _box_pack(model.support, prefix, arrays)
    elif v == "svm_ova":
        meta["svms"] = [_svm_pack(s, f"{prefix}svm{i}/", arrays) for i, s in enumerate(model.svms)]
    elif v == "psvm":
        meta["svms"] = [_svm_pack(s, f"{prefix}svm{i}/", arrays) for i, s in enumerate(model.svms)]
        meta["platt"] = [list(ab) for ab in model.platt]
    elif v == "pisvm":
        meta["svms"] = [_svm_pack(s, f"{prefix}svm{i}/", arrays) for i, s in enumerate(model.svms)]
        meta["weibulls"] = [[w.shape, w.scale, w.shift] for w in model.weibulls]
    elif v == "two_stage":
        meta["gate"] = _ball_pack(model.gate, prefix + "gate/", arrays)
        meta["svms"] = [_svm_pack(s, f"{prefix}svm{i}/", arrays) for i, s in enumerate(model.svms)]
        meta["platt"] = [list(ab) for ab in model.platt]
    elif v == "occ_perclass":
        meta["balls"] = [
            _ball_pack(b, f"{prefix}ball{i}/", arrays) for i, b in enumerate(model.balls)
        ]
    elif v == "binary_detector":
        meta["base"] = model.base
        if model.base == "psvm":
            meta["svm"] = _svm_pack(model.svm, prefix + "svm/", arrays)
            meta["platt_ab"] = list(model.platt_ab)
        else:
            inner_meta, inner_arrays = _pack(model.forest, prefix + "forest/")
            meta["forest_model"] = inner_meta
            arrays.update(inner_arrays)
    else:
        raise OsbenchInputError(f"cannot serialize variant {v!r}")
    return meta, arrays


def _unpack(meta: dict, arrays: dict, prefix: str = ""):
    common = dict(
        variant=meta["variant"],
        class_ids=tuple(int(c) for c in meta["class_ids"]),
        class_names={int(k): v for k, v in meta["class_names"].items()},
        scaler=Standardizer(mean=arrays[prefix + "scaler_mean"], std=arrays[prefix + "scaler_std"]),
        feature_dim=int(meta["feature_dim"]),
        seed=int(meta["seed"]),
        hyperparams=dict(meta["hyperparams"]),
        threshold=None if meta["threshold"] is None else float(meta["threshold"]),
    )
    v = meta["variant"]
    if v == "osnn":
        return OsnnModel(
            **common,
            train_x=arrays[prefix + "train_x"],
            train_y=arrays[prefix + "train_y"].astype(np.int64),
        )
    if v == "ncm":
        return NcmModel(**common, means=arrays[prefix + "means"], support=_box_unpack(prefix, arrays))
    if v == "softmax":
        return SoftmaxModel(
            **common,
            weights=arrays[prefix + "weights"],
            bias=arrays[prefix + "bias"],
            support=_box_unpack(prefix, arrays),
        )
    if v == "et":
        return ExtraTreesModel(
            **common,
            trees=_trees_unpack(meta["forest"], prefix, arrays),
            support=_box_unpack(prefix, arrays),
        )
    if v == "svm_ova":
        svms = tuple(_svm_unpack(m, f"{prefix}svm{i}/", arrays) for i, m in enumerate(meta["svms"]))
        return SvmOvaModel(**common, svms=svms)
    if v == "psvm":
        svms = tuple(_svm_unpack(m, f"{prefix}svm{i}/", arrays) for i, m in enumerate(meta["svms"]))
        return PlattSvmModel(**common, svms=svms, platt=tuple(tuple(ab) for ab in meta["platt"]))
    if v == "pisvm":
        svms = tuple(_svm_unpack(m, f"{prefix}svm{i}/", arrays) for i, m in enumerate(meta["svms"]))
        weibulls = tuple(WeibullParams(*w) for w in meta["weibulls"])
        return PiSvmModel(**common, svms=svms, weibulls=weibulls)
    if v == "two_stage":
        svms = tuple(_svm_unpack(m, f"{prefix}svm{i}/", arrays) for i, m in enumerate(meta["svms"]))
        return TwoStageModel(
            **common,
            gate=_ball_unpack(meta["gate"], prefix + "gate/", arrays),
            svms=svms,
            platt=tuple(tuple(ab) for ab in meta["platt"]),
        )
    if v == "occ_perclass":
        balls = tuple(
            _ball_unpack(m, f"{prefix}ball{i}/", arrays) for i, m in enumerate(meta["balls"])
        )
        return OccPerClassModel(**common, balls=balls)
    if v == "binary_detector":
        base = meta["base"]
        if base == "psvm":
            return BinaryDetectorModel(
                **common,
                base=base,
                svm=_svm_unpack(meta["svm"], prefix + "svm/", arrays),
                platt_ab=tuple(meta["platt_ab"]),
                forest=None,
            )
        return BinaryDetectorModel(
            **common,
            base=base,
            svm=None,
            platt_ab=None,
            forest=_unpack(meta["forest_model"], arrays, prefix + "forest/"),
        )
    raise ManifestError(f"cannot restore variant {v!r}")


def save_model(model, path: str) -> None:
    meta, arrays = _pack(model)
    names = sorted(arrays)
    manifest = []
    blocks = []
    for name in names:
        arr = np.ascontiguousarray(np.asarray(arrays[name], dtype=np.float64))
        logical = "i8" if np.issubdtype(np.asarray(arrays[name]).dtype, np.integer) else "f8"
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": logical})
        blocks.append(arr.astype("<f8").tobytes(order="C"))
    header = {"format": _FORMAT, "model": meta, "arrays": manifest}
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for block in blocks:
            fh.write(block)


def load_model(path: str):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ManifestError(f"not a model file: {path}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format") != _FORMAT:
            raise ManifestError(f"unsupported model format in {path}")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ManifestError(f"model file {path} truncated")
            arr = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
            if entry["dtype"] == "i8":
                arr = arr.astype(np.int64)
            arrays[entry["name"]] = arr
    return _unpack(header["model"], arrays)
