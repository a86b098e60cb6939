"""Content-aware patch extraction and residual co-occurrence features.

Pixels arrive as already-decoded raw dumps (format below); no codec is
involved.  The descriptor is the small, standard residual recipe: high-pass
filter, quantize and truncate, then count co-occurrences of adjacent
quantized values.  With ``cross_channel`` the histograms are computed on
the inter-channel difference planes (R-G, B-G, R-B) instead of the green
channel, which targets color-filter-array style traces.

Raw pixel dump (binary, little endian): magic ``OSIM``, uint32 height,
width, channels (must be 3), then H*W*3 bytes row-major, channel
interleaved, 8 bits per channel.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ManifestError, OsbenchInputError

_OSIM_MAGIC = b"OSIM"

HORIZONTAL = "horizontal"
VERTICAL = "vertical"

# First-order plus second-order difference kernels, both orientations.
DEFAULT_FILTER_BANK: tuple[np.ndarray, ...] = (
    np.array([[-1.0, 1.0]]),
    np.array([[-1.0], [1.0]]),
    np.array([[1.0, -2.0, 1.0]]),
    np.array([[1.0], [-2.0], [1.0]]),
)


@dataclass(frozen=True)
class PatchSpec:
    size: int = 64
    count: int = 32
    non_overlapping: bool = True

    def __post_init__(self):
        if self.size < 8:
            raise OsbenchInputError("patch size must be >= 8")
        if self.count < 1:
            raise OsbenchInputError("patch count must be >= 1")
        if not self.non_overlapping:
            raise OsbenchInputError("only non-overlapping patches are supported")


@dataclass(frozen=True)
class CooccurrenceConfig:
    filter_bank: tuple[np.ndarray, ...] = DEFAULT_FILTER_BANK
    quantization_step: float = 1.0
    truncation: int = 2
    order: int = 3
    directions: tuple[str, ...] = (HORIZONTAL, VERTICAL)
    cross_channel: bool = False

    def __post_init__(self):
        if self.quantization_step <= 0:
            raise OsbenchInputError("quantization step must be positive")
        if self.truncation < 1:
            raise OsbenchInputError("truncation must be >= 1")
        if self.order not in (2, 3, 4):
            raise OsbenchInputError("co-occurrence order must be 2, 3 or 4")
        if not self.directions or any(d not in (HORIZONTAL, VERTICAL) for d in self.directions):
            raise OsbenchInputError("directions must be a nonempty subset of horizontal/vertical")
        if not self.filter_bank:
            raise OsbenchInputError("filter bank must be nonempty")

    @property
    def histogram_length(self) -> int:
        return (2 * self.truncation + 1) ** self.order

    @property
    def output_dim(self) -> int:
        planes = 3 if self.cross_channel else 1
        return len(self.filter_bank) * len(self.directions) * self.histogram_length * planes


# -- raw image dumps ------------------------------------------------------


def write_image_dump(path: str, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise OsbenchInputError("image must be H x W x 3")
    arr = image.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(_OSIM_MAGIC)
        fh.write(struct.pack("<III", arr.shape[0], arr.shape[1], 3))
        fh.write(arr.tobytes(order="C"))


def read_image_dump(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise ManifestError(f"image dump not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(4) != _OSIM_MAGIC:
            raise ManifestError(f"bad magic in image dump {path}")
        h, w, c = struct.unpack("<III", fh.read(12))
        if c != 3:
            raise ManifestError(f"{path}: expected 3 channels, got {c}")
        data = fh.read()
    if len(data) != h * w * 3:
        raise ManifestError(f"image dump {path} truncated")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


# -- patch extraction -----------------------------------------------------


def patch_quality(patch: np.ndarray) -> float:
    """Texture-minus-saturation score on the green channel, higher is better.

    Mean standard deviation over non-overlapping 8x8 blocks, penalized by
    the fraction of pixels at the 8-bit intensity extremes.
    """
    green = patch[:, :, 1].astype(np.float64)
    h, w = green.shape
    bh, bw = h // 8, w // 8
    blocks = green[: bh * 8, : bw * 8].reshape(bh, 8, bw, 8)
    texture = float(blocks.std(axis=(1, 3)).mean())
    saturated = float(((green == 0) | (green == 255)).mean())
    return texture - saturated


def extract_patches(image: np.ndarray, spec: PatchSpec, seed: int = 0) -> list[np.ndarray]:
    """Up to spec.count disjoint grid tiles, best quality score first.

    Tiles are axis-aligned size x size blocks; ties keep raster order.  The
    selection is deterministic; `seed` is accepted for interface symmetry.
    """
    del seed
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise OsbenchInputError("image must be H x W x 3")
    h, w = image.shape[:2]
    if h < spec.size or w < spec.size:
        raise OsbenchInputError(
            f"image {h}x{w} smaller than one {spec.size}x{spec.size} patch"
        )
    tiles = []
    for r in range(h // spec.size):
        for c in range(w // spec.size):
            tile = image[
                r * spec.size : (r + 1) * spec.size, c * spec.size : (c + 1) * spec.size
            ]
            tiles.append((patch_quality(tile), len(tiles), tile))
    tiles.sort(key=lambda t: (-t[0], t[1]))
    return [tile for _, _, tile in tiles[: spec.count]]


# -- residual / co-occurrence pipeline ------------------------------------


def residual(patch: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-region high-pass filtering (sliding dot product, no padding)."""
    patch = np.asarray(patch, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or patch.ndim != 2:
        raise OsbenchInputError("residual expects 2-D patch and kernel")
    kh, kw = kernel.shape
    h, w = patch.shape
    if kh > h or kw > w:
        raise OsbenchInputError("kernel larger than patch")
    out = np.zeros((h - kh + 1, w - kw + 1))
    for di in range(kh):
        for dj in range(kw):
            if kernel[di, dj] != 0.0:
                out += kernel[di, dj] * patch[di : di + out.shape[0], dj : dj + out.shape[1]]
    return out


def quantize_truncate(values: np.ndarray, q: float, t: int) -> np.ndarray:
    """clamp(round(v / q), -T, T) with half-away-from-zero rounding."""
    if q <= 0:
        raise OsbenchInputError("quantization step must be positive")
    v = np.asarray(values, dtype=np.float64) / q
    rounded = np.sign(v) * np.floor(np.abs(v) + 0.5)
    return np.clip(rounded, -t, t).astype(np.int64)


def cooccurrence_histogram(
    quantized: np.ndarray, order: int, direction: str, truncation: int
) -> np.ndarray:
    """Normalized counts of length-`order` runs of adjacent values.

    The vector indexes base-(2T+1) digits of the run, first element most
    significant.  All zeros when the array is too small to host one run.
    """
    q = np.asarray(quantized, dtype=np.int64)
    if direction == VERTICAL:
        q = q.T
    elif direction != HORIZONTAL:
        raise OsbenchInputError(f"unknown direction {direction!r}")
    base = 2 * truncation + 1
    length = base**order
    if q.ndim != 2 or q.shape[1] < order or q.shape[0] < 1:
        return np.zeros(length)
    if np.abs(q).max(initial=0) > truncation:
        raise OsbenchInputError("quantized values exceed the truncation bound")
    width = q.shape[1] - order + 1
    idx = np.zeros((q.shape[0], width), dtype=np.int64)
    for k in range(order):
        idx = idx * base + (q[:, k : k + width] + truncation)
    counts = np.bincount(idx.ravel(), minlength=length).astype(np.float64)
    total = counts.sum()
    return counts / total if total > 0 else counts


def _planes(patch: np.ndarray, cross_channel: bool) -> list[np.ndarray]:
    p = np.asarray(patch, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != 3:
        raise OsbenchInputError("patch must be H x W x 3")
    r, g, b = p[:, :, 0], p[:, :, 1], p[:, :, 2]
    if cross_channel:
        return [r - g, b - g, r - b]
    return [g]


def extract_features(patch: np.ndarray, config: CooccurrenceConfig) -> np.ndarray:
    """Concatenated histograms: plane-major, then filter, then direction."""
    planes = _planes(patch, config.cross_channel)
    h, w = planes[0].shape
    max_k = max(max(k.shape) for k in config.filter_bank)
    if h < max_k + config.order or w < max_k + config.order:
        raise OsbenchInputError("patch too small for the filter bank and order")
    blocks = []
    for plane in planes:
        for kernel in config.filter_bank:
            res = residual(plane, kernel)
            quant = quantize_truncate(res, config.quantization_step, config.truncation)
            for direction in config.directions:
                blocks.append(
                    cooccurrence_histogram(quant, config.order, direction, config.truncation)
                )
    out = np.concatenate(blocks)
    assert out.shape[0] == config.output_dim
    return out
