"""Skin masks: loading external masks, a chrominance fallback detector, coverage filtering.

Images are handled as ``(height, width, 3)`` uint8 arrays and masks as
``(height, width)`` boolean arrays wrapped in :class:`SkinMask`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

DEFAULT_COVERAGE_MIN = 0.10
DEFAULT_CB_RANGE = (77.0, 127.0)
DEFAULT_CR_RANGE = (133.0, 173.0)
MASK_SUFFIX = ".mask.png"


class MaskError(ValueError):
    pass


class MaskFormatError(MaskError):
    pass


class MaskDimensionError(MaskError):
    pass


@dataclass(frozen=True, eq=False)
class SkinMask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or 0 in bits.shape:
            raise MaskError(f"mask must be a non-empty 2-D array, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def coverage(self) -> float:
        return self.count / self.bits.size

    def __eq__(self, other):
        if not isinstance(other, SkinMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


@dataclass(frozen=True)
class CoverageVerdict:
    coverage: float
    retained: bool


def coverage_verdict(mask: SkinMask, threshold: float = DEFAULT_COVERAGE_MIN) -> CoverageVerdict:
    """Images whose skin covers less than ``threshold`` of the frame are dropped.

    Coverage exactly at the threshold is retained.
    """
    coverage = mask.coverage
    return CoverageVerdict(coverage=coverage, retained=coverage >= threshold)


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _decode_rle(path: Path) -> np.ndarray:
    # COCO-style uncompressed RLE: column-major run lengths, starting with a zero run.
    try:
        doc = json.loads(path.read_text())
        height, width = (int(v) for v in doc["size"])
        counts = [int(c) for c in doc["counts"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise MaskFormatError(f"{path}: invalid run-length mask ({exc})") from exc
    if sum(counts) != height * width or any(c < 0 for c in counts):
        raise MaskFormatError(f"{path}: run lengths do not sum to {height}x{width}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((width, height)).T


def _decode_raster(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if len(im.getbands()) != 1:
                raise MaskFormatError(f"{path}: expected a single-channel mask, got mode {im.mode}")
            return np.asarray(im) != 0
    except MaskFormatError:
        raise
    except (OSError, ValueError) as exc:
        raise MaskFormatError(f"{path}: cannot decode mask ({exc})") from exc


def load_mask(
    path: str | Path,
    expected_dims: tuple[int, int] | None = None,
    resample: bool = False,
) -> SkinMask:
    """Read a mask file where any nonzero value marks skin.

    Args:
        path: Single-channel raster (PNG, PGM, ...) or a ``.rle``/``.json``
            run-length file.
        expected_dims: ``(width, height)`` of the image the mask applies to.
        resample: When the mask size differs from ``expected_dims``, resample
            with nearest neighbour instead of raising.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mask file not found: {path}")
    if path.suffix.lower() in (".rle", ".json"):
        bits = _decode_rle(path)
    else:
        bits = _decode_raster(path)
    mask = SkinMask(bits)
    if expected_dims is not None and (mask.width, mask.height) != tuple(expected_dims):
        if not resample:
            raise MaskDimensionError(
                f"{path}: mask is {mask.width}x{mask.height}, image is "
                f"{expected_dims[0]}x{expected_dims[1]}"
            )
        mask = resample_mask_nearest(mask, expected_dims)
    return mask


def save_mask(mask: SkinMask, path: str | Path) -> None:
    Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path)


def sidecar_mask_path(image_path: str | Path) -> Path:
    """``photo.jpg`` -> ``photo.mask.png`` in the same directory."""
    p = Path(image_path)
    return p.with_name(p.stem + MASK_SUFFIX)


def resample_mask_nearest(mask: SkinMask, target: tuple[int, int]) -> SkinMask:
    width, height = target
    if width < 1 or height < 1:
        raise ValueError(f"target dimensions must be >= 1, got {width}x{height}")
    if (width, height) == (mask.width, mask.height):
        return SkinMask(mask.bits.copy())
    rows = (np.arange(height) * mask.height) // height
    cols = (np.arange(width) * mask.width) // width
    return SkinMask(mask.bits[np.ix_(rows, cols)])


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    """Full-range BT.601 (JPEG) YCbCr, float64."""
    rgb = np.asarray(img, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr], axis=-1)


def heuristic_skin_detect(
    img: np.ndarray,
    cb_range: tuple[float, float] = DEFAULT_CB_RANGE,
    cr_range: tuple[float, float] = DEFAULT_CR_RANGE,
) -> SkinMask:
    """Lower-fidelity fallback when no segmenter output is available.

    Pixels are labelled skin when their chrominance falls inside the (inclusive)
    Cb/Cr box, then a single 3x3 majority vote removes speckle. Borders are
    edge-replicated for the vote.
    """
    ycc = rgb_to_ycbcr(img)
    cb, cr = ycc[..., 1], ycc[..., 2]
    raw = (cb >= cb_range[0]) & (cb <= cb_range[1]) & (cr >= cr_range[0]) & (cr <= cr_range[1])
    votes = ndimage.convolve(raw.astype(np.uint8), np.ones((3, 3), dtype=np.uint8), mode="nearest")
    return SkinMask(votes >= 5)
