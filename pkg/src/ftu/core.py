"""Shared raster types, deterministic randomness, RLE codec and binary file formats.

Rasters are plain numpy arrays:

* byte image: ``uint8`` of shape ``(H, W)`` or ``(H, W, 3)``
* probability map: ``float32`` of shape ``(H, W)`` with values in ``[0, 1]``
* binary mask: ``uint8`` of shape ``(H, W)`` with values in ``{0, 1}``
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

SOURCES = ("HPA", "HuBMAP", "GTEX")
ORGANS = ("kidney", "large_intestine", "lung", "prostate", "spleen")

PROBMAP_MAGIC = b"PMAP"


class FtuError(Exception):
    """Base class for all package errors."""


class FormatError(FtuError, ValueError):
    """Malformed file, frame or encoded payload."""


class ConfigError(FtuError, ValueError):
    pass


class DataError(FtuError, ValueError):
    """Inputs are inconsistent (dimension mismatch, unknown id, ...)."""


class ContractError(FtuError, ValueError):
    pass


class PredictorError(FtuError, RuntimeError):
    pass


def check_image(image):
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise DataError(f"expected uint8 image, got {image.dtype}")
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim not in (2, 3) or (image.ndim == 3 and image.shape[2] != 3):
        raise DataError(f"expected (H, W) or (H, W, 3) image, got shape {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise DataError("image must be at least 1x1")
    return image


def check_mask(mask):
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DataError(f"expected 2-D mask, got shape {mask.shape}")
    if mask.dtype != np.uint8 or mask.max(initial=0) > 1:
        if not np.isin(mask, (0, 1)).all():
            raise DataError("mask values must be 0 or 1")
        mask = mask.astype(np.uint8)
    return mask


def check_probmap(prob):
    prob = np.asarray(prob)
    if prob.ndim != 2:
        raise DataError(f"expected 2-D probability map, got shape {prob.shape}")
    prob = prob.astype(np.float32, copy=False)
    if not np.all((prob >= 0) & (prob <= 1)):
        raise DataError("probability values must lie in [0, 1]")
    return prob


def channels(image):
    return 1 if image.ndim == 2 else image.shape[2]


@dataclass(frozen=True)
class SampleMeta:
    id: str
    source: str
    organ: str
    pixel_size: float
    width: int
    height: int
    thickness: float | None = None
    age: float | None = None
    sex: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DataError(f"{self.id}: unknown source {self.source!r}")
        if self.organ not in ORGANS:
            raise DataError(f"{self.id}: unknown organ {self.organ!r}")
        if not self.pixel_size > 0:
            raise DataError(f"{self.id}: pixel_size must be positive")
        if self.width < 1 or self.height < 1:
            raise DataError(f"{self.id}: dimensions must be positive")


def _label_key(label):
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SeededRng:
    """Splittable deterministic random stream.

    Built on numpy's PCG64, which produces identical sequences on every
    platform. ``split(label)`` depends only on the seed and the chain of
    labels, never on how many draws the parent has made.
    """

    def __init__(self, seed, _path=()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._path = tuple(_path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def split(self, label):
        return SeededRng(self.seed, self._path + (_label_key(label),))

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def permutation(self, x):
        return self.generator.permutation(x)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, path={self._path})"


# --- run-length encoding -------------------------------------------------


def rle_encode(mask):
    """Encode a binary mask as maximal runs ``[(start, length), ...]``.

    Pixels are numbered column-major, 1-indexed: flat = col * height + row + 1.
    """
    mask = check_mask(mask)
    pixels = mask.T.ravel()
    padded = np.concatenate([[0], pixels, [0]])
    edges = np.flatnonzero(padded[1:] != padded[:-1]) + 1
    starts, ends = edges[::2], edges[1::2]
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]


def rle_decode(runs, width, height):
    total = width * height
    flat = np.zeros(total, dtype=np.uint8)
    for i, (start, length) in enumerate(runs):
        if start < 1 or length < 1 or start + length - 1 > total:
            raise FormatError(
                f"run {i} ({start}, {length}) does not fit a {width}x{height} mask"
            )
        flat[start - 1 : start - 1 + length] = 1
    return flat.reshape(width, height).T.copy()


def rle_to_string(runs):
    return " ".join(f"{s} {n}" for s, n in runs)


def rle_from_string(text):
    tokens = text.split()
    if len(tokens) % 2:
        raise FormatError("RLE string has an odd number of fields")
    try:
        values = [int(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"RLE string contains a non-integer: {exc}") from None
    return list(zip(values[::2], values[1::2]))


def format_rle_line(sample_id, runs):
    return f"{sample_id},{rle_to_string(runs)}"


def parse_rle_line(line):
    sample_id, sep, rest = line.rstrip("\r\n").partition(",")
    if not sep:
        raise FormatError(f"RLE line has no comma: {line!r}")
    return sample_id, rle_from_string(rest)


# --- probability map container ------------------------------------------


def probmap_to_bytes(prob):
    prob = check_probmap(prob)
    h, w = prob.shape
    return PROBMAP_MAGIC + struct.pack("<II", w, h) + prob.astype("<f4").tobytes()


def probmap_from_bytes(data):
    if len(data) < 12:
        raise FormatError("probability map truncated before header end")
    if data[:4] != PROBMAP_MAGIC:
        raise FormatError(f"bad probability map magic {data[:4]!r}")
    w, h = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * w * h
    if len(data) != expected:
        raise FormatError(f"probability map payload is {len(data)} bytes, expected {expected}")
    prob = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(np.float32)
    if not np.all((prob >= 0) & (prob <= 1)):
        raise FormatError("probability map contains values outside [0, 1]")
    return prob


def write_probmap(prob, destination):
    payload = probmap_to_bytes(prob)
    if isinstance(destination, (str, Path)):
        Path(destination).write_bytes(payload)
    else:
        destination.write(payload)


def read_probmap(source):
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = source.read()
    return probmap_from_bytes(data)


# --- PNG interchange ----------------------------------------------------


def read_image(path):
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return check_image(np.asarray(im, dtype=np.uint8).copy())


def write_image(image, path):
    Image.fromarray(check_image(image)).save(path, format="PNG")


def read_mask_png(path):
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 127).astype(np.uint8)


def write_mask_png(mask, path):
    mask = check_mask(mask)
    Image.fromarray((mask * 255).astype(np.uint8)).save(path, format="PNG")


def mask_png_bytes(mask):
    buf = io.BytesIO()
    write_mask_png(mask, buf)
    return buf.getvalue()
