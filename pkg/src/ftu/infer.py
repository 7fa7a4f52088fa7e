"""Sliding-window stitching, flip TTA, probability ensembling, checkpoint
averaging and pseudo-labelling."""

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DataError, FormatError, PredictorError, check_image
from .post import postprocess


@dataclass(frozen=True)
class TileGrid:
    """Window origins over an image.

    ``xs`` and ``ys`` are per-axis window origins; windows are visited
    row-major (y outer, x inner). When the image is smaller than the window
    along an axis it is mirror-padded up to the window size first.
    """

    width: int
    height: int
    window_w: int
    window_h: int
    stride_w: int
    stride_h: int
    xs: tuple
    ys: tuple

    @property
    def offsets(self):
        return [(x, y) for y in self.ys for x in self.xs]

    @property
    def padded_size(self):
        return max(self.height, self.window_h), max(self.width, self.window_w)


def axis_offsets(size, window, stride):
    if window >= size:
        return (0,)
    last = size - window
    offsets = list(range(0, last, stride))
    offsets.append(last)
    return tuple(offsets)


def plan_tiles(width, height, window, overlap):
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    if window < 1:
        raise ValueError("window must be positive")
    stride = max(1, math.floor(window * (1 - overlap) + 0.5))
    return TileGrid(
        width, height, window, window, stride, stride,
        axis_offsets(width, window, stride), axis_offsets(height, window, stride),
    )


def full_image_grid(width, height):
    """Single window covering the whole image."""
    return TileGrid(width, height, width, height, width, height, (0,), (0,))


def cover_counts(grid):
    """Number of windows covering each pixel of the (unpadded) image."""
    ph, pw = grid.padded_size
    cy = np.zeros(ph, dtype=np.int64)
    cx = np.zeros(pw, dtype=np.int64)
    for y in grid.ys:
        cy[y : y + grid.window_h] += 1
    for x in grid.xs:
        cx[x : x + grid.window_w] += 1
    return np.outer(cy, cx)[: grid.height, : grid.width]


def _mirror_pad(image, height, width):
    h, w = image.shape[:2]
    if (h, w) == (height, width):
        return image
    pad = [(0, height - h), (0, width - w)] + [(0, 0)] * (image.ndim - 2)
    return np.pad(image, pad, mode="reflect")


def predict_sliding(image, predictor, grid, threads=1):
    """Stitch window predictions into one map.

    Each pixel gets the unweighted mean of every window covering it.
    Predictions may run on ``threads`` workers, but the reduction always runs
    in grid order in float64, so the result does not depend on scheduling.
    """
    image = check_image(image)
    if image.shape[:2] != (grid.height, grid.width):
        raise DataError(f"grid is for {grid.width}x{grid.height}, image is {image.shape[1]}x{image.shape[0]}")
    ph, pw = grid.padded_size
    padded = _mirror_pad(image, ph, pw)
    offsets = grid.offsets

    def run(offset):
        x, y = offset
        tile = np.ascontiguousarray(padded[y : y + grid.window_h, x : x + grid.window_w])
        out = np.asarray(predictor(tile))
        if out.shape != (grid.window_h, grid.window_w):
            raise PredictorError(
                f"predictor returned {out.shape} for a {grid.window_h}x{grid.window_w} window"
            )
        return out

    if threads > 1 and len(offsets) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            preds = list(pool.map(run, offsets))
    else:
        preds = [run(o) for o in offsets]

    acc = np.zeros((ph, pw), dtype=np.float64)
    cnt = np.zeros((ph, pw), dtype=np.int64)
    for (x, y), pred in zip(offsets, preds):
        acc[y : y + grid.window_h, x : x + grid.window_w] += pred
        cnt[y : y + grid.window_h, x : x + grid.window_w] += 1
    out = acc[: grid.height, : grid.width] / cnt[: grid.height, : grid.width]
    return np.clip(out, 0, 1).astype(np.float32)


# identity, h-flip, v-flip, hv-flip; every element is its own inverse
FLIPS = (
    lambda a: a,
    lambda a: a[:, ::-1],
    lambda a: a[::-1],
    lambda a: a[::-1, ::-1],
)


def tta_predict(image, predict_fn):
    """Average ``predict_fn`` over the four axis flips of ``image``,
    un-flipping each prediction before the mean."""
    acc = None
    for flip in FLIPS:
        pred = np.asarray(predict_fn(np.ascontiguousarray(flip(image))), dtype=np.float64)
        pred = flip(pred)
        acc = pred.copy() if acc is None else acc + pred
    return (acc / len(FLIPS)).astype(np.float32)


def ensemble(maps, weights=None):
    if not maps:
        raise ValueError("ensemble needs at least one map")
    shape = np.shape(maps[0])
    if any(np.shape(m) != shape for m in maps):
        raise DataError("ensemble maps differ in shape")
    if weights is None:
        weights = [1.0] * len(maps)
    if len(weights) != len(maps):
        raise ValueError("one weight per map is required")
    if any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    acc = np.zeros(shape, dtype=np.float64)
    for m, w in zip(maps, weights):
        acc += w * np.asarray(m, dtype=np.float64)
    return np.clip(acc / sum(weights), 0, 1).astype(np.float32)


@dataclass
class Member:
    """One ensemble member: a predictor plus how to run it."""

    name: str
    predictor: object
    weight: float = 1.0


def member_prediction(image, member, window=1024, overlap=0.75, tta=True, threads=1):
    h, w = image.shape[:2]
    grid = full_image_grid(w, h) if window is None else plan_tiles(w, h, window, overlap)

    def predict_fn(img):
        return predict_sliding(img, member.predictor, grid, threads)

    try:
        return tta_predict(image, predict_fn) if tta else predict_fn(image)
    except PredictorError as exc:
        raise PredictorError(f"member {member.name}: {exc}") from None


def predict_image(image, members, window=1024, overlap=0.75, tta=True, threads=1):
    """Sliding window (+ TTA) per member, then the weighted member mean."""
    image = check_image(image)
    maps = [member_prediction(image, m, window, overlap, tta, threads) for m in members]
    return ensemble(maps, [m.weight for m in members])


# --- checkpoint averaging ----------------------------------------------


def average_parameters(checkpoints):
    """Elementwise mean of parameter sets (name -> float32 array)."""
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    first = checkpoints[0]
    for i, ckpt in enumerate(checkpoints[1:], start=1):
        if set(ckpt) != set(first):
            raise DataError(f"checkpoint {i} has different parameter names")
        for name in first:
            if np.shape(ckpt[name]) != np.shape(first[name]):
                raise DataError(f"checkpoint {i}: {name} has shape {np.shape(ckpt[name])}")
    out = {}
    for name in first:
        acc = np.zeros(np.shape(first[name]), dtype=np.float64)
        for ckpt in checkpoints:
            acc += np.asarray(ckpt[name], dtype=np.float64)
        out[name] = (acc / len(checkpoints)).astype(np.float32)
    return out


def parameter_set_to_bytes(params):
    parts = [b"PSET", struct.pack("<I", len(params))]
    for name, values in params.items():
        raw = name.encode("utf-8")
        flat = np.asarray(values, dtype="<f4").ravel()
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<I", flat.size), flat.tobytes()]
    return b"".join(parts)


def parameter_set_from_bytes(data):
    if data[:4] != b"PSET":
        raise FormatError(f"bad parameter-set magic {data[:4]!r}")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("parameter set truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (alen,) = struct.unpack("<I", take(4))
        params[name] = np.frombuffer(take(4 * alen), dtype="<f4").astype(np.float32)
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after parameter set")
    return params


def write_parameter_set(params, path):
    Path(path).write_bytes(parameter_set_to_bytes(params))


def read_parameter_set(path):
    return parameter_set_from_bytes(Path(path).read_bytes())


# --- pseudo-labelling ----------------------------------------------------


@dataclass
class PseudoLabel:
    id: str
    organ: str
    mask: np.ndarray
    round: int

    @property
    def empty(self):
        return not self.mask.any()


def pseudo_label(pool, predict_fn, post_config=None, round_index=1):
    """Label every ``(image, meta)`` in ``pool`` with
    ``postprocess(predict_fn(image))``. Errors are re-raised with the id."""
    labels = []
    for image, meta in pool:
        try:
            prob = predict_fn(image)
        except Exception as exc:
            raise PredictorError(f"{meta.id}: {exc}") from exc
        labels.append(PseudoLabel(meta.id, meta.organ, postprocess(prob, meta.organ, post_config), round_index))
    return labels
