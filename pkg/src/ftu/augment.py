"""Paired geometric augmentation, within-organ CutMix, foreground-biased tile
sampling and epoch composition with pseudo-labelled pools."""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .color import color_jitter
from .core import ContractError, DataError, check_image, check_mask

log = logging.getLogger(__name__)

# identity, rot90 (clockwise), rot180, rot270, h-flip, v-flip, transpose, anti-transpose
DIHEDRAL_INVERSE = (0, 3, 2, 1, 4, 5, 6, 7)


def _dihedral(x, element):
    if element == 0:
        return x
    if element == 1:
        return np.rot90(x, -1)
    if element == 2:
        return np.rot90(x, 2)
    if element == 3:
        return np.rot90(x, 1)
    if element == 4:
        return x[:, ::-1]
    if element == 5:
        return x[::-1]
    if element == 6:
        return np.swapaxes(x, 0, 1)
    return np.rot90(x, 2).swapaxes(0, 1)


def apply_dihedral(image, mask, element):
    if element not in range(8):
        raise ValueError(f"dihedral element must be in 0..7, got {element}")
    image = check_image(image)
    mask = check_mask(mask)
    return np.ascontiguousarray(_dihedral(image, element)), np.ascontiguousarray(_dihedral(mask, element))


# --- resampling helpers ----------------------------------------------------


def _reflect(idx, n):
    """Mirror indices into [0, n) without repeating the edge pixel."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def _sample_bilinear(image, ys, xs):
    h, w = image.shape[:2]
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    ty = ys - y0
    tx = xs - x0
    ya, yb = _reflect(y0, h), _reflect(y0 + 1, h)
    xa, xb = _reflect(x0, w), _reflect(x0 + 1, w)
    img = image.astype(np.float64)
    if img.ndim == 3:
        ty = ty[..., None]
        tx = tx[..., None]
    out = (img[ya, xa] * (1 - tx) + img[ya, xb] * tx) * (1 - ty) \
        + (img[yb, xa] * (1 - tx) + img[yb, xb] * tx) * ty
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _sample_nearest(mask, ys, xs):
    h, w = mask.shape
    yi = _reflect(np.floor(ys + 0.5).astype(np.intp), h)
    xi = _reflect(np.floor(xs + 0.5).astype(np.intp), w)
    return mask[yi, xi]


def affine_jitter(image, mask, scale_range=(1, 1), shift_range=(0, 0), rotate_range=(0, 0), rng=None):
    """Random scale / shift / rotation about the image centre as one affine map.

    ``shift_range`` is a fraction of the image side; ``rotate_range`` is in
    degrees, positive meaning clockwise on screen. Out-of-bounds samples are
    mirrored back into the image.
    """
    image = check_image(image)
    mask = check_mask(mask)
    scale = rng.uniform(*scale_range)
    shift_x = rng.uniform(*shift_range)
    shift_y = rng.uniform(*shift_range)
    angle = rng.uniform(*rotate_range)
    if scale == 1 and shift_x == 0 and shift_y == 0 and angle == 0:
        return image.copy(), mask.copy()

    h, w = mask.shape
    cy, cx = (h - 1) / 2, (w - 1) / 2
    theta = math.radians(angle)
    cos, sin = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # invert: output -> source
    dy = yy - cy - shift_y * h
    dx = xx - cx - shift_x * w
    xs = (cos * dx + sin * dy) / scale + cx
    ys = (-sin * dx + cos * dy) / scale + cy
    return _sample_bilinear(image, ys, xs), _sample_nearest(mask, ys, xs)


def elastic_transform(image, mask, alpha, sigma, rng):
    if alpha < 0 or not sigma > 0:
        raise ValueError("elastic_transform needs alpha >= 0 and sigma > 0")
    image = check_image(image)
    mask = check_mask(mask)
    h, w = mask.shape
    dx = gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma, mode="reflect") * alpha
    dy = gaussian_filter(rng.uniform(-1, 1, (h, w)), sigma, mode="reflect") * alpha
    if alpha == 0:
        return image.copy(), mask.copy()
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ys, xs = yy + dy, xx + dx
    return _sample_bilinear(image, ys, xs), _sample_nearest(mask, ys, xs)


# --- CutMix --------------------------------------------------------------


@dataclass
class LabeledTile:
    image: np.ndarray
    mask: np.ndarray
    organ: str
    origin: tuple = ("", 0, 0)

    def __post_init__(self):
        self.image = check_image(self.image)
        self.mask = check_mask(self.mask)
        if self.image.shape[:2] != self.mask.shape:
            raise DataError(f"tile image {self.image.shape[:2]} and mask {self.mask.shape} differ")


def uniform_corner_box(height, width, rng):
    """Box ``(y1, y2, x1, x2)`` (half-open) whose corners are drawn uniformly
    and sorted along each axis."""
    xs = np.sort(rng.integers(0, width + 1, 2))
    ys = np.sort(rng.integers(0, height + 1, 2))
    return int(ys[0]), int(ys[1]), int(xs[0]), int(xs[1])


def fixed_area_box(height, width, rng, area_ratio=0.25):
    """Box of roughly ``area_ratio`` of the tile placed uniformly."""
    side = math.sqrt(area_ratio)
    bh, bw = max(1, round(height * side)), max(1, round(width * side))
    y1 = int(rng.integers(0, height - bh + 1))
    x1 = int(rng.integers(0, width - bw + 1))
    return y1, y1 + bh, x1, x1 + bw


def cutmix(a, b, rng=None, box=None, box_sampler=uniform_corner_box):
    """Paste a rectangle of tile ``b`` (image and mask) into tile ``a``.

    Both tiles must belong to the same organ. ``box`` overrides the random
    box. The result keeps ``a``'s organ and origin.
    """
    if a.organ != b.organ:
        raise ContractError(f"cutmix needs tiles of one organ, got {a.organ} and {b.organ}")
    if a.mask.shape != b.mask.shape or a.image.shape != b.image.shape:
        raise DataError("cutmix tiles must have equal dimensions")
    if box is None:
        box = box_sampler(*a.mask.shape, rng)
    y1, y2, x1, x2 = box
    image = a.image.copy()
    mask = a.mask.copy()
    image[y1:y2, x1:x2] = b.image[y1:y2, x1:x2]
    mask[y1:y2, x1:x2] = b.mask[y1:y2, x1:x2]
    return LabeledTile(image, mask, a.organ, a.origin)


def maybe_cutmix(a, b, probability, rng):
    u = rng.random()
    box = uniform_corner_box(*a.mask.shape, rng)
    if u >= probability:
        if a.organ != b.organ:
            raise ContractError(f"cutmix needs tiles of one organ, got {a.organ} and {b.organ}")
        return a
    return cutmix(a, b, box=box)


# --- tile sampling -----------------------------------------------------


def _pad_to(arr, size):
    h, w = arr.shape[:2]
    ph, pw = max(0, size - h), max(0, size - w)
    if ph == 0 and pw == 0:
        return arr
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, pad, mode="reflect")


def sample_tile(image, mask, size, p_nonempty, rng, organ="kidney", sample_id=""):
    """Crop a ``size`` x ``size`` training tile.

    With probability ``p_nonempty`` (and a non-empty mask) the crop is
    centred on a uniformly chosen foreground pixel, clamped inside the image;
    otherwise the crop position is uniform. Images smaller than ``size`` are
    mirror-padded first.
    """
    image = _pad_to(check_image(image), size)
    mask = _pad_to(check_mask(mask), size)
    h, w = mask.shape
    forced = rng.random() < p_nonempty
    fg = np.flatnonzero(mask)
    if forced and fg.size:
        cy, cx = divmod(int(fg[rng.integers(fg.size)]), w)
        y0 = min(max(cy - size // 2, 0), h - size)
        x0 = min(max(cx - size // 2, 0), w - size)
    else:
        y0 = int(rng.integers(0, h - size + 1))
        x0 = int(rng.integers(0, w - size + 1))
    return LabeledTile(
        image[y0 : y0 + size, x0 : x0 + size].copy(),
        mask[y0 : y0 + size, x0 : x0 + size].copy(),
        organ,
        (sample_id, x0, y0),
    )


# --- dataset composition -------------------------------------------------


@dataclass
class DatasetSpec:
    """Training set description.

    ``labeled`` holds SampleMeta records; ``paths`` optionally maps id ->
    (image path, mask path or RLE). ``pseudo_pools`` maps a pool name (e.g.
    "hpa_extra", "gtex") to the ids of its pseudo-labelled samples.
    """

    labeled: list
    pseudo_pools: dict = field(default_factory=dict)
    exclusions: list = field(default_factory=list)
    pseudo_fraction: float = 0.3
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.pseudo_fraction <= 1:
            raise ValueError("pseudo_fraction must be in [0, 1]")


def filter_samples(spec):
    """Drop excluded ids from the labelled list. Unknown ids only warn."""
    known = {m.id for m in spec.labeled}
    unknown = [i for i in spec.exclusions if i not in known]
    if unknown:
        warnings.warn(f"exclusion ids not in the dataset: {', '.join(unknown)}", stacklevel=2)
    drop = set(spec.exclusions)
    kept = [m for m in spec.labeled if m.id not in drop]
    log.info("filter_samples: %d labelled, %d removed, %d kept",
             len(spec.labeled), len(spec.labeled) - len(kept), len(kept))
    return replace(spec, labeled=kept)


def compose_epoch(spec, epoch_len, rng):
    """Draw ``epoch_len`` sample references as ``(pool, id)`` pairs.

    Each draw picks the pseudo pools (uniformly over their union) with
    probability ``pseudo_fraction``, else a labelled, non-excluded sample.
    """
    pseudo = [(name, i) for name in sorted(spec.pseudo_pools) for i in spec.pseudo_pools[name]]
    drop = set(spec.exclusions)
    labeled = [("labeled", m.id) for m in spec.labeled if m.id not in drop]
    if spec.pseudo_fraction > 0 and not pseudo:
        raise DataError("pseudo_fraction > 0 but the pseudo-label pools are empty")
    if spec.pseudo_fraction < 1 and not labeled:
        raise DataError("no labelled samples left to draw from")
    refs = []
    for _ in range(epoch_len):
        if rng.random() < spec.pseudo_fraction:
            refs.append(pseudo[rng.integers(len(pseudo))])
        else:
            refs.append(labeled[rng.integers(len(labeled))])
    return refs


@dataclass(frozen=True)
class GeometricParams:
    scale_range: tuple = (0.8, 1.2)
    shift_range: tuple = (-0.1, 0.1)
    rotate_range: tuple = (-45.0, 45.0)
    elastic_alpha: float = 30.0
    elastic_sigma: float = 6.0

    @classmethod
    def from_config(cls, section):
        return cls(
            tuple(section["scale_range"]),
            tuple(section["shift_range"]),
            tuple(section["rotate_range"]),
            section["elastic_alpha"],
            section["elastic_sigma"],
        )


def augment_tile(tile, partner, geometric, jitter, cutmix_probability, rng):
    """Full per-tile training augmentation.

    Order: random dihedral element, affine jitter, elastic warp, colour
    jitter, then CutMix with ``partner`` (same organ) last. ``partner`` may
    be None to skip CutMix. Each stage draws from its own split stream.
    """
    element = int(rng.split("dihedral").integers(8))
    image, mask = apply_dihedral(tile.image, tile.mask, element)
    image, mask = affine_jitter(
        image, mask, geometric.scale_range, geometric.shift_range, geometric.rotate_range,
        rng.split("affine"),
    )
    image, mask = elastic_transform(
        image, mask, geometric.elastic_alpha, geometric.elastic_sigma, rng.split("elastic")
    )
    if image.ndim == 2 and jitter.needs_color:
        jitter = replace(jitter, hue_shift_range=(0, 0), saturation_range=(1, 1), value_range=(1, 1))
    image = color_jitter(image, jitter, rng.split("color"))
    out = LabeledTile(image, mask, tile.organ, tile.origin)
    if partner is not None:
        out = maybe_cutmix(out, partner, cutmix_probability, rng.split("cutmix"))
    return out
