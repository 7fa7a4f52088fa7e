"""Pixel-size adaptation: per-organ rescaling of slides and masks.

A factor ``f`` shrinks an image: output side = round_half_up(side / f), at
least 1 pixel. HPA slides are brought to HuBMAP resolution by ``n`` and then
rescaled by ``m`` for receptive-field reasons; HuBMAP slides only get ``m``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .config import default_config
from .core import ORGANS, ConfigError, DataError, check_image, check_mask


@dataclass(frozen=True)
class OrganScale:
    hpa_pixel_size: float
    hubmap_pixel_size: float
    n: float
    m: float

    def __post_init__(self):
        for name in ("hpa_pixel_size", "hubmap_pixel_size", "n", "m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")


def scale_config_from_dict(section):
    return {organ: OrganScale(**section[organ]) for organ in section}


def default_scale_config():
    return scale_config_from_dict(default_config()["scale"])


def effective_scale(organ, source, config=None):
    config = default_scale_config() if config is None else config
    if organ not in config:
        raise ConfigError(f"unknown organ {organ!r}")
    entry = config[organ]
    if source == "HPA":
        return entry.n * entry.m
    if source in ("HuBMAP", "GTEX"):
        return entry.m
    raise DataError(f"unknown source {source!r}")


def scaled_size(size, factor):
    if not factor > 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return max(1, math.floor(size / factor + 0.5))


def _bilinear_axis(n_in, n_out):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def _nearest_axis(n_in, n_out):
    src = np.floor((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.intp)
    return np.minimum(src, n_in - 1)


def resize_image(image, factor):
    """Bilinear resize of a byte image by ``factor`` (>1 shrinks)."""
    image = check_image(image)
    h, w = image.shape[:2]
    out_h, out_w = scaled_size(h, factor), scaled_size(w, factor)
    if (out_h, out_w) == (h, w):
        return image.copy()
    y0, y1, ty = _bilinear_axis(h, out_h)
    x0, x1, tx = _bilinear_axis(w, out_w)
    img = image.astype(np.float64)
    if img.ndim == 3:
        ty = ty[:, None, None]
        tx = tx[None, :, None]
    else:
        ty = ty[:, None]
        tx = tx[None, :]
    top = img[y0][:, x0] * (1 - tx) + img[y0][:, x1] * tx
    bottom = img[y1][:, x0] * (1 - tx) + img[y1][:, x1] * tx
    out = top * (1 - ty) + bottom * ty
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def resize_mask(mask, factor):
    mask = check_mask(mask)
    h, w = mask.shape
    out_h, out_w = scaled_size(h, factor), scaled_size(w, factor)
    rows = _nearest_axis(h, out_h)
    cols = _nearest_axis(w, out_w)
    return mask[rows][:, cols].copy()


def resize_mask_to(mask, height, width):
    """Nearest-neighbour resize to an explicit shape (used to return
    predictions to the native frame)."""
    mask = check_mask(mask)
    rows = _nearest_axis(mask.shape[0], height)
    cols = _nearest_axis(mask.shape[1], width)
    return mask[rows][:, cols].copy()


def prepare_sample(image, mask, meta, config=None):
    """Rescale an (image, mask) pair to the training resolution for its organ
    and source. ``mask`` may be None for unlabeled slides."""
    image = check_image(image)
    if image.shape[:2] != (meta.height, meta.width):
        raise DataError(
            f"{meta.id}: image is {image.shape[1]}x{image.shape[0]}, "
            f"metadata says {meta.width}x{meta.height}"
        )
    if mask is not None:
        mask = check_mask(mask)
        if mask.shape != image.shape[:2]:
            raise DataError(f"{meta.id}: mask shape {mask.shape} != image shape {image.shape[:2]}")
    factor = effective_scale(meta.organ, meta.source, config)
    out_image = resize_image(image, factor)
    out_mask = None if mask is None else resize_mask(mask, factor)
    return out_image, out_mask

