"""Thresholding and small-region removal.

A connected region is dropped when its area relative to the whole image is
strictly below the organ's ``min_region_ratio``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .config import default_config
from .core import ConfigError, check_mask, check_probmap

_STRUCTURE = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True)
class OrganPost:
    min_region_ratio: float
    threshold: float = 0.5
    connectivity: int = 8

    def __post_init__(self):
        if self.min_region_ratio < 0:
            raise ConfigError("min_region_ratio must be >= 0")
        if not 0 <= self.threshold <= 1:
            raise ConfigError("threshold must be in [0, 1]")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")


def post_config_from_dict(section):
    return {organ: OrganPost(**section[organ]) for organ in section}


def default_post_config():
    return post_config_from_dict(default_config()["post"])


def binarize(prob, threshold=0.5):
    prob = check_probmap(prob)
    return (prob >= threshold).astype(np.uint8)


def connected_components(mask, connectivity=8):
    """Label foreground regions.

    Returns ``(labels, areas)``: ``labels`` is an int32 raster with ids
    1..k (0 = background) and ``areas[i]`` is the pixel count of region
    ``i + 1``.
    """
    if connectivity not in _STRUCTURE:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = check_mask(mask)
    labels, count = ndimage.label(mask, structure=_STRUCTURE[connectivity])
    areas = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return labels.astype(np.int32), areas


def _organ_entry(organ, config):
    config = default_post_config() if config is None else config
    try:
        return config[organ]
    except KeyError:
        raise ConfigError(f"unknown organ {organ!r}") from None


def remove_small_regions(mask, organ, config=None):
    entry = _organ_entry(organ, config)
    mask = check_mask(mask)
    labels, areas = connected_components(mask, entry.connectivity)
    if areas.size == 0:
        return mask.copy()
    keep = areas / mask.size >= entry.min_region_ratio
    lut = np.concatenate([[0], keep.astype(np.uint8)])
    return lut[labels]


def postprocess(prob, organ, config=None):
    entry = _organ_entry(organ, config)
    return remove_small_regions(binarize(prob, entry.threshold), organ, config)
