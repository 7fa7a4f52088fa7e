"""Colour-space adaptation: per-channel histogram matching against reference
slides, and HSV / contrast / gamma jitter."""

from dataclasses import dataclass

import numpy as np

from .core import DataError, channels, check_image


def _channel(image, channel):
    n = channels(image)
    if not 0 <= channel < n:
        raise DataError(f"channel {channel} out of range for a {n}-channel image")
    return image if image.ndim == 2 else image[:, :, channel]


def _cumulative_counts(values):
    return np.cumsum(np.bincount(values.ravel(), minlength=256)[:256])


def channel_cdf(image, channel=0):
    """cdf[v] = fraction of pixels whose value is <= v."""
    image = check_image(image)
    values = _channel(image, channel)
    return _cumulative_counts(values) / values.size


def matching_lut(source_values, reference_values):
    """256-entry lookup table sending each source level ``v`` to the smallest
    reference level ``r`` with ref_cdf[r] >= src_cdf[v].

    Comparison is done on integer counts cross-multiplied by the pixel totals,
    so equal fractions with different denominators compare exactly.
    """
    src_cum = _cumulative_counts(source_values).astype(np.int64)
    ref_cum = _cumulative_counts(reference_values).astype(np.int64)
    n_src, n_ref = int(src_cum[-1]), int(ref_cum[-1])
    lut = np.searchsorted(ref_cum * n_src, src_cum * n_ref, side="left")
    return np.minimum(lut, 255).astype(np.uint8)


def histogram_match(source, reference):
    source = check_image(source)
    reference = check_image(reference)
    if channels(source) != channels(reference):
        raise DataError(
            f"channel mismatch: source has {channels(source)}, reference has {channels(reference)}"
        )
    if source.ndim == 2:
        return matching_lut(source, reference)[source]
    out = np.empty_like(source)
    for c in range(source.shape[2]):
        out[:, :, c] = matching_lut(source[:, :, c], reference[:, :, c])[source[:, :, c]]
    return out


def match_to_pool(image, references, probability, rng):
    """With ``probability``, match ``image`` to one reference drawn uniformly
    from ``references`` (a sequence of images or zero-arg loaders).

    Returns ``(image, index)``; ``index`` is None when no matching happened.
    Always consumes two draws so downstream streams stay aligned.
    """
    u = rng.random()
    pick = int(rng.integers(len(references))) if references else None
    if pick is None or u >= probability:
        return image, None
    ref = references[pick]
    ref = ref() if callable(ref) else ref
    return histogram_match(image, ref), pick


# --- colour jitter ---------------------------------------------------------


@dataclass(frozen=True)
class ColorJitterParams:
    hue_shift_range: tuple = (-20.0, 20.0)
    saturation_range: tuple = (0.7, 1.3)
    value_range: tuple = (0.7, 1.3)
    contrast_range: tuple = (0.7, 1.3)
    gamma_range: tuple = (0.7, 1.5)
    apply_probability: float = 0.5

    def __post_init__(self):
        for name, identity in (
            ("hue_shift_range", 0.0),
            ("saturation_range", 1.0),
            ("value_range", 1.0),
            ("contrast_range", 1.0),
            ("gamma_range", 1.0),
        ):
            lo, hi = getattr(self, name)
            if not lo <= identity <= hi:
                raise ValueError(f"{name} {lo, hi} must contain the identity {identity}")
        if not 0 <= self.apply_probability <= 1:
            raise ValueError("apply_probability must be in [0, 1]")
        if self.gamma_range[0] <= 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def identity(cls):
        return cls((0, 0), (1, 1), (1, 1), (1, 1), (1, 1), 1.0)

    @classmethod
    def from_config(cls, section):
        keys = ("hue_shift_range", "saturation_range", "value_range", "contrast_range", "gamma_range")
        return cls(**{k: tuple(section[k]) for k in keys}, apply_probability=section["apply_probability"])

    @property
    def needs_color(self):
        return tuple(self.hue_shift_range) != (0, 0) or tuple(self.saturation_range) != (1, 1) \
            or tuple(self.value_range) != (1, 1)


def rgb_to_hsv(rgb):
    """``rgb`` floats in [0, 1] -> (hue degrees [0, 360), saturation, value)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1), 0.0)
    safe_c = np.where(c > 0, c, 1)
    h = np.select(
        [c == 0, v == r, v == g],
        [0.0, ((g - b) / safe_c) % 6, (b - r) / safe_c + 2],
        (r - g) / safe_c + 4,
    )
    return np.stack([h * 60.0, s, v], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0] % 360.0, hsv[..., 1], hsv[..., 2]
    c = v * s
    hp = h / 60.0
    x = c * (1 - np.abs(hp % 2 - 1))
    zero = np.zeros_like(h)
    sector = np.minimum(np.floor(hp), 5).astype(int)
    r1 = np.choose(sector, [c, x, zero, zero, x, c])
    g1 = np.choose(sector, [x, c, c, x, zero, zero])
    b1 = np.choose(sector, [zero, zero, x, c, c, x])
    m = v - c
    return np.stack([r1 + m, g1 + m, b1 + m], axis=-1)


def _to_byte(values):
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def adjust_hsv(image, hue_shift, saturation, value):
    hsv = rgb_to_hsv(image.astype(np.float64) / 255.0)
    hsv[..., 0] = (hsv[..., 0] + hue_shift) % 360.0
    hsv[..., 1] = np.clip(hsv[..., 1] * saturation, 0, 1)
    hsv[..., 2] = np.clip(hsv[..., 2] * value, 0, 1)
    return _to_byte(hsv_to_rgb(hsv) * 255.0)


def adjust_contrast(image, factor):
    img = image.astype(np.float64)
    mean = img.mean()
    return _to_byte(mean + factor * (img - mean))


def adjust_gamma(image, gamma):
    return _to_byte(255.0 * (image.astype(np.float64) / 255.0) ** gamma)


def color_jitter(image, params, rng):
    """Randomly perturb hue/saturation/value, contrast and gamma.

    Every call consumes exactly eight draws from ``rng`` whatever gets
    applied, so results depend only on the stream state.
    """
    image = check_image(image)
    if image.ndim == 2 and params.needs_color:
        raise DataError("hue/saturation/value jitter needs a 3-channel image")
    u_hsv = rng.random()
    hue = rng.uniform(*params.hue_shift_range)
    sat = rng.uniform(*params.saturation_range)
    val = rng.uniform(*params.value_range)
    u_con = rng.random()
    con = rng.uniform(*params.contrast_range)
    u_gam = rng.random()
    gam = rng.uniform(*params.gamma_range)

    p = params.apply_probability
    out = image
    if u_hsv < p and (hue, sat, val) != (0.0, 1.0, 1.0):
        out = adjust_hsv(out, hue, sat, val)
    if u_con < p and con != 1.0:
        out = adjust_contrast(out, con)
    if u_gam < p and gam != 1.0:
        out = adjust_gamma(out, gam)
    return out.copy() if out is image else out
