"""Predictors: anything that maps an RGB (or gray) uint8 tile to a float32
probability map of the same height and width, deterministically per tile.

The reference predictors here are simple closed-form stand-ins for trained
networks; they make the stitching, TTA and ensembling paths testable.
"""

import numpy as np

from .core import ConfigError

_255 = np.float32(255)


def tile_to_float(tile):
    """uint8 tile -> float32 in [0, 1], shape (H, W, C)."""
    tile = np.asarray(tile)
    if tile.ndim == 2:
        tile = tile[:, :, None]
    return tile.astype(np.float32) / _255


class ConstantPredictor:
    def __init__(self, value):
        if not 0 <= value <= 1:
            raise ValueError("constant prediction must be in [0, 1]")
        self.value = np.float32(value)

    def __call__(self, tile):
        return np.full(np.shape(tile)[:2], self.value, dtype=np.float32)

    def __repr__(self):
        return f"ConstantPredictor({float(self.value)})"


def identity_channel(x):
    """Pick the green channel of a float (H, W, C) tile, or the only one."""
    return x[:, :, 1] if x.shape[2] >= 3 else x[:, :, 0]


class ChannelIdentityPredictor:
    """Returns the normalised green channel."""

    def __call__(self, tile):
        return np.ascontiguousarray(identity_channel(tile_to_float(tile)))


class LuminanceSigmoidPredictor:
    """Dark tissue -> high probability: sigmoid(gain * (center - luminance))."""

    def __init__(self, gain=10.0, center=0.5):
        self.gain = float(gain)
        self.center = float(center)

    def __call__(self, tile):
        x = tile_to_float(tile).astype(np.float64)
        if x.shape[2] >= 3:
            lum = 0.299 * x[:, :, 0] + 0.587 * x[:, :, 1] + 0.114 * x[:, :, 2]
        else:
            lum = x[:, :, 0]
        return (1.0 / (1.0 + np.exp(-self.gain * (self.center - lum)))).astype(np.float32)


class CornerDeltaPredictor:
    """1 at pixel (0, 0), 0 elsewhere, whatever the input."""

    def __call__(self, tile):
        out = np.zeros(np.shape(tile)[:2], dtype=np.float32)
        out[0, 0] = 1
        return out


REFERENCE_PREDICTORS = {
    "constant": ConstantPredictor,
    "channel_identity": ChannelIdentityPredictor,
    "luminance_sigmoid": LuminanceSigmoidPredictor,
}


def build_reference(name, params=None):
    try:
        cls = REFERENCE_PREDICTORS[name]
    except KeyError:
        raise ConfigError(f"unknown reference predictor {name!r}") from None
    try:
        return cls(**(params or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None
