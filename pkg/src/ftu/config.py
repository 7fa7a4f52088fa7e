"""Pipeline configuration: a JSON document merged over shipped defaults and
validated against a closed schema (unknown keys are rejected)."""

import copy
import json
from importlib import resources

import jsonschema

from .core import ORGANS, ConfigError

_range = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_pos = {"type": "number", "exclusiveMinimum": 0}


def _per_organ(entry):
    return {
        "type": "object",
        "properties": {organ: entry for organ in ORGANS},
        "required": list(ORGANS),
        "additionalProperties": False,
    }


_scale_entry = {
    "type": "object",
    "properties": {
        "hpa_pixel_size": _pos,
        "hubmap_pixel_size": _pos,
        "n": _pos,
        "m": _pos,
    },
    "required": ["hpa_pixel_size", "hubmap_pixel_size", "n", "m"],
    "additionalProperties": False,
}

_post_entry = {
    "type": "object",
    "properties": {
        "min_region_ratio": {"type": "number", "minimum": 0},
        "threshold": _prob,
        "connectivity": {"enum": [4, 8]},
    },
    "required": ["min_region_ratio", "threshold", "connectivity"],
    "additionalProperties": False,
}

_member = {
    "type": "object",
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "reference": {"enum": ["constant", "channel_identity", "luminance_sigmoid"]},
        "params": {"type": "object"},
        "command": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "weight": {"type": "number", "minimum": 0},
    },
    "required": ["name"],
    "oneOf": [{"required": ["reference"]}, {"required": ["command"]}],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "scale": _per_organ(_scale_entry),
        "post": _per_organ(_post_entry),
        "color": {
            "type": "object",
            "properties": {
                "reference_dir": {"type": ["string", "null"]},
                "match_probability": _prob,
                "hue_shift_range": _range,
                "saturation_range": _range,
                "value_range": _range,
                "contrast_range": _range,
                "gamma_range": _range,
                "apply_probability": _prob,
            },
            "additionalProperties": False,
        },
        "augment": {
            "type": "object",
            "properties": {
                "tile_size": {"type": "integer", "minimum": 1},
                "p_nonempty": _prob,
                "cutmix_probability": _prob,
                "pseudo_fraction": _prob,
                "exclusions": {"type": "array", "items": {"type": "string"}},
                "scale_range": _range,
                "shift_range": _range,
                "rotate_range": _range,
                "elastic_alpha": {"type": "number", "minimum": 0},
                "elastic_sigma": _pos,
            },
            "additionalProperties": False,
        },
        "inference": {
            "type": "object",
            "properties": {
                "window": {"type": ["integer", "null"], "minimum": 1},
                "overlap": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "tta": {"type": "boolean"},
                "members": {"type": "array", "items": _member},
            },
            "additionalProperties": False,
        },
        "eval": {
            "type": "object",
            "properties": {
                "folds": {"type": "integer", "minimum": 2},
                "hubmap_proportion": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "io": {
            "type": "object",
            "properties": {
                "manifest": {"type": "string", "minLength": 1},
                "write_probmaps": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["seed", "scale", "post", "color", "augment", "inference", "eval", "io"],
    "additionalProperties": False,
}


def default_config():
    text = resources.files("ftu").joinpath("default_config.json").read_text("utf-8")
    return json.loads(text)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return cfg


def load_config(path=None, overrides=None):
    """Read a JSON config, lay it over the shipped defaults and validate.

    ``overrides`` is an already-parsed dict applied last (used by the CLI
    for ``--seed``).
    """
    cfg = default_config()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate_config(cfg)
