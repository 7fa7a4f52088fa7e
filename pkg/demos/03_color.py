# Stain normalisation by histogram matching, plus random colour jitter.
import numpy as np

from ftu import color, core

rng = np.random.default_rng(1)
source = rng.integers(100, 200, (32, 32, 3), dtype=np.uint8)
reference = np.clip(rng.normal(60, 20, (40, 40, 3)), 0, 255).astype(np.uint8)

matched = color.histogram_match(source, reference)
print("source mean   ", source.reshape(-1, 3).mean(0).round(1))
print("reference mean", reference.reshape(-1, 3).mean(0).round(1))
print("matched mean  ", matched.reshape(-1, 3).mean(0).round(1))
print("idempotent:", np.array_equal(color.histogram_match(matched, reference), matched))

# pick a reference from a pool with probability 0.5
pool = [lambda: reference, lambda: 255 - reference]
picks = [color.match_to_pool(source, pool, 0.5, core.SeededRng(s))[1] for s in range(10)]
print("pool picks:", picks)

jitter = color.ColorJitterParams.from_config({
    "hue_shift_range": [-20, 20], "saturation_range": [0.7, 1.3], "value_range": [0.7, 1.3],
    "contrast_range": [0.7, 1.3], "gamma_range": [0.7, 1.5], "apply_probability": 1.0,
})
out = color.color_jitter(source, jitter, core.SeededRng(3))
print("jittered mean ", out.reshape(-1, 3).mean(0).round(1))
