# Pixel-size adaptation: every organ gets its own resize factor per source.
import numpy as np

from ftu import core, scale

cfg = scale.default_scale_config()
for organ in core.ORGANS:
    print(f"{organ:16s} HPA {scale.effective_scale(organ, 'HPA', cfg):7.4f}   "
          f"HuBMAP {scale.effective_scale(organ, 'HuBMAP', cfg):5.2f}")

f = scale.effective_scale("prostate", "HPA")
print("prostate HPA 2000x1000 ->", scale.scaled_size(2000, f), "x", scale.scaled_size(1000, f))

# images are resampled bilinearly, masks by nearest neighbour
rng = np.random.default_rng(0)
image = rng.integers(0, 256, (120, 160, 3), dtype=np.uint8)
mask = np.zeros((120, 160), np.uint8)
mask[30:90, 40:120] = 1
meta = core.SampleMeta("demo", "HPA", "kidney", 0.4, 160, 120)
small_img, small_mask = scale.prepare_sample(image, mask, meta)
print("kidney HPA:", image.shape, "->", small_img.shape, "mask values", np.unique(small_mask))
print("foreground share before/after: %.3f / %.3f" % (mask.mean(), small_mask.mean()))
