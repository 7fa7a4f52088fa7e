# Tile sampling, geometric/colour augmentation and same-organ CutMix.
import numpy as np

from ftu import augment, core
from ftu.color import ColorJitterParams

rng = np.random.default_rng(2)
image = rng.integers(0, 256, (128, 128, 3), dtype=np.uint8)
mask = np.zeros((128, 128), np.uint8)
mask[20:40, 90:110] = 1

srng = core.SeededRng(7)
tiles = [augment.sample_tile(image, mask, 32, 0.5, srng.split(f"t{i}"), "kidney", "img0") for i in range(1000)]
print("tiles containing foreground: %.3f" % np.mean([t.mask.any() for t in tiles]))

# the eight dihedral elements and their inverses
t = tiles[0]
for e in range(8):
    img, m = augment.apply_dihedral(t.image, t.mask, e)
    back, _ = augment.apply_dihedral(img, m, augment.DIHEDRAL_INVERSE[e])
    assert np.array_equal(back, t.image)
print("dihedral inverses ok")

a, b = tiles[1], tiles[2]
mixed = augment.cutmix(a, b, box=(8, 24, 8, 24))
print("cutmix pixels from b:", int((mixed.image == b.image).all(axis=2).sum()))
try:
    augment.cutmix(a, augment.LabeledTile(b.image, b.mask, "lung"), core.SeededRng(0))
except core.ContractError as exc:
    print("rejected:", exc)

out = augment.augment_tile(a, b, augment.GeometricParams(), ColorJitterParams(), 0.5, core.SeededRng(11))
print("augmented tile", out.image.shape, "mask values", np.unique(out.mask))

# epoch composition: 30% of draws come from the pseudo-labelled pools
labeled = [core.SampleMeta(f"l{i}", "HPA", "spleen", 0.4, 64, 64) for i in range(50)]
spec = augment.DatasetSpec(labeled, {"gtex": ["g1", "g2"], "hpa_extra": ["h1"]}, ["l0"], 0.3)
refs = augment.compose_epoch(augment.filter_samples(spec), 5000, core.SeededRng(0))
print("pseudo share: %.3f" % np.mean([pool != "labeled" for pool, _ in refs]))
