import csv
from pathlib import Path

import numpy as np
import pytest

from ftu import core

ORGAN_COUNTS_352 = {
    # mirrors the class imbalance of the training set (HPA)
    "kidney": 99,
    "prostate": 93,
    "large_intestine": 58,
    "spleen": 53,
    "lung": 49,
}


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)


def synthetic_metas(counts=ORGAN_COUNTS_352, source="HPA"):
    metas = []
    for organ, n in counts.items():
        for i in range(n):
            metas.append(core.SampleMeta(f"{organ}_{i:03d}", source, organ, 0.4, 64, 64))
    return metas


def blob_image(rng, h, w):
    """RGB slide-like image: pale background with a few dark discs."""
    img = np.full((h, w, 3), 220, dtype=np.uint8)
    yy, xx = np.mgrid[0:h, 0:w]
    mask = np.zeros((h, w), dtype=np.uint8)
    for _ in range(3):
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        r = rng.integers(max(2, min(h, w) // 10), max(3, min(h, w) // 4))
        disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        mask[disc] = 1
    img[mask == 1] = (70, 40, 90)
    noise = rng.integers(-10, 11, size=img.shape)
    return np.clip(img.astype(int) + noise, 0, 255).astype(np.uint8), mask


def write_corpus(root, n, rng, organs=("kidney", "spleen", "lung", "prostate", "large_intestine"),
                 sizes=(48, 96), mask_as="png"):
    """Write ``n`` synthetic slides plus a manifest under ``root``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(exist_ok=True)
    rows = []
    for i in range(n):
        h, w = (int(v) for v in rng.integers(sizes[0], sizes[1], 2))
        img, mask = blob_image(rng, h, w)
        sid = f"s{i:02d}"
        organ = organs[i % len(organs)]
        source = "HuBMAP" if i % 2 else "HPA"
        core.write_image(img, root / "images" / f"{sid}.png")
        if mask_as == "png":
            core.write_mask_png(mask, root / "masks" / f"{sid}.png")
            mask_field = f"masks/{sid}.png"
        else:
            mask_field = core.rle_to_string(core.rle_encode(mask))
        rows.append([sid, source, organ, 0.4, w, h, f"images/{sid}.png", mask_field])
    with open(root / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "source", "organ", "pixel_size", "width", "height", "image_path", "mask"])
        writer.writerows(rows)
    return rows
