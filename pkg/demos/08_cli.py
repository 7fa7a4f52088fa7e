# End to end through the `ftu` command line on a small synthetic corpus.
import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from ftu import core


def ftu(*args):
    proc = subprocess.run([sys.executable, "-m", "ftu.cli", *map(str, args)], capture_output=True, text=True)
    print("ftu", args[0], "->", proc.returncode, proc.stderr.strip())
    return proc.returncode


root = Path(tempfile.mkdtemp())
data = root / "data"
(data / "images").mkdir(parents=True)
rng = np.random.default_rng(5)
rows = []
for i, organ in enumerate(["kidney", "spleen", "lung", "prostate"]):
    h, w = 120, 160
    img = np.full((h, w, 3), 220, np.uint8)
    mask = np.zeros((h, w), np.uint8)
    yy, xx = np.mgrid[0:h, 0:w]
    mask[(yy - 60) ** 2 + (xx - 40 - 20 * i) ** 2 < 400] = 1
    img[mask == 1] = (60, 40, 90)
    core.write_image(img, data / "images" / f"s{i}.png")
    rows.append([f"s{i}", "HuBMAP", organ, 0.5, w, h, f"images/s{i}.png", core.rle_to_string(core.rle_encode(mask))])
with open(data / "manifest.csv", "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["id", "source", "organ", "pixel_size", "width", "height", "image_path", "mask"])
    writer.writerows(rows)

config = root / "config.json"
config.write_text(json.dumps({"inference": {"window": 64, "overlap": 0.5, "tta": True}}))

ftu("prepare", "--input", data, "--output", root / "prepared")
ftu("infer", "--config", config, "--threads", 4, "--input", data, "--output", root / "pred")
ftu("folds", "--manifest", data / "manifest.csv", "--output", root / "folds.csv")
ftu("evaluate", "--predictions", root / "pred" / "submission.csv", "--truths", data / "manifest.csv",
    "--output", root / "report.csv", "--folds", root / "folds.csv")
print((root / "report.csv").read_text())
ftu("infer", "--config", root / "missing.json", "--input", data, "--output", root / "x")
