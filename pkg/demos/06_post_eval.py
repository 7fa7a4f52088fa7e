# Thresholding, per-organ small-region removal, Dice and stratified folds.
import numpy as np

from ftu import evaluation, post

prob = np.zeros((100, 100), np.float32)
prob[10, 10:19] = 0.9   # 9 pixels: below 0.1% of the image
prob[50, 10:20] = 0.9   # 10 pixels: exactly 0.1%
print("kidney keeps", int(post.postprocess(prob, "kidney").sum()), "pixels")
print("lung keeps  ", int(post.postprocess(prob, "lung").sum()), "pixels")

labels, areas = post.connected_components(post.binarize(prob), 8)
print("regions:", labels.max(), "areas", areas.tolist())

pred = np.array([[1, 1, 0, 0]], np.uint8)
truth = np.array([[1, 0, 1, 1]], np.uint8)
print("dice:", evaluation.dice(pred, truth))
print("public 0.61453 rescaled: %.4f" % evaluation.adjust_public_score(0.61453))

from ftu.core import SampleMeta

counts = {"kidney": 99, "prostate": 93, "large_intestine": 58, "spleen": 53, "lung": 49}
metas = [SampleMeta(f"{o}_{i}", "HPA", o, 0.4, 64, 64) for o, n in counts.items() for i in range(n)]
folds = evaluation.stratified_kfold(metas, 5, seed=42)
for f in range(5):
    ids = folds.fold_ids(f)
    per = [sum(i.startswith(o) for i in ids) for o in counts]
    print(f"fold {f}: {len(ids)} samples, per organ {per}")
