# Sliding-window stitching, flip TTA, ensembling, the subprocess protocol
# and checkpoint averaging.
import sys

import numpy as np

from ftu import infer
from ftu.predictors import ChannelIdentityPredictor, ConstantPredictor, CornerDeltaPredictor, LuminanceSigmoidPredictor
from ftu.protocol import SubprocessPredictor

grid = infer.plan_tiles(1500, 1100, 1024, 0.75)
print("stride", grid.stride_w, "x offsets", grid.xs, "y offsets", grid.ys)
print("cover counts range", infer.cover_counts(grid).min(), "-", infer.cover_counts(grid).max())

rng = np.random.default_rng(3)
image = rng.integers(0, 256, (300, 400, 3), dtype=np.uint8)
small = infer.plan_tiles(400, 300, 128, 0.75)
stitched = infer.predict_sliding(image, ChannelIdentityPredictor(), small)
print("identity stitch exact:", np.array_equal(stitched, image[:, :, 1].astype(np.float32) / np.float32(255)))

tta = infer.tta_predict(np.zeros((9, 9, 3), np.uint8), CornerDeltaPredictor())
print("corner delta after TTA:\n", tta[[0, -1]][:, [0, -1]])

members = [infer.Member("lum", LuminanceSigmoidPredictor()), infer.Member("half", ConstantPredictor(0.5), 3)]
prob = infer.predict_image(image, members, window=128, overlap=0.75, tta=True, threads=4)
print("ensemble map", prob.shape, prob.dtype, "mean %.4f" % prob.mean())

# the same identity predictor served by a child process
with SubprocessPredictor([sys.executable, "-m", "ftu.protocol", "echo"]) as remote:
    remote_map = infer.predict_sliding(image, remote, small, threads=4)
print("echo server bit-exact:", remote_map.tobytes() == stitched.tobytes())

ckpts = [{"w": np.array([1, 3], np.float32)}, {"w": np.array([3, 5], np.float32)}]
print("averaged parameters:", infer.average_parameters(ckpts)["w"])
