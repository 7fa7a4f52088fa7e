# Masks travel as run-length strings, probability maps as raw float32 blobs.
import io

import numpy as np

from ftu import core

mask = np.zeros((4, 5), dtype=np.uint8)
mask[1:3, 1:3] = 1
mask[0, 4] = 1
print(mask)

# columns first, 1-indexed starts
runs = core.rle_encode(mask)
print("runs:", runs)
print("rle :", core.rle_to_string(runs))
back = core.rle_decode(core.rle_from_string(core.rle_to_string(runs)), 5, 4)
print("round trip ok:", np.array_equal(back, mask))

# a bad run is rejected with its index
try:
    core.rle_decode([(1, 3), (2, 2)], 5, 4)
except core.FormatError as exc:
    print("rejected:", exc)

prob = np.linspace(0, 1, 12, dtype=np.float32).reshape(3, 4)
blob = core.probmap_to_bytes(prob)
print("pmap bytes:", len(blob), blob[:4])
print("pmap round trip bit-exact:", core.probmap_from_bytes(blob).tobytes() == prob.tobytes())

buf = io.BytesIO()
core.write_probmap(np.zeros((1, 1), np.float32), buf)
print("1x1 map:", len(buf.getvalue()), "bytes")

# every random draw comes from a labelled stream
rng = core.SeededRng(0)
print("draw:", rng.integers(0, 2**31), "child draw:", rng.split("a").integers(0, 2**31))
