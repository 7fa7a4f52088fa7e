"""Binary stdin/stdout protocol for predictors running in another process.

All integers are u32 little-endian, all samples float32 little-endian::

    request   b"PRD1" count height width channels  count*H*W*C floats
    response  b"PRB1" count height width           count*H*W floats
    error     b"ERR1" length                       UTF-8 message

A server answers each request with exactly one response or error frame and
exits on EOF. Run ``python -m ftu.protocol echo`` for a loopback server that
returns the green channel of every tile.
"""

import struct
import subprocess
import sys
import threading

import numpy as np

from .core import FormatError, PredictorError
from .predictors import identity_channel, tile_to_float

REQUEST = b"PRD1"
RESPONSE = b"PRB1"
ERROR = b"ERR1"


def _read_exact(stream, n):
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            break
        chunks.append(chunk)
        remaining -= len(chunk)
    data = b"".join(chunks)
    if len(data) != n:
        raise FormatError(f"stream ended after {len(data)} of {n} bytes")
    return data


def _floats(stream, count):
    arr = np.frombuffer(_read_exact(stream, 4 * count), dtype="<f4").astype(np.float32)
    if not np.all((arr >= 0) & (arr <= 1)):
        raise FormatError("frame contains values outside [0, 1]")
    return arr


def encode_request(tiles):
    """``tiles``: float32 array (count, H, W, C) in [0, 1]."""
    tiles = np.asarray(tiles, dtype="<f4")
    count, h, w, c = tiles.shape
    return REQUEST + struct.pack("<IIII", count, h, w, c) + tiles.tobytes()


def encode_response(maps):
    maps = np.asarray(maps, dtype="<f4")
    count, h, w = maps.shape
    return RESPONSE + struct.pack("<III", count, h, w) + maps.tobytes()


def encode_error(message):
    payload = str(message).encode("utf-8")
    return ERROR + struct.pack("<I", len(payload)) + payload


def read_request(stream):
    """Next request as a (count, H, W, C) array, or None on clean EOF."""
    magic = stream.read(4)
    if not magic:
        return None
    if len(magic) < 4:
        magic += _read_exact(stream, 4 - len(magic))
    if magic != REQUEST:
        raise FormatError(f"bad request magic {magic!r}")
    count, h, w, c = struct.unpack("<IIII", _read_exact(stream, 16))
    return _floats(stream, count * h * w * c).reshape(count, h, w, c)


def read_response(stream):
    """Response payload as (count, H, W); an ERR1 frame raises PredictorError."""
    magic = _read_exact(stream, 4)
    if magic == ERROR:
        (length,) = struct.unpack("<I", _read_exact(stream, 4))
        raise PredictorError(_read_exact(stream, length).decode("utf-8", "replace"))
    if magic != RESPONSE:
        raise FormatError(f"bad response magic {magic!r}")
    count, h, w = struct.unpack("<III", _read_exact(stream, 12))
    return _floats(stream, count * h * w).reshape(count, h, w)


def serve(predict_batch, stdin=None, stdout=None):
    """Answer requests from ``stdin`` until EOF.

    ``predict_batch`` maps a (count, H, W, C) float32 array to (count, H, W).
    Exceptions inside it are reported as ERR1 frames and serving continues.
    """
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    while True:
        try:
            tiles = read_request(stdin)
        except FormatError as exc:
            stdout.write(encode_error(exc))
            stdout.flush()
            return 1
        if tiles is None:
            return 0
        try:
            maps = np.asarray(predict_batch(tiles), dtype=np.float32)
            if maps.shape != tiles.shape[:3]:
                raise ValueError(f"predictor returned shape {maps.shape}, expected {tiles.shape[:3]}")
            frame = encode_response(maps)
        except Exception as exc:  # reported to the client, not fatal
            frame = encode_error(f"{type(exc).__name__}: {exc}")
        stdout.write(frame)
        stdout.flush()


def echo_batch(tiles):
    return np.stack([identity_channel(t) for t in tiles]) if len(tiles) else tiles[..., 0]


class SubprocessPredictor:
    """Predictor backed by a long-running child process speaking the protocol.

    Calls are serialised with a lock, so one instance may be shared by
    worker threads.
    """

    def __init__(self, command, name=None):
        self.command = list(command)
        self.name = name or " ".join(self.command)
        self._proc = None
        self._lock = threading.Lock()

    def _ensure_started(self):
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
                )
            except OSError as exc:
                raise PredictorError(f"{self.name}: cannot start predictor: {exc}") from None
        return self._proc

    def predict_batch(self, tiles):
        tiles = np.asarray(tiles, dtype=np.float32)
        with self._lock:
            proc = self._ensure_started()
            try:
                proc.stdin.write(encode_request(tiles))
                proc.stdin.flush()
                maps = read_response(proc.stdout)
            except (BrokenPipeError, FormatError) as exc:
                raise PredictorError(f"{self.name}: protocol failure: {exc}") from None
            except PredictorError as exc:
                raise PredictorError(f"{self.name}: {exc}") from None
        if maps.shape != tiles.shape[:3]:
            raise PredictorError(f"{self.name}: returned {maps.shape}, expected {tiles.shape[:3]}")
        return maps

    def __call__(self, tile):
        return self.predict_batch(tile_to_float(tile)[None])[0]

    def close(self):
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=10)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
            self._proc = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        self.close()


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in ("echo", "constant", "fail"):
        sys.stderr.write("usage: python -m ftu.protocol echo | constant VALUE | fail\n")
        return 2
    if argv[0] == "echo":
        return serve(echo_batch)
    if argv[0] == "constant":
        value = np.float32(argv[1])
        return serve(lambda t: np.full(t.shape[:3], value, dtype=np.float32))

    def fail(_tiles):
        raise RuntimeError("this predictor always fails")

    return serve(fail)


if __name__ == "__main__":
    sys.exit(main())
