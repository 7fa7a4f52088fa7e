import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ftu import core


def brute_rle(mask):
    """Independent oracle: walk the column-major pixel order by hand."""
    h, w = mask.shape
    runs = []
    pos = 1
    current = None
    for c in range(w):
        for r in range(h):
            if mask[r, c]:
                if current is None:
                    current = [pos, 0]
                current[1] += 1
            elif current is not None:
                runs.append(tuple(current))
                current = None
            pos += 1
    if current is not None:
        runs.append(tuple(current))
    return runs


class TestRle:
    def test_empty(self):
        assert core.rle_encode(np.zeros((3, 3), np.uint8)) == []

    def test_first_column(self):
        m = np.zeros((3, 3), np.uint8)
        m[:, 0] = 1
        assert core.rle_encode(m) == [(1, 3)]

    def test_diagonal(self):
        m = np.array([[1, 0], [0, 1]], np.uint8)
        assert core.rle_encode(m) == [(1, 1), (4, 1)]

    def test_decode_empty(self):
        np.testing.assert_array_equal(core.rle_decode([], 4, 4), np.zeros((4, 4)))

    def test_decode_first_column(self):
        m = core.rle_decode([(1, 3)], 3, 3)
        assert m[:, 0].tolist() == [1, 1, 1] and m[:, 1:].sum() == 0

    def test_decode_out_of_range(self):
        with pytest.raises(core.FormatError, match="run 0"):
            core.rle_decode([(9, 2)], 3, 3)

    def test_decode_reports_run_index(self):
        with pytest.raises(core.FormatError, match="run 1"):
            core.rle_decode([(1, 1), (0, 2)], 3, 3)

    def test_non_square_orientation(self):
        # 2 rows x 3 cols: flat index = col * height + row + 1
        m = np.zeros((2, 3), np.uint8)
        m[1, 2] = 1
        assert core.rle_encode(m) == [(6, 1)]
        np.testing.assert_array_equal(core.rle_decode([(6, 1)], 3, 2), m)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 64), st.integers(1, 64)), elements=st.integers(0, 1)))
    def test_round_trip_and_maximal(self, mask):
        runs = core.rle_encode(mask)
        assert runs == brute_rle(mask)
        np.testing.assert_array_equal(core.rle_decode(runs, mask.shape[1], mask.shape[0]), mask)
        for (s1, l1), (s2, _) in zip(runs, runs[1:]):
            assert s1 + l1 < s2

    def test_text_line(self):
        line = core.format_rle_line("abc", [(1, 3), (7, 2)])
        assert line == "abc,1 3 7 2"
        assert core.parse_rle_line(line) == ("abc", [(1, 3), (7, 2)])
        assert core.parse_rle_line("empty,") == ("empty", [])

    def test_text_odd_fields(self):
        with pytest.raises(core.FormatError):
            core.rle_from_string("1 2 3")


class TestProbmap:
    def test_single_pixel_is_17_bytes(self):
        buf = io.BytesIO()
        core.write_probmap(np.array([[0.5]], np.float32), buf)
        data = buf.getvalue()
        # magic 4 + width 4 + height 4 + one float32
        assert len(data) == 16
        assert data[:4] == b"PMAP"
        assert core.read_probmap(io.BytesIO(data)).tolist() == [[0.5]]

    def test_round_trip_2x2(self, tmp_path):
        m = np.array([[0.0, 1.0], [0.25, np.float32(1 / 3)]], np.float32)
        core.write_probmap(m, tmp_path / "m.pmap")
        back = core.read_probmap(tmp_path / "m.pmap")
        assert back.tobytes() == m.tobytes()

    def test_header_layout(self):
        data = core.probmap_to_bytes(np.zeros((2, 3), np.float32))
        assert data[4:12] == (3).to_bytes(4, "little") + (2).to_bytes(4, "little")

    def test_bad_magic(self):
        with pytest.raises(core.FormatError, match="magic"):
            core.probmap_from_bytes(b"XXXX" + bytes(12))

    def test_truncated(self):
        data = core.probmap_to_bytes(np.zeros((2, 2), np.float32))
        with pytest.raises(core.FormatError):
            core.probmap_from_bytes(data[:-1])

    def test_out_of_range_on_read(self):
        data = core.PROBMAP_MAGIC + (1).to_bytes(4, "little") * 2 + np.float32(1.5).tobytes()
        with pytest.raises(core.FormatError, match="outside"):
            core.probmap_from_bytes(data)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float32, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                  elements=st.floats(0, 1, width=32)))
    def test_bit_exact(self, m):
        assert core.probmap_from_bytes(core.probmap_to_bytes(m)).tobytes() == m.tobytes()


class TestSeededRng:
    def test_reproducible_10k(self):
        a = core.SeededRng(7).random(10_000)
        b = core.SeededRng(7).random(10_000)
        assert a.tobytes() == b.tobytes()

    def test_split_independent_of_parent_draws(self):
        parent = core.SeededRng(7)
        first = parent.split("x").random(5)
        parent.random(100)
        assert parent.split("x").random(5).tobytes() == first.tobytes()

    def test_split_labels_differ(self):
        r = core.SeededRng(7)
        assert r.split("a").random() != r.split("b").random()
        assert r.split("a").split("b").random() != r.split("b").split("a").random()

    def test_pinned_values(self):
        # PCG64 output is platform independent; a change here breaks reproducibility
        assert core.SeededRng(0).integers(0, 2**31) == 1826701615
        assert core.SeededRng(0).split("a").integers(0, 2**31) == 1787065480


class TestSampleMeta:
    def test_rejects_unknown_organ(self):
        with pytest.raises(core.DataError):
            core.SampleMeta("a", "HPA", "heart", 0.4, 10, 10)

    def test_rejects_bad_pixel_size(self):
        with pytest.raises(core.DataError):
            core.SampleMeta("a", "HPA", "lung", 0, 10, 10)


def test_mask_png_round_trip(tmp_path):
    m = (np.random.default_rng(0).random((9, 7)) > 0.5).astype(np.uint8)
    core.write_mask_png(m, tmp_path / "m.png")
    from PIL import Image

    raw = np.asarray(Image.open(tmp_path / "m.png"))
    assert set(np.unique(raw)) <= {0, 255}
    np.testing.assert_array_equal(core.read_mask_png(tmp_path / "m.png"), m)
