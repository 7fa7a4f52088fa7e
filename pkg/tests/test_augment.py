import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftu import augment, core
from ftu.color import ColorJitterParams
from conftest import synthetic_metas


def rand_pair(rng, h, w, c=3):
    img = rng.integers(0, 256, (h, w, c) if c > 1 else (h, w), dtype=np.uint8)
    mask = (rng.random((h, w)) > 0.5).astype(np.uint8)
    return img, mask


class TestDihedral:
    def test_identity(self, nprng):
        img, mask = rand_pair(nprng, 5, 7)
        i2, m2 = augment.apply_dihedral(img, mask, 0)
        np.testing.assert_array_equal(i2, img)
        np.testing.assert_array_equal(m2, mask)

    def test_hflip_twice(self, nprng):
        img, mask = rand_pair(nprng, 5, 7)
        i2, m2 = augment.apply_dihedral(*augment.apply_dihedral(img, mask, 4), 4)
        np.testing.assert_array_equal(i2, img)
        np.testing.assert_array_equal(m2, mask)

    def test_rot90_by_hand(self):
        a, b, c, d = 1, 2, 3, 4
        img = np.array([[a, b], [c, d]], np.uint8)
        out, _ = augment.apply_dihedral(img, np.zeros((2, 2), np.uint8), 1)
        assert out.tolist() == [[c, a], [d, b]]

    def test_invalid(self):
        with pytest.raises(ValueError):
            augment.apply_dihedral(np.zeros((2, 2), np.uint8), np.zeros((2, 2), np.uint8), 8)

    @pytest.mark.parametrize("e", range(8))
    def test_inverse(self, nprng, e):
        img, mask = rand_pair(nprng, 6, 9)
        i2, m2 = augment.apply_dihedral(*augment.apply_dihedral(img, mask, e), augment.DIHEDRAL_INVERSE[e])
        np.testing.assert_array_equal(i2, img)
        np.testing.assert_array_equal(m2, mask)

    def test_group_closure(self, nprng):
        img, mask = rand_pair(nprng, 5, 5, 1)
        results = {augment.apply_dihedral(img, mask, e)[0].tobytes() for e in range(8)}
        assert len(results) == 8
        for a in range(8):
            for b in range(8):
                composed = augment.apply_dihedral(*augment.apply_dihedral(img, mask, a), b)[0]
                assert composed.tobytes() in results


class TestAffine:
    def test_identity_ranges(self, nprng):
        img, mask = rand_pair(nprng, 20, 24)
        i2, m2 = augment.affine_jitter(img, mask, (1, 1), (0, 0), (0, 0), core.SeededRng(0))
        assert i2.tobytes() == img.tobytes() and m2.tobytes() == mask.tobytes()

    def test_rot90_matches_dihedral(self, nprng):
        img, mask = rand_pair(nprng, 16, 16)
        i2, m2 = augment.affine_jitter(img, mask, (1, 1), (0, 0), (90, 90), core.SeededRng(0))
        i3, m3 = augment.apply_dihedral(img, mask, 1)
        np.testing.assert_array_equal(i2, i3)
        np.testing.assert_array_equal(m2, m3)

    def test_all_ones_mask_preserved(self, nprng):
        img, _ = rand_pair(nprng, 20, 20)
        mask = np.ones((20, 20), np.uint8)
        _, m2 = augment.affine_jitter(img, mask, (0.5, 1.5), (-0.3, 0.3), (-180, 180), core.SeededRng(5))
        assert m2.all()

    def test_no_new_values_under_shift(self):
        img = np.zeros((10, 10), np.uint8)
        img[:, 5:] = 200
        out, _ = augment.affine_jitter(img, np.zeros((10, 10), np.uint8), (1, 1), (0.3, 0.3), (0, 0),
                                       core.SeededRng(1))
        assert set(np.unique(out)) <= {0, 200}

    def test_reproducible(self, nprng):
        img, mask = rand_pair(nprng, 20, 20)
        a = augment.affine_jitter(img, mask, (0.8, 1.2), (-0.1, 0.1), (-45, 45), core.SeededRng(2))
        b = augment.affine_jitter(img, mask, (0.8, 1.2), (-0.1, 0.1), (-45, 45), core.SeededRng(2))
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


class TestElastic:
    def test_alpha_zero(self, nprng):
        img, mask = rand_pair(nprng, 20, 24)
        i2, m2 = augment.elastic_transform(img, mask, 0, 4, core.SeededRng(0))
        assert i2.tobytes() == img.tobytes() and m2.tobytes() == mask.tobytes()

    def test_constant_image(self):
        img = np.full((30, 30, 3), 99, np.uint8)
        i2, _ = augment.elastic_transform(img, np.zeros((30, 30), np.uint8), 40, 3, core.SeededRng(1))
        assert (i2 == 99).all()

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0, 50), st.floats(0.5, 10), st.integers(0, 1000))
    def test_mask_stays_binary(self, alpha, sigma, seed):
        rng = np.random.default_rng(seed)
        img, mask = rand_pair(rng, 16, 16)
        i2, m2 = augment.elastic_transform(img, mask, alpha, sigma, core.SeededRng(seed))
        assert m2.shape == i2.shape[:2] == mask.shape
        assert set(np.unique(m2)) <= {0, 1}

    def test_bad_params(self):
        with pytest.raises(ValueError):
            augment.elastic_transform(np.zeros((4, 4), np.uint8), np.zeros((4, 4), np.uint8), 1, 0, core.SeededRng(0))


def tiles(rng, organ_a="kidney", organ_b="kidney", size=8):
    img_a = rng.integers(0, 128, (size, size, 3), dtype=np.uint8)
    img_b = rng.integers(128, 256, (size, size, 3), dtype=np.uint8)
    mask_a = (rng.random((size, size)) > 0.5).astype(np.uint8)
    a = augment.LabeledTile(img_a, mask_a, organ_a, ("a", 1, 2))
    b = augment.LabeledTile(img_b, 1 - mask_a, organ_b, ("b", 3, 4))
    return a, b


class TestCutmix:
    def test_full_box(self, nprng):
        a, b = tiles(nprng)
        out = augment.cutmix(a, b, box=(0, 8, 0, 8))
        np.testing.assert_array_equal(out.image, b.image)
        np.testing.assert_array_equal(out.mask, b.mask)
        assert out.origin == a.origin and out.organ == a.organ

    def test_empty_box(self, nprng):
        a, b = tiles(nprng)
        out = augment.cutmix(a, b, box=(3, 3, 0, 8))
        np.testing.assert_array_equal(out.image, a.image)
        np.testing.assert_array_equal(out.mask, a.mask)

    def test_provenance(self, nprng):
        rng = core.SeededRng(0)
        for _ in range(200):
            a, b = tiles(nprng)
            out = augment.cutmix(a, b, rng)
            from_b_img = (out.image == b.image).all(axis=2)
            from_a_img = (out.image == a.image).all(axis=2)
            assert (from_a_img ^ from_b_img).all()
            from_b_mask = out.mask == b.mask
            np.testing.assert_array_equal(from_b_img, from_b_mask)

    @pytest.mark.parametrize("pair", [(x, y) for x in core.ORGANS for y in core.ORGANS if x != y])
    def test_mixed_organs_rejected(self, nprng, pair):
        a, b = tiles(nprng, *pair)
        with pytest.raises(core.ContractError):
            augment.cutmix(a, b, core.SeededRng(0))

    def test_box_law(self):
        rng = core.SeededRng(1)
        areas = []
        for _ in range(4000):
            y1, y2, x1, x2 = augment.uniform_corner_box(10, 10, rng)
            assert 0 <= y1 <= y2 <= 10 and 0 <= x1 <= x2 <= 10
            areas.append((y2 - y1) * (x2 - x1))
        # E|U1 - U2| for discrete uniform on 0..10 is 40/11 per axis
        expected = (40 / 11) ** 2
        assert np.mean(areas) == pytest.approx(expected, rel=0.05)

    def test_fixed_area_box(self):
        box = augment.fixed_area_box(16, 16, core.SeededRng(0), 0.25)
        assert (box[1] - box[0]) * (box[3] - box[2]) == 64

    def test_maybe_cutmix_probability(self, nprng):
        rng = core.SeededRng(3)
        a, b = tiles(nprng)
        applied = sum(augment.maybe_cutmix(a, b, 0.5, rng) is not a for _ in range(2000))
        assert abs(applied - 1000) <= 3 * np.sqrt(2000 * 0.25)


class TestSampleTile:
    def test_forced_centre(self):
        img = np.zeros((101, 101, 3), np.uint8)
        mask = np.zeros((101, 101), np.uint8)
        mask[50, 50] = 1
        t = augment.sample_tile(img, mask, 21, 1.0, core.SeededRng(0))
        assert t.origin[1:] == (40, 40) and t.mask[10, 10] == 1

    def test_forced_clamped(self):
        mask = np.zeros((50, 50), np.uint8)
        mask[0, 49] = 1
        t = augment.sample_tile(np.zeros((50, 50), np.uint8), mask, 20, 1.0, core.SeededRng(0))
        assert t.origin[1:] == (30, 0) and t.mask.sum() == 1

    def test_empty_mask_falls_back(self):
        mask = np.zeros((40, 40), np.uint8)
        origins = {augment.sample_tile(np.zeros((40, 40), np.uint8), mask, 8, 1.0, core.SeededRng(s)).origin
                   for s in range(20)}
        assert len(origins) > 1

    def test_small_image_padded(self, nprng):
        img, mask = rand_pair(nprng, 5, 7)
        t = augment.sample_tile(img, mask, 16, 0.5, core.SeededRng(0))
        assert t.image.shape == (16, 16, 3) and t.mask.shape == (16, 16)
        np.testing.assert_array_equal(t.image[:5, :7], img)

    def test_foreground_rate(self):
        # left half foreground; random crops hit it 32/49 of the time, so the
        # expected rate is 0.5 + 0.5 * 32/49 ~ 0.827
        mask = np.zeros((64, 64), np.uint8)
        mask[:, :32] = 1
        img = np.zeros((64, 64), np.uint8)
        rng = core.SeededRng(42)
        n = 10_000
        hits = sum(augment.sample_tile(img, mask, 16, 0.5, rng).mask.any() for _ in range(n))
        assert hits / n >= 0.74

    def test_sizes(self, nprng):
        img, mask = rand_pair(nprng, 64, 80)
        for size in (16, 32, 64):
            t = augment.sample_tile(img, mask, size, 0.5, core.SeededRng(size))
            assert t.image.shape[:2] == t.mask.shape == (size, size)


def spec_with(n_labeled=20, pools=None, fraction=0.3, exclusions=()):
    labeled = [core.SampleMeta(f"l{i}", "HPA", "lung", 0.4, 8, 8) for i in range(n_labeled)]
    return augment.DatasetSpec(labeled, pools or {}, list(exclusions), fraction)


class TestComposeEpoch:
    def test_zero_fraction(self):
        refs = augment.compose_epoch(spec_with(fraction=0, pools={"gtex": ["g1"]}), 500, core.SeededRng(0))
        assert {p for p, _ in refs} == {"labeled"}

    def test_full_fraction(self):
        spec = spec_with(fraction=1, pools={"gtex": ["g1", "g2"], "hpa_extra": ["h1"]})
        refs = augment.compose_epoch(spec, 500, core.SeededRng(0))
        assert {p for p, _ in refs} <= {"gtex", "hpa_extra"}

    def test_share(self):
        spec = spec_with(fraction=0.3, pools={"gtex": ["g1", "g2"], "hpa_extra": ["h1"]})
        refs = augment.compose_epoch(spec, 10_000, core.SeededRng(5))
        share = sum(p != "labeled" for p, _ in refs) / 10_000
        assert abs(share - 0.3) <= 0.015

    def test_union_uniform(self):
        spec = spec_with(fraction=1, pools={"a": ["a1"], "b": ["b1", "b2", "b3"]})
        refs = augment.compose_epoch(spec, 8000, core.SeededRng(6))
        share_a = sum(p == "a" for p, _ in refs) / 8000
        assert abs(share_a - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / 8000)

    def test_exclusions_never_drawn(self):
        spec = spec_with(fraction=0, exclusions=["l0", "l1"])
        refs = augment.compose_epoch(spec, 2000, core.SeededRng(0))
        assert not {"l0", "l1"} & {i for _, i in refs}

    def test_reproducible(self):
        spec = spec_with(fraction=0.5, pools={"gtex": ["g1"]})
        assert augment.compose_epoch(spec, 300, core.SeededRng(9)) == augment.compose_epoch(spec, 300, core.SeededRng(9))

    def test_empty_pools_error(self):
        with pytest.raises(core.DataError):
            augment.compose_epoch(spec_with(fraction=0.1), 10, core.SeededRng(0))


class TestFilterSamples:
    def test_no_exclusions(self):
        spec = spec_with()
        assert augment.filter_samples(spec).labeled == spec.labeled

    def test_fifteen_lung_samples(self):
        metas = synthetic_metas()
        assert len(metas) == 352
        lung = [m.id for m in metas if m.organ == "lung"][:15]
        spec = augment.DatasetSpec(metas, {}, lung, 0.0)
        assert len(augment.filter_samples(spec).labeled) == 337

    def test_unknown_id_warns(self):
        spec = spec_with(exclusions=["nope"])
        with pytest.warns(UserWarning, match="nope"):
            out = augment.filter_samples(spec)
        assert out.labeled == spec.labeled


def test_augment_tile_pipeline(nprng):
    img, mask = rand_pair(nprng, 32, 32)
    tile = augment.LabeledTile(img, mask, "spleen", ("x", 0, 0))
    partner = augment.LabeledTile(*rand_pair(nprng, 32, 32), "spleen")
    geo = augment.GeometricParams()
    out1 = augment.augment_tile(tile, partner, geo, ColorJitterParams(), 0.5, core.SeededRng(1))
    out2 = augment.augment_tile(tile, partner, geo, ColorJitterParams(), 0.5, core.SeededRng(1))
    assert out1.image.tobytes() == out2.image.tobytes() and out1.mask.tobytes() == out2.mask.tobytes()
    assert out1.image.shape == img.shape and set(np.unique(out1.mask)) <= {0, 1}
    gray = augment.LabeledTile(img[:, :, 0], mask, "spleen")
    assert augment.augment_tile(gray, None, geo, ColorJitterParams(), 0.5, core.SeededRng(1)).image.ndim == 2
