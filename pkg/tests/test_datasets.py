import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmolab.datasets import (
    ClassHistogram,
    Dataset,
    DatasetFormatError,
    LongTailSpec,
    build_longtail_profile,
    imbalance_ratio,
    load_dataset,
    quantize_pixels,
    save_dataset,
    shot_groups,
    subsample_longtail,
)


def make_dataset(counts, side=4, channels=1, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(counts)), counts)
    images = quantize_pixels(rng.uniform(size=(len(labels), side, side, channels)))
    return Dataset.from_arrays(images, labels, len(counts))


class TestLongTailProfile:
    def test_balanced_case(self):
        hist = build_longtail_profile(LongTailSpec(num_classes=10, n_max=100, rho=1.0))
        assert hist.counts == (100,) * 10

    def test_rho_100_profile(self):
        # frozen from direct evaluation of round(100 * 100^(-k/9))
        hist = build_longtail_profile(LongTailSpec(num_classes=10, n_max=100, rho=100.0))
        assert hist.counts == (100, 60, 36, 22, 13, 8, 5, 3, 2, 1)

    def test_cifar_style_endpoints(self):
        hist = build_longtail_profile(LongTailSpec(num_classes=100, n_max=500, rho=100.0))
        assert hist.counts[0] == 500
        assert hist.counts[99] == 5

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            LongTailSpec(num_classes=10, n_max=100, rho=0.5)
        with pytest.raises(ValueError):
            LongTailSpec(num_classes=1, n_max=100, rho=10.0)
        with pytest.raises(ValueError):
            LongTailSpec(num_classes=10, n_max=5, rho=10.0)

    @given(
        c=st.integers(2, 60),
        n_max=st.integers(10, 2000),
        rho=st.floats(1.0, 500.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_profile_properties(self, c, n_max, rho):
        if n_max < rho:
            return
        hist = build_longtail_profile(LongTailSpec(num_classes=c, n_max=n_max, rho=rho))
        counts = np.asarray(hist.counts)
        assert (counts >= 1).all()
        assert (np.diff(counts) <= 0).all(), "counts must be non-increasing"
        # realized ratio matches rho within the rounding slack of the smallest count
        ratio = imbalance_ratio(hist)
        assert abs(ratio - rho) <= rho / counts.min() + 1e-9


class TestImbalanceRatio:
    def test_direct_quotient(self):
        assert imbalance_ratio(ClassHistogram((500, 50, 5))) == 100.0

    def test_balanced(self):
        assert imbalance_ratio(ClassHistogram((7, 7, 7, 7))) == 1.0

    def test_inat_scale_ratio(self):
        # the published large-scale benchmark ratio of 500 is just max/min
        assert imbalance_ratio(ClassHistogram((1000, 400, 2))) == 500.0
        hist = build_longtail_profile(LongTailSpec(num_classes=50, n_max=500, rho=500.0))
        assert hist.counts[0] == 500 and hist.counts[-1] == 1
        assert imbalance_ratio(hist) == 500.0


class TestSubsample:
    def test_same_histogram_is_permutation(self):
        src = make_dataset([3, 3])
        out = subsample_longtail(src, src.histogram, np.random.default_rng(0))
        assert out.histogram.counts == src.histogram.counts
        src_rows = {img.tobytes() for img in src.images}
        out_rows = {img.tobytes() for img in out.images}
        assert src_rows == out_rows

    def test_counts(self):
        src = make_dataset([3, 3])
        out = subsample_longtail(src, ClassHistogram((2, 1)), np.random.default_rng(1))
        assert out.histogram.counts == (2, 1)
        assert np.bincount(out.labels, minlength=2).tolist() == [2, 1]

    def test_deterministic(self):
        src = make_dataset([10, 6, 4])
        hist = ClassHistogram((5, 3, 2))
        a = subsample_longtail(src, hist, np.random.default_rng(42))
        b = subsample_longtail(src, hist, np.random.default_rng(42))
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)

    def test_distinct_seeds_differ(self):
        src = make_dataset([30, 30])
        hist = ClassHistogram((5, 5))
        a = subsample_longtail(src, hist, np.random.default_rng(0))
        b = subsample_longtail(src, hist, np.random.default_rng(1))
        assert not np.array_equal(a.images, b.images)

    def test_insufficient_source(self):
        src = make_dataset([3, 3])
        with pytest.raises(ValueError, match="class 0"):
            subsample_longtail(src, ClassHistogram((4, 1)), np.random.default_rng(0))


class TestShotGroups:
    def test_reference_thresholds(self):
        groups = shot_groups(ClassHistogram((500, 50, 5)), 100, 20)
        assert groups.many == {0}
        assert groups.medium == {1}
        assert groups.few == {2}

    def test_all_many(self):
        groups = shot_groups(ClassHistogram((500, 400, 300)), 100, 20)
        assert groups.many == {0, 1, 2}
        assert not groups.medium and not groups.few

    def test_desk_profile_brute_force(self):
        hist = build_longtail_profile(LongTailSpec(num_classes=10, n_max=100, rho=100.0))
        groups = shot_groups(hist, 10, 3)
        # brute-force comparison over all classes
        for k, n in enumerate(hist.counts):
            if n > 10:
                assert k in groups.many
            elif n < 3:
                assert k in groups.few
            else:
                assert k in groups.medium

    def test_rejects_inverted_thresholds(self):
        with pytest.raises(ValueError):
            shot_groups(ClassHistogram((5, 5)), 10, 10)
        with pytest.raises(ValueError):
            shot_groups(ClassHistogram((5, 5)), 3, 10)

    @given(
        counts=st.lists(st.integers(1, 1000), min_size=2, max_size=40),
        few=st.integers(1, 99),
        span=st.integers(1, 100),
    )
    @settings(max_examples=200, deadline=None)
    def test_partition_property(self, counts, few, span):
        groups = shot_groups(ClassHistogram(tuple(counts)), few + span, few)
        ids = set(range(len(counts)))
        assert groups.many | groups.medium | groups.few == ids
        assert not groups.many & groups.medium
        assert not groups.many & groups.few
        assert not groups.medium & groups.few


class TestStorage:
    def test_roundtrip_identity(self, tmp_path):
        ds = make_dataset([4, 2, 1], side=5, channels=3)
        path = save_dataset(ds, tmp_path / "ds.cmo")
        back = load_dataset(path)
        assert np.array_equal(back.images, ds.images)
        assert np.array_equal(back.labels, ds.labels)
        assert back.histogram.counts == ds.histogram.counts

    def test_sidecar_meta_roundtrip(self, tmp_path):
        ds = make_dataset([2, 2])
        ds.meta = [{"split": "train", "class": int(l), "background": i} for i, l in enumerate(ds.labels)]
        path = save_dataset(ds, tmp_path / "ds.cmo")
        back = load_dataset(path)
        assert back.meta == ds.meta

    def test_truncated_file(self, tmp_path):
        ds = make_dataset([2, 2])
        path = save_dataset(ds, tmp_path / "ds.cmo")
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(DatasetFormatError, match="record bytes"):
            load_dataset(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "junk.cmo"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(DatasetFormatError, match="magic"):
            load_dataset(path)

    def test_version_mismatch(self, tmp_path):
        ds = make_dataset([2, 2])
        path = save_dataset(ds, tmp_path / "ds.cmo")
        blob = bytearray(path.read_bytes())
        blob[3] = ord("9")
        path.write_bytes(bytes(blob))
        with pytest.raises(DatasetFormatError, match="version"):
            load_dataset(path)


class TestDatasetInvariants:
    def test_histogram_mismatch_rejected(self):
        ds = make_dataset([3, 2])
        with pytest.raises(ValueError, match="histogram"):
            Dataset(images=ds.images, labels=ds.labels, histogram=ClassHistogram((2, 3)))

    def test_pixel_range_rejected(self):
        bad = np.full((2, 2, 2, 1), 1.5)
        with pytest.raises(ValueError, match="pixel"):
            Dataset.from_arrays(bad, np.array([0, 1]), 2)

    def test_indexing(self):
        ds = make_dataset([2, 1])
        img = ds[2]
        assert img.label == 1
        assert img.pixels.shape == ds.image_shape
