import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmolab.datasets import ClassHistogram
from cmolab.samplers import (
    WeightStrategy,
    draw_indices,
    draw_instance,
    drw_class_weights,
    effective_number,
    empirical_distribution,
    ros_expand,
    weighted_distribution,
)
from tests.test_datasets import make_dataset

HIST = ClassHistogram((100, 10, 1))
LABELS = np.repeat(np.arange(3), HIST.counts)

counts_strategy = st.lists(st.integers(1, 500), min_size=2, max_size=30)


class TestEffectiveNumber:
    def test_single_sample_is_one(self):
        for total in (2, 10, 1000):
            assert effective_number(1, total) == pytest.approx(1.0, abs=1e-12)

    def test_direct_arithmetic(self):
        # oracle: 111 * (1 - (110/111)**100)
        assert effective_number(100, 111) == pytest.approx(66.09511216367527, abs=1e-9)
        assert effective_number(10, 111) == pytest.approx(9.604182161206966, abs=1e-9)

    def test_full_count_below_n(self):
        for total in (2, 5, 50):
            e = effective_number(total, total)
            beta = (total - 1) / total
            assert e == pytest.approx((1 - beta**total) / (1 - beta), abs=1e-9)
            assert e < total

    @given(n=st.integers(2, 400), extra=st.integers(0, 400))
    @settings(max_examples=200, deadline=None)
    def test_bounds_and_monotonicity(self, n, extra):
        total = n + extra if extra else n
        e = effective_number(n, total)
        assert 1.0 <= e < n
        assert effective_number(n - 1, total) < e

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            effective_number(0, 10)
        with pytest.raises(ValueError):
            effective_number(11, 10)


class TestWeightedDistribution:
    def test_balanced_counts(self):
        d = weighted_distribution(ClassHistogram((5, 5, 5, 5)), WeightStrategy.power(1.0))
        assert np.allclose(d.class_probs, 0.25, atol=1e-12)

    def test_power_zero_is_uniform(self):
        d = weighted_distribution(HIST, WeightStrategy.power(0.0))
        assert np.allclose(d.class_probs, 1 / 3, atol=1e-12)

    def test_inverse_frequency(self):
        d = weighted_distribution(HIST, WeightStrategy.power(1.0))
        expected = np.array([0.01, 0.1, 1.0]) / 1.11
        assert np.abs(d.class_probs - expected).max() <= 1e-9

    def test_smoothed_inverse(self):
        d = weighted_distribution(HIST, WeightStrategy.power(0.5))
        raw = np.array([0.1, 10 ** -0.5, 1.0])
        expected = raw / raw.sum()
        assert np.abs(d.class_probs - expected).max() <= 1e-9

    def test_effective_number_strategy(self):
        d = weighted_distribution(HIST, WeightStrategy.effective_number())
        raw = np.array([1 / effective_number(n, 111) for n in HIST.counts])
        assert np.abs(d.class_probs - raw / raw.sum()).max() <= 1e-9

    def test_instance_weights_sum(self):
        d = weighted_distribution(HIST, WeightStrategy.power(1.0), labels=LABELS)
        assert len(d.per_instance_weights) == 111
        assert d.per_instance_weights.sum() == pytest.approx(1.0, abs=1e-9)
        # uniform within class: all class-0 instances share one weight
        w0 = d.per_instance_weights[LABELS == 0]
        assert np.ptp(w0) == 0.0

    @given(counts=counts_strategy, r=st.floats(0.0, 3.0))
    @settings(max_examples=150, deadline=None)
    def test_sums_and_monotonicity(self, counts, r):
        hist = ClassHistogram(tuple(counts))
        d = weighted_distribution(hist, WeightStrategy.power(r))
        assert d.class_probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert d.per_instance_weights.sum() == pytest.approx(1.0, abs=1e-9)
        if r > 0:
            for j in range(len(counts)):
                for k in range(len(counts)):
                    if counts[j] < counts[k]:
                        assert d.class_probs[j] >= d.class_probs[k] - 1e-12

    @given(counts=counts_strategy)
    @settings(max_examples=100, deadline=None)
    def test_effective_number_monotonicity(self, counts):
        hist = ClassHistogram(tuple(counts))
        d = weighted_distribution(hist, WeightStrategy.effective_number())
        for j in range(len(counts)):
            for k in range(len(counts)):
                if counts[j] < counts[k]:
                    assert d.class_probs[j] >= d.class_probs[k] - 1e-12

    def test_strategy_ordering_on_rarest(self):
        # stronger exponents put more mass on the rarest class
        hist = ClassHistogram((100, 37, 12, 3))
        rare = 3
        probs = {
            r: weighted_distribution(hist, WeightStrategy.power(r)).class_probs[rare]
            for r in (0.5, 1.0, 2.0)
        }
        assert probs[2.0] > probs[1.0] > probs[0.5]


class TestEmpiricalDistribution:
    def test_class_probs(self):
        d = empirical_distribution(HIST)
        assert np.abs(d.class_probs - np.array([100, 10, 1]) / 111).max() <= 1e-12

    def test_balanced_uniform(self):
        d = empirical_distribution(ClassHistogram((4, 4, 4)))
        assert np.allclose(d.class_probs, 1 / 3, atol=1e-12)

    def test_instance_weights_uniform(self):
        d = empirical_distribution(HIST, labels=LABELS)
        assert np.allclose(d.per_instance_weights, 1 / 111, atol=1e-12)


class TestDraws:
    def test_point_mass_always_same_index(self):
        from cmolab.samplers import SamplingDistribution

        point = SamplingDistribution(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        rng = np.random.default_rng(0)
        assert all(draw_instance(point, rng) == 0 for _ in range(20))

    def test_deterministic(self):
        d = weighted_distribution(HIST, WeightStrategy.power(1.0), labels=LABELS)
        a = draw_indices(d, np.random.default_rng(3), 1000)
        b = draw_indices(d, np.random.default_rng(3), 1000)
        assert np.array_equal(a, b)

    def test_converges_to_class_probs(self):
        d = weighted_distribution(HIST, WeightStrategy.power(1.0), labels=LABELS)
        idx = draw_indices(d, np.random.default_rng(11), 100_000)
        freq = np.bincount(LABELS[idx], minlength=3) / 100_000
        bound = 4 * np.sqrt(d.class_probs.max() / 100_000)
        assert np.abs(freq - d.class_probs).max() <= bound


class TestRosExpand:
    def test_balanced_input_copy(self):
        ds = make_dataset([3, 3])
        out = ros_expand(ds, np.random.default_rng(0))
        assert out.histogram.counts == (3, 3)
        assert np.array_equal(out.images, ds.images)

    def test_counts_balanced(self):
        ds = make_dataset([3, 1])
        out = ros_expand(ds, np.random.default_rng(0))
        assert out.histogram.counts == (3, 3)

    def test_duplicates_are_copies(self):
        ds = make_dataset([5, 2])
        out = ros_expand(ds, np.random.default_rng(1))
        originals = {ds.images[i].tobytes() for i in np.flatnonzero(ds.labels == 1)}
        for i in np.flatnonzero(out.labels == 1):
            assert out.images[i].tobytes() in originals

    @given(counts=st.lists(st.integers(1, 20), min_size=2, max_size=8))
    @settings(max_examples=30, deadline=None)
    def test_always_balanced(self, counts):
        ds = make_dataset(counts)
        out = ros_expand(ds, np.random.default_rng(5))
        assert set(out.histogram.counts) == {max(counts)}


class TestDrwWeights:
    def test_balanced_all_ones(self):
        w = drw_class_weights(ClassHistogram((8, 8, 8)))
        assert np.allclose(w.weights, 1.0, atol=1e-12)

    def test_inverse_effective_number(self):
        w = drw_class_weights(HIST)
        raw = np.array([1 / effective_number(n, 111) for n in (100, 10, 1)])
        expected = raw / raw.mean()
        assert np.abs(w.weights - expected).max() <= 1e-9
        # frozen oracle values (direct arithmetic, then mean-1 normalization)
        assert np.allclose(w.weights, [0.040553133037294666, 0.2790829902742695, 2.6803638766884363])

    def test_rarest_class_has_max_weight(self):
        w = drw_class_weights(ClassHistogram((50, 20, 3, 7)))
        assert w.weights.argmax() == 2
