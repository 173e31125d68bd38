import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import make_sequence
from ulda.cwl import (
    compute_cwl_weights,
    compute_dense_weights,
    compute_inv_weights,
    compute_lds_weights,
    compute_weights,
    uniform_weights,
    weighted_loss,
)
from ulda.data import DataError
from ulda.label_dist import (
    DiscreteKernel,
    LabelBinning,
    LabelHistogram,
    bin_labels,
    build_kernel,
    convolve,
)

B3 = LabelBinning(0.0, 3.0, 3)
B2 = LabelBinning(0.0, 2.0, 2)


def hist(binning, counts):
    return LabelHistogram(binning, np.array(counts, dtype=float))


def test_identity_kernel_gives_unit_weights():
    seq = make_sequence(np.linspace(-1, 1, 37))
    b = LabelBinning(-1, 1, 20)
    before = bin_labels(seq, b)
    t = compute_weights("cwl", seq, before, DiscreteKernel.identity())
    assert np.array_equal(t.weights, np.ones(37))


def test_cwl_ratio_example():
    # counts [1,4], target [2,2] -> ratios 2 and 0.5 -> raw sum 4, m=5
    seq = make_sequence([0.5, 1.5, 1.5, 1.5, 1.5])
    t = compute_cwl_weights(hist(B2, [1, 4]), hist(B2, [2, 3]), seq)
    raw = np.array([2.0, 0.75, 0.75, 0.75, 0.75])
    assert np.allclose(t.weights, 5 * raw / raw.sum(), atol=1e-15)


def test_cwl_two_frame_ratios():
    seq = make_sequence([0.5, 1.5])
    t = compute_cwl_weights(hist(B2, [1, 1]), hist(B2, [1.6, 0.4]), seq)
    assert np.allclose(t.weights, [1.6, 0.4], atol=1e-15)


def test_inv_example():
    seq = make_sequence([0.5, 1.5, 1.5, 1.5])
    t = compute_inv_weights(hist(B2, [1, 3]), seq)
    assert np.allclose(t.weights, [2.0, 2 / 3, 2 / 3, 2 / 3], atol=1e-15)


def test_lds_hand_example():
    # counts [1,4,0], kernel [.25,.5,.25] with boundary renormalization
    # bin0 spreads 1/0.75 -> [2/3, 1/3, 0]; bin1 spreads 4 -> [1, 2, 1]
    seq = make_sequence([0.5, 1.5, 1.5, 1.5, 1.5])
    k = DiscreteKernel(0.0, 0.0, np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]))
    before = hist(B3, [1, 4, 0])
    assert np.allclose(convolve(before, k).counts, [5 / 3, 7 / 3, 1.0], atol=1e-15)
    t = compute_lds_weights(before, k, seq)
    raw = np.array([3 / 5] + [3 / 7] * 4)
    expected = 5 * raw / raw.sum()
    assert np.allclose(t.weights, expected, atol=1e-12)
    assert t.weights[0] == pytest.approx(1.2962962962962963)
    assert t.weights[1] == pytest.approx(0.9259259259259259)
    inv = compute_inv_weights(before, seq)
    assert inv.weights[0] == pytest.approx(2.5) and inv.weights[1] == pytest.approx(0.625)


def test_lds_single_bin_is_uniform():
    seq = make_sequence([1.5] * 4)
    k = DiscreteKernel(0.0, 0.0, np.array([-1, 0, 1]), np.array([0.25, 0.5, 0.25]))
    assert np.allclose(compute_lds_weights(hist(B3, [0, 4, 0]), k, seq).weights, 1.0)


def test_dense_example():
    # identity smoothing, densities [0.8, 0.2] -> raw [0.2]*4 + [0.8], sum 1.6
    seq = make_sequence([0.5] * 4 + [1.5])
    t = compute_dense_weights(hist(B2, [4, 1]), DiscreteKernel.identity(), seq)
    assert np.allclose(t.weights, [0.625] * 4 + [2.5], atol=1e-15)


def test_dense_all_zero_falls_back_to_ones():
    seq = make_sequence([0.5] * 3)
    t = compute_dense_weights(hist(B2, [3, 0]), DiscreteKernel.identity(), seq)
    assert np.array_equal(t.weights, np.ones(3))


def test_histogram_must_cover_sequence():
    seq = make_sequence([0.5, 1.5])
    with pytest.raises(DataError):
        compute_inv_weights(hist(B2, [2, 0]), seq)


def test_unknown_scheme():
    seq = make_sequence([0.5])
    with pytest.raises(ValueError, match="unknown weighting"):
        compute_weights("focal", seq, hist(B2, [1, 0]), DiscreteKernel.identity())


def test_weighted_loss_examples():
    assert weighted_loss([0, 0], [1, 0], [1.0, 1.0]) == 0.5
    assert weighted_loss([0, 0, 0, 0, 0], [1, 0, 0, 0, 0], [1.0, 1, 1, 1, 1]) == pytest.approx(0.2)
    assert weighted_loss([0, 0], [1, 1], [2.0, 0.0]) == 1.0
    with pytest.raises(ValueError):
        weighted_loss([0], [1, 1], [1.0])


# ---------------------------------------------------------------- invariants

BIN = LabelBinning(-1, 1, 25)
label_lists = st.lists(st.floats(-1, 1), min_size=1, max_size=60)


@given(label_lists, st.sampled_from(["cwl", "inv", "lds", "dense", "uniform"]))
def test_weights_sum_to_frame_count(labels, scheme):
    seq = make_sequence(labels)
    k = build_kernel(0.4, 0.15, BIN.bin_width)
    t = compute_weights(scheme, seq, bin_labels(seq, BIN), k)
    assert abs(t.weights.sum() - len(labels)) < 1e-9
    assert np.all(t.weights >= 0)


@given(label_lists, st.floats(0.01, 1000))
def test_cwl_invariant_to_count_scaling(labels, scale):
    seq = make_sequence(labels)
    k = build_kernel(0.4, 0.15, BIN.bin_width)
    before = bin_labels(seq, BIN)
    after = convolve(before, k)
    w1 = compute_cwl_weights(before, after, seq).weights
    w2 = compute_cwl_weights(hist(BIN, before.counts * scale), hist(BIN, after.counts * scale), seq).weights
    assert np.allclose(w1, w2, rtol=0, atol=1e-12)


@given(label_lists)
def test_cwl_monotone_in_ratio(labels):
    seq = make_sequence(labels)
    before = bin_labels(seq, BIN)
    after = convolve(before, build_kernel(0.4, 0.15, BIN.bin_width))
    t = compute_cwl_weights(before, after, seq)
    bins = BIN.index(seq.labels)
    ratio = after.counts[bins] / before.counts[bins]
    order = np.argsort(ratio, kind="stable")
    assert np.all(np.diff(t.weights[order]) >= -1e-12)


@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=50))
def test_uniform_loss_is_mse(pairs):
    yhat, y = map(np.array, zip(*pairs))
    seq = make_sequence(np.zeros(len(pairs)))
    got = weighted_loss(yhat, y, uniform_weights(seq))
    assert abs(got - np.mean((y - yhat) ** 2)) <= 1e-12 * max(1.0, got)
