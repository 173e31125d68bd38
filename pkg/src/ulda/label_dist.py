"""Label histograms, discretized Gaussian kernels and the per-bin augmentation plan.

Labels are binned into ``b`` equal-width, left-closed intervals over a declared
range, with the upper end of the range folded into the last bin. Convolving a
histogram with a normalized Gaussian kernel gives the smoothed target counts;
the difference between target and observed counts decides, per bin, whether the
sequence needs new frames (oversampling) or lighter loss weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ulda.data import DataError, Sequence

# deltas this close to zero are treated as exactly zero
_DELTA_EPS = 1e-9


@dataclass(frozen=True)
class LabelBinning:
    label_min: float = -1.0
    label_max: float = 1.0
    bin_count: int = 100

    def __post_init__(self):
        if not self.label_min < self.label_max:
            raise ValueError(f"label_min must be < label_max, got {self.label_min}, {self.label_max}")
        if int(self.bin_count) != self.bin_count or self.bin_count < 2:
            raise ValueError(f"bin_count must be an integer >= 2, got {self.bin_count}")
        object.__setattr__(self, "label_min", float(self.label_min))
        object.__setattr__(self, "label_max", float(self.label_max))
        object.__setattr__(self, "bin_count", int(self.bin_count))

    @property
    def bin_width(self) -> float:
        return (self.label_max - self.label_min) / self.bin_count

    @property
    def edges(self) -> np.ndarray:
        i = np.arange(self.bin_count + 1)
        e = self.label_min + (self.label_max - self.label_min) * i / self.bin_count
        e[-1] = self.label_max
        return e

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def index(self, labels) -> np.ndarray:
        """Bin index of each label. Labels must already lie in range."""
        y = np.asarray(labels, dtype=float)
        idx = np.searchsorted(self.edges, y, side="right") - 1
        return np.clip(idx, 0, self.bin_count - 1)

    def in_range(self, labels) -> np.ndarray:
        y = np.asarray(labels, dtype=float)
        return (y >= self.label_min) & (y <= self.label_max)


@dataclass(frozen=True, eq=False)
class LabelHistogram:
    binning: LabelBinning
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.shape != (self.binning.bin_count,):
            raise ValueError(
                f"expected {self.binning.bin_count} counts, got shape {counts.shape}"
            )
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValueError("histogram counts must be finite and non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total_mass(self) -> float:
        return float(self.counts.sum())

    def __add__(self, other: "LabelHistogram") -> "LabelHistogram":
        if other.binning != self.binning:
            raise ValueError("cannot add histograms with different binnings")
        return LabelHistogram(self.binning, self.counts + other.counts)


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    kernel_size: float
    sigma: float
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def half_width(self) -> int:
        return int(self.offsets[-1])

    @classmethod
    def identity(cls) -> "DiscreteKernel":
        return cls(0.0, 0.0, np.array([0]), np.array([1.0]))


@dataclass(frozen=True, eq=False)
class AugmentationPlan:
    binning: LabelBinning
    n_before: np.ndarray
    n_after: np.ndarray

    @property
    def delta(self) -> np.ndarray:
        d = self.n_after - self.n_before
        d[np.abs(d) < _DELTA_EPS] = 0.0
        return d

    @property
    def oversample(self) -> np.ndarray:
        """Integer count of new frames per bin: delta rounded half-up, zero where delta <= 0."""
        d = self.delta
        q = np.floor(d + 0.5).astype(np.int64)
        q[d <= 0] = 0
        return q

    @property
    def undersample(self) -> np.ndarray:
        return self.delta < 0

    @property
    def total_oversample(self) -> int:
        return int(self.oversample.sum())

    def records(self):
        """One dict per bin, in bin order."""
        delta, q, u = self.delta, self.oversample, self.undersample
        return [
            {
                "bin": i,
                "n_before": float(self.n_before[i]),
                "n_after": float(self.n_after[i]),
                "delta": float(delta[i]),
                "oversample": int(q[i]),
                "undersample": bool(u[i]),
            }
            for i in range(self.binning.bin_count)
        ]


def bin_labels(labels, binning: LabelBinning, clamp: bool = False) -> LabelHistogram:
    """Histogram of one sequence's labels.

    Accepts a :class:`Sequence` or a plain array of labels. With ``clamp`` off,
    a label outside the declared range raises ``DataError`` naming the frame.
    """
    if isinstance(labels, Sequence):
        y = labels.labels
    else:
        y = np.asarray(labels, dtype=float).ravel()
    if y.size == 0:
        raise DataError("empty sequence")
    if clamp:
        y = np.clip(y, binning.label_min, binning.label_max)
    else:
        bad = np.flatnonzero(~binning.in_range(y))
        if bad.size:
            i = int(bad[0])
            raise DataError(
                f"label {y[i]!r} at frame {i} outside [{binning.label_min}, {binning.label_max}]"
            )
    counts = np.bincount(binning.index(y), minlength=binning.bin_count)
    return LabelHistogram(binning, counts.astype(float))


def build_kernel(delta: float, sigma: float, bin_width: float) -> DiscreteKernel:
    """Gaussian weights on the bin offsets covered by a window of width ``delta``."""
    if delta <= 0 or sigma <= 0 or bin_width <= 0:
        raise ValueError("delta, sigma and bin_width must all be positive")
    # small slack so that e.g. delta = 3 * bin_width keeps offsets +-1
    ratio = delta / bin_width
    if ratio < 1.0 - 1e-9:
        raise ValueError("kernel narrower than one bin")
    half = int(np.floor(ratio / 2.0 + 1e-9))
    offsets = np.arange(-half, half + 1)
    x = offsets * bin_width
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    w = w / w.sum()
    # exact symmetry regardless of summation order
    w = 0.5 * (w + w[::-1])
    return DiscreteKernel(float(delta), float(sigma), offsets, w)


def convolve(hist: LabelHistogram, kernel: DiscreteKernel) -> LabelHistogram:
    """Smooth a histogram, conserving total mass at the boundaries.

    Each source bin spreads its count over its in-range neighbours with the
    kernel weights renormalized to the part of the kernel inside the histogram.
    """
    b = hist.binning.bin_count
    half = kernel.half_width
    if half >= b:
        raise ValueError(f"kernel half-width {half} does not fit a histogram of {b} bins")
    counts = hist.counts
    src = np.arange(b)
    norm = np.zeros(b)
    for j, w in zip(kernel.offsets, kernel.weights):
        inside = (src + j >= 0) & (src + j < b)
        norm[inside] += w
    spread = counts / norm
    out = np.zeros(b)
    for j, w in zip(kernel.offsets, kernel.weights):
        j = int(j)
        if j >= 0:
            out[j:] += w * spread[: b - j]
        else:
            out[: b + j] += w * spread[-j:]
    return LabelHistogram(hist.binning, out)


def make_plan(before: LabelHistogram, after: LabelHistogram) -> AugmentationPlan:
    if before.binning != after.binning:
        raise ValueError("histograms use different binnings")
    return AugmentationPlan(before.binning, before.counts.copy(), after.counts.copy())
