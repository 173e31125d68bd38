"""Per-frame loss weights.

CWL weights a frame by the ratio of smoothed to observed counts at its label
bin, normalized so a sequence's weights sum to its frame count. INV, LDS and
DENSE are the usual inverse-frequency style baselines, normalized the same way
so the schemes are comparable sequence by sequence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ulda.data import DataError, Sequence
from ulda.label_dist import DiscreteKernel, LabelHistogram, convolve

SCHEMES = ("uniform", "cwl", "inv", "lds", "dense")


@dataclass(frozen=True, eq=False)
class WeightTable:
    seq_id: str
    weights: np.ndarray
    scheme: str

    def __len__(self) -> int:
        return self.weights.shape[0]


def _normalize(raw: np.ndarray) -> np.ndarray:
    total = raw.sum()
    if total <= 0:
        # every frame got zero raw weight (e.g. DENSE on a single-bin sequence)
        return np.ones_like(raw)
    return raw.shape[0] * raw / total


def _frame_bins(hist: LabelHistogram, sequence: Sequence) -> np.ndarray:
    # only coverage is checked: the ratios are unchanged if counts are rescaled
    binning = hist.binning
    bins = binning.index(np.clip(sequence.labels, binning.label_min, binning.label_max))
    if np.any(hist.counts[bins] <= 0):
        raise DataError(f"histogram does not cover the labels of sequence {sequence.seq_id!r}")
    return bins


def uniform_weights(sequence: Sequence) -> WeightTable:
    return WeightTable(sequence.seq_id, np.ones(len(sequence)), "uniform")


def compute_cwl_weights(before: LabelHistogram, after: LabelHistogram, sequence: Sequence) -> WeightTable:
    if before.binning != after.binning:
        raise ValueError("histograms use different binnings")
    bins = _frame_bins(before, sequence)
    ratio = after.counts[bins] / before.counts[bins]
    return WeightTable(sequence.seq_id, _normalize(ratio), "cwl")


def compute_inv_weights(before: LabelHistogram, sequence: Sequence) -> WeightTable:
    bins = _frame_bins(before, sequence)
    return WeightTable(sequence.seq_id, _normalize(1.0 / before.counts[bins]), "inv")


def compute_lds_weights(before: LabelHistogram, kernel: DiscreteKernel, sequence: Sequence) -> WeightTable:
    bins = _frame_bins(before, sequence)
    smoothed = convolve(before, kernel).counts
    return WeightTable(sequence.seq_id, _normalize(1.0 / smoothed[bins]), "lds")


def compute_dense_weights(before: LabelHistogram, kernel: DiscreteKernel, sequence: Sequence) -> WeightTable:
    bins = _frame_bins(before, sequence)
    smoothed = convolve(before, kernel).counts
    density = smoothed / smoothed.sum()
    raw = np.maximum(0.0, 1.0 - density[bins])
    return WeightTable(sequence.seq_id, _normalize(raw), "dense")


def compute_weights(
    scheme: str,
    sequence: Sequence,
    before: LabelHistogram,
    kernel: DiscreteKernel,
    after: LabelHistogram = None,
) -> WeightTable:
    """Dispatch by scheme name; ``after`` defaults to ``convolve(before, kernel)``."""
    scheme = scheme.lower()
    if scheme == "uniform":
        return uniform_weights(sequence)
    if scheme == "cwl":
        if after is None:
            after = convolve(before, kernel)
        return compute_cwl_weights(before, after, sequence)
    if scheme == "inv":
        return compute_inv_weights(before, sequence)
    if scheme == "lds":
        return compute_lds_weights(before, kernel, sequence)
    if scheme == "dense":
        return compute_dense_weights(before, kernel, sequence)
    raise ValueError(f"unknown weighting scheme {scheme!r}; expected one of {SCHEMES}")


def weighted_loss(predictions, labels, table) -> float:
    """Mean of weight * squared error over the sequence's frames."""
    yhat = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    w = table.weights if isinstance(table, WeightTable) else np.asarray(table, dtype=float)
    if not (yhat.shape == y.shape == w.shape):
        raise ValueError(f"length mismatch: {yhat.shape}, {y.shape}, {w.shape}")
    return float(np.sum(w * (y - yhat) ** 2) / y.shape[0])
