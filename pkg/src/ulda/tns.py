"""Time-slice normal sampling.

New frames for an under-populated label bin are generated in feature space.
The bin's frames are split into maximal contiguous runs (slices); each new
frame picks a slice with probability proportional to its length, a normal
distribution is fitted to the slice's features (padded out to ``T`` frames and
weighted by how close each frame's label is to the slice's label mean), and
features are drawn from it. Every new feature takes the label of its nearest
original frame in the slice and is inserted right after that frame.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ulda.data import DataError, NumericError, Sequence, sequence_rng
from ulda.label_dist import AugmentationPlan, LabelBinning

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSlice:
    seq_id: str
    start: int
    end: int
    bin_index: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SliceSet:
    bin_index: int
    slices: tuple

    @property
    def lengths(self) -> np.ndarray:
        return np.array([s.length for s in self.slices], dtype=np.int64)

    @property
    def total_length(self) -> int:
        return int(self.lengths.sum())

    def __len__(self) -> int:
        return len(self.slices)


@dataclass(frozen=True, eq=False)
class FeatureNormal:
    """Weighted feature mean and covariance; ``covariance`` already includes ``reg`` on the diagonal."""

    mean: np.ndarray
    raw_covariance: np.ndarray
    reg: float
    diagonal_only: bool = False

    @property
    def covariance(self) -> np.ndarray:
        cov = self.raw_covariance
        if self.diagonal_only:
            cov = np.diag(np.diag(cov))
        return cov + self.reg * np.eye(cov.shape[0])

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class SyntheticFrame:
    feature: np.ndarray
    label: float
    utopia: Optional[float]
    insert_position: int
    slice: TimeSlice
    matched_index: int


@dataclass(eq=False)
class AugmentResult:
    sequence: Sequence
    provenance: List[dict] = field(default_factory=list)
    # index into the output sequence of every original frame, in order
    original_positions: Optional[np.ndarray] = None

    @property
    def added(self) -> int:
        return len(self.provenance)


def segment_slices(sequence: Sequence, bin_index: int, binning: LabelBinning) -> SliceSet:
    """Maximal runs of consecutive frames whose labels fall in ``bin_index``."""
    mask = binning.index(np.clip(sequence.labels, binning.label_min, binning.label_max)) == bin_index
    return _slices_from_mask(sequence.seq_id, mask, bin_index)


def _slices_from_mask(seq_id: str, mask, bin_index: int) -> SliceSet:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError(f"no frames at label bin {bin_index} in sequence {seq_id!r}")
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    slices = tuple(TimeSlice(seq_id, int(s), int(e), bin_index) for s, e in zip(starts, ends))
    return SliceSet(bin_index, slices)


def slice_probabilities(slice_set: SliceSet) -> np.ndarray:
    lengths = slice_set.lengths
    total = lengths.sum()
    if total <= 0:
        raise ValueError("slice set has zero total length")
    return lengths / total


def allocate_slices(slice_set: SliceSet, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a slice for each of ``count`` new frames; returns the number landing in each slice."""
    picks = rng.choice(len(slice_set), size=int(count), p=slice_probabilities(slice_set))
    return np.bincount(picks, minlength=len(slice_set))


def extend_slice(n_frames: int, sl: TimeSlice, threshold: int) -> tuple:
    """Grow a short slice to ``threshold`` frames, alternating left then right.

    A side that hits the sequence boundary is skipped and the other side takes
    the step instead. Returns the half-open window ``(start, end)``.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    start, end = sl.start, sl.end
    target = min(threshold, n_frames)
    left_turn = True
    while end - start < target:
        if left_turn:
            if start > 0:
                start -= 1
            else:
                end += 1
        else:
            if end < n_frames:
                end += 1
            else:
                start -= 1
        left_turn = not left_turn
    return start, end


def contribution_weights(window_labels, slice_labels, sigma_floor: float = 0.0) -> np.ndarray:
    """Normalized Gaussian density of each window label around the slice's label mean.

    The density is centred on the mean label of the original slice and scaled
    by the population standard deviation of the extended window, floored at
    ``sigma_floor``.
    """
    y = np.asarray(window_labels, dtype=float)
    if y.size == 0:
        raise ValueError("empty window")
    mu = float(np.mean(slice_labels))
    sigma = max(float(np.std(y)), float(sigma_floor))
    if sigma == 0.0:
        return np.full(y.size, 1.0 / y.size)
    z2 = ((y - mu) / sigma) ** 2
    # normalizing constant of the density cancels; shift keeps exp() from underflowing
    p = np.exp(-0.5 * (z2 - z2.min()))
    return p / p.sum()


def estimate_normal(window_features, c) -> FeatureNormal:
    f = np.asarray(window_features, dtype=float)
    if f.ndim == 1:
        f = f.reshape(-1, 1)
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.shape[0] != f.shape[0]:
        raise ValueError(f"weight count {c.shape} does not match feature rows {f.shape[0]}")
    if abs(c.sum() - 1.0) > 1e-9:
        raise ValueError(f"contribution weights must sum to 1, got {c.sum()!r}")
    mean = c @ f
    centered = f - mean
    cov = (centered * c[:, None]).T @ centered
    cov = 0.5 * (cov + cov.T)
    d = f.shape[1]
    reg = max(1e-8, 1e-6 * float(np.trace(cov)) / d)
    return FeatureNormal(mean, cov, reg, diagonal_only=f.shape[0] < d)


def sample_features(normal: FeatureNormal, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be >= 0")
    d = normal.dim
    if count == 0:
        return np.empty((0, d))
    try:
        chol = np.linalg.cholesky(normal.covariance)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"degenerate covariance (regularization {normal.reg:g})") from exc
    z = rng.standard_normal((count, d))
    return normal.mean + z @ chol.T


def assign_and_insert(sequence: Sequence, new_features, sl: TimeSlice) -> List[SyntheticFrame]:
    """Label each new feature from its Euclidean-nearest original frame in the slice."""
    if sl.length < 1:
        raise ValueError("empty slice")
    new = np.asarray(new_features, dtype=float).reshape(-1, sequence.dim)
    originals = sequence.features[sl.start : sl.end]
    out = []
    for feat in new:
        dist = np.sum((originals - feat) ** 2, axis=1)
        # argmin returns the first minimum, i.e. the lower frame index on ties
        k = sl.start + int(np.argmin(dist))
        utopia = None if sequence.utopia is None else float(sequence.utopia[k])
        out.append(SyntheticFrame(feat, float(sequence.labels[k]), utopia, k + 1, sl, k))
    return out


def augment_sequence(
    sequence: Sequence,
    plan: AugmentationPlan,
    threshold: int = 10,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
    missing_bins: str = "error",
) -> AugmentResult:
    """Insert synthetic frames so each bin reaches its planned count.

    ``missing_bins`` controls bins that need new frames but hold none in this
    sequence: ``"error"`` raises, ``"skip"`` leaves them unfilled.
    """
    if missing_bins not in ("error", "skip"):
        raise ValueError(f"missing_bins must be 'error' or 'skip', got {missing_bins!r}")
    binning = plan.binning
    if rng is None:
        rng = sequence_rng(seed, sequence.seq_id)
    m = len(sequence)
    bins = binning.index(np.clip(sequence.labels, binning.label_min, binning.label_max))
    q = plan.oversample
    sigma_floor = binning.bin_width / 2.0

    frames: List[SyntheticFrame] = []
    windows = []
    for b in np.flatnonzero(q > 0):
        b = int(b)
        mask = bins == b
        if not mask.any():
            if missing_bins == "error":
                raise DataError(
                    f"plan asks for {q[b]} new frames at bin {b} but sequence "
                    f"{sequence.seq_id!r} has none there"
                )
            log.debug("skipping empty bin %d in %s", b, sequence.seq_id)
            continue
        slice_set = _slices_from_mask(sequence.seq_id, mask, b)
        per_slice = allocate_slices(slice_set, int(q[b]), rng)
        for sl, k in zip(slice_set.slices, per_slice):
            if k == 0:
                continue
            lo, hi = extend_slice(m, sl, threshold)
            c = contribution_weights(
                sequence.labels[lo:hi], sequence.labels[sl.start : sl.end], sigma_floor
            )
            normal = estimate_normal(sequence.features[lo:hi], c)
            feats = sample_features(normal, int(k), rng)
            new = assign_and_insert(sequence, feats, sl)
            frames.extend(new)
            windows.extend([(lo, hi)] * len(new))

    if not frames:
        return AugmentResult(sequence, [], np.arange(m))

    # group synthetic frames after their matched original, keeping generation order
    after = {}
    for idx, fr in enumerate(frames):
        after.setdefault(fr.insert_position, []).append(idx)

    order_feats, order_labels, order_utopia = [], [], []
    original_positions = np.empty(m, dtype=np.int64)
    out_pos = {}
    pos = 0
    for i in range(m):
        original_positions[i] = pos
        order_feats.append(sequence.features[i])
        order_labels.append(sequence.labels[i])
        if sequence.utopia is not None:
            order_utopia.append(sequence.utopia[i])
        pos += 1
        for idx in after.get(i + 1, ()):
            fr = frames[idx]
            out_pos[idx] = pos
            order_feats.append(fr.feature)
            order_labels.append(fr.label)
            if sequence.utopia is not None:
                order_utopia.append(fr.utopia)
            pos += 1

    augmented = Sequence(
        sequence.seq_id,
        np.arange(pos),
        np.array(order_labels),
        np.vstack(order_feats),
        np.array(order_utopia) if sequence.utopia is not None else None,
    )
    provenance = []
    for idx, fr in enumerate(frames):
        lo, hi = windows[idx]
        provenance.append(
            {
                "sequence_id": sequence.seq_id,
                "bin": fr.slice.bin_index,
                "slice": [fr.slice.start, fr.slice.end],
                "window": [lo, hi],
                "matched_frame": fr.matched_index,
                "insert_position": out_pos[idx],
                "label": fr.label,
                "seed": int(seed),
            }
        )
    provenance.sort(key=lambda r: r["insert_position"])
    return AugmentResult(augmented, provenance, original_positions)
