"""Synthetic corpora with a known utopia label curve and finite-annotator labels.

Each sequence gets a smooth latent curve (Gaussian-filtered white noise with
unit marginal variance) squashed into the label range; features are a fixed
random nonlinear embedding of the label plus isotropic noise. Observed labels
are the mean of ``n`` Gaussian votes around the true label, each vote clamped
to the label range.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import fftconvolve

from ulda.data import Sequence, SequenceDataset, sequence_rng
from ulda.label_dist import LabelBinning, LabelHistogram, bin_labels


@dataclass(frozen=True)
class SimConfig:
    sequence_count: int = 20
    frames_per_sequence: int = 200
    feature_dim: int = 8
    annotator_count: int = 3
    vote_std: float = 0.1
    label_min: float = -1.0
    label_max: float = 1.0
    smoothness: float = 15.0
    label_spread: float = 1.0
    feature_noise: float = 0.1
    clamp: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.annotator_count < 1:
            raise ValueError("annotator_count must be >= 1")
        if self.vote_std < 0:
            raise ValueError("vote_std must be >= 0")
        if self.frames_per_sequence < 2:
            raise ValueError("frames_per_sequence must be >= 2")
        if self.smoothness <= 0:
            raise ValueError("smoothness must be > 0")
        if self.sequence_count < 1 or self.feature_dim < 1:
            raise ValueError("sequence_count and feature_dim must be >= 1")
        if not self.label_min < self.label_max:
            raise ValueError("label_min must be < label_max")

    @property
    def label_range(self) -> tuple:
        return (float(self.label_min), float(self.label_max))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SyntheticCorpus:
    truth: SequenceDataset
    observed: SequenceDataset
    config: SimConfig

    def utopia_hists(self, binning: LabelBinning) -> list:
        return [utopia_distribution(s, binning) for s in self.truth]


def _smooth_curve(m: int, smoothness: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary unit-variance Gaussian process sample with a Gaussian correlation shape."""
    radius = int(np.ceil(4.0 * smoothness))
    x = np.arange(-radius, radius + 1)
    kernel = np.exp(-(x**2) / (2.0 * smoothness**2))
    kernel /= np.sqrt(np.sum(kernel**2))
    noise = rng.standard_normal(m + 2 * radius)
    if radius < 64:
        return np.convolve(noise, kernel, mode="valid")
    return fftconvolve(noise, kernel, mode="valid")


def _embedding(config: SimConfig):
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 0x9E37]))
    d = config.feature_dim
    scale = rng.uniform(0.5, 3.0, d) * rng.choice([-1.0, 1.0], d)
    shift = rng.uniform(-1.0, 1.0, d)
    return scale, shift


def embed_labels(labels, config: SimConfig) -> np.ndarray:
    """Noise-free features: coordinate-wise tanh of a random affine map of the label."""
    scale, shift = _embedding(config)
    y = np.asarray(labels, dtype=float)
    return np.tanh(np.outer(y, scale) + shift)


def generate_truth(config: SimConfig) -> SequenceDataset:
    lo, hi = config.label_range
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    seqs = []
    for k in range(config.sequence_count):
        seq_id = f"seq{k:03d}"
        rng = sequence_rng(config.seed, seq_id)
        z = _smooth_curve(config.frames_per_sequence, config.smoothness, rng)
        y = mid + half * np.tanh(config.label_spread * z)
        y = np.clip(y, lo, hi)
        f = embed_labels(y, config)
        f = f + config.feature_noise * rng.standard_normal(f.shape)
        seqs.append(Sequence(seq_id, np.arange(y.size), y, f, utopia=y.copy()))
    return SequenceDataset(tuple(seqs), config.label_range)


def annotate(
    truth: SequenceDataset,
    n: int,
    vote_std,
    rng: np.random.Generator,
    clamp: bool = True,
) -> SequenceDataset:
    """Replace every label with the mean of ``n`` noisy votes.

    ``vote_std`` may be a scalar or, per sequence, an array of per-frame
    standard deviations (a list aligned with ``truth``).
    """
    if n < 1:
        raise ValueError("need at least one annotator")
    lo, hi = truth.label_range
    out = []
    for i, seq in enumerate(truth):
        y = seq.utopia if seq.utopia is not None else seq.labels
        std = vote_std[i] if isinstance(vote_std, (list, tuple)) else vote_std
        std = np.broadcast_to(np.asarray(std, dtype=float), y.shape)
        if np.all(std == 0):
            observed = y.copy()
        else:
            votes = y[:, None] + std[:, None] * rng.standard_normal((y.size, n))
            if clamp:
                votes = np.clip(votes, lo, hi)
            observed = votes.mean(axis=1)
        out.append(Sequence(seq.seq_id, seq.t, observed, seq.features, utopia=y.copy()))
    return SequenceDataset(tuple(out), truth.label_range)


def simulate(config: SimConfig) -> SyntheticCorpus:
    truth = generate_truth(config)
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 0xA77]))
    observed = annotate(truth, config.annotator_count, config.vote_std, rng, clamp=config.clamp)
    return SyntheticCorpus(truth, observed, config)


def utopia_distribution(truth, binning: LabelBinning) -> LabelHistogram:
    """Histogram of true labels for one sequence, or summed over a dataset."""
    if isinstance(truth, Sequence):
        y = truth.utopia if truth.utopia is not None else truth.labels
        return bin_labels(y, binning, clamp=True)
    hists = [utopia_distribution(s, binning) for s in truth]
    total = hists[0]
    for h in hists[1:]:
        total = total + h
    return total


def repeated_annotations(y: float, n: int, vote_std: float, trials: int, rng: np.random.Generator,
                         label_range: tuple = (-1.0, 1.0)) -> np.ndarray:
    """Annotate one frame with true label ``y`` independently ``trials`` times."""
    frames = np.full(trials, float(y))
    seq = Sequence("frame", np.arange(trials), frames, np.zeros((trials, 1)), utopia=frames)
    truth = SequenceDataset((seq,), label_range)
    return annotate(truth, n, vote_std, rng)[0].labels
