"""Desk-scale evaluation: metrics, weighted regressors and the experiment runner.

The runner simulates a corpus, splits it by whole sequences, prepares the
training frames with each strategy (uniform weights, CWL weights, or TNS
augmentation followed by CWL weights), fits a weighted regressor and scores it
against the true labels of the held-out sequences.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from ulda.annotator_sim import SimConfig, simulate, utopia_distribution
from ulda.cwl import compute_cwl_weights, compute_weights, uniform_weights
from ulda.data import NumericError, Sequence, SequenceDataset
from ulda.label_dist import (
    DiscreteKernel,
    LabelBinning,
    LabelHistogram,
    bin_labels,
    build_kernel,
    convolve,
    make_plan,
)
from ulda.tns import augment_sequence

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- metrics

def mse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size < 1:
        raise ValueError("need at least one value")
    return float(np.mean((y - yhat) ** 2))


def pcc(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {yhat.shape}")
    if y.size < 2:
        raise ValueError("need at least two values")
    a = y - y.mean()
    b = yhat - yhat.mean()
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    if denom == 0.0:
        raise NumericError("degenerate correlation: zero variance input")
    return float(np.clip(np.sum(a * b) / denom, -1.0, 1.0))


def distribution_pcc(h1: LabelHistogram, h2: LabelHistogram) -> float:
    if h1.binning != h2.binning:
        raise ValueError("histograms use different binnings")
    return pcc(h1.counts, h2.counts)


# ------------------------------------------------------------- regressors

@dataclass(frozen=True, eq=False)
class LinearModel:
    coef: np.ndarray
    intercept: float = 0.0

    def predict(self, features) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.coef + self.intercept


def fit_weighted_ridge(features, labels, weights=None, penalty: float = 1.0,
                       fit_intercept: bool = True) -> LinearModel:
    """Closed-form minimizer of sum w_i (y_i - theta.f_i - b)^2 + penalty |theta|^2.

    Weights are rescaled to mean 1 first, so only their relative sizes matter.
    The intercept is not penalized.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    w = np.ones(y.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    if not (X.shape[0] == y.shape[0] == w.shape[0]):
        raise ValueError("features, labels and weights must have the same length")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with positive sum")
    w = w / w.mean()
    if fit_intercept:
        x_bar = (w @ X) / w.sum()
        y_bar = float(w @ y) / w.sum()
        Xc, yc = X - x_bar, y - y_bar
    else:
        Xc, yc = X, y
    A = (Xc * w[:, None]).T @ Xc + penalty * np.eye(X.shape[1])
    rhs = (Xc * w[:, None]).T @ yc
    if penalty == 0 and np.linalg.cond(A) > 1.0 / np.finfo(float).eps:
        raise NumericError("singular normal equations; use a positive ridge penalty")
    coef = np.linalg.solve(A, rhs)
    intercept = y_bar - float(x_bar @ coef) if fit_intercept else 0.0
    return LinearModel(coef, intercept)


@dataclass(frozen=True, eq=False)
class WeightedKNN:
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    k: int

    def predict(self, queries, chunk: int = 512) -> np.ndarray:
        Q = np.asarray(queries, dtype=float)
        if Q.ndim == 1:
            Q = Q.reshape(-1, self.features.shape[1])
        sq_train = np.sum(self.features**2, axis=1)
        out = np.empty(Q.shape[0])
        for s in range(0, Q.shape[0], chunk):
            q = Q[s : s + chunk]
            dist = np.sum(q**2, axis=1)[:, None] - 2.0 * q @ self.features.T + sq_train[None, :]
            # stable sort keeps the lower training index first on ties
            idx = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
            w = self.weights[idx]
            out[s : s + chunk] = np.sum(w * self.labels[idx], axis=1) / np.sum(w, axis=1)
        return out


def fit_weighted_knn(features, labels, weights=None, k: int = 10) -> WeightedKNN:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(labels, dtype=float)
    if y.size == 0:
        raise ValueError("empty training set")
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    if not 1 <= k <= y.size:
        raise ValueError(f"k must be in [1, {y.size}], got {k}")
    return WeightedKNN(X, y, w, int(k))


# ------------------------------------------------------- region analysis

def region_analysis(train_hist: LabelHistogram, per_bin_mse, threshold: float) -> dict:
    """Split bins into a high-count middle region II and low-count flanks I and III.

    Region II is the longest run of consecutive bins with count >= threshold
    (ties go to the run nearest the middle of the label range).
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    counts = train_hist.counts
    b = counts.size
    per_bin = np.asarray(per_bin_mse, dtype=float)
    if per_bin.shape != (b,):
        raise ValueError(f"per-bin MSE must have {b} entries")
    high = counts >= threshold
    if not high.any():
        warnings.warn("no bin reaches the region threshold; all bins assigned to region I")
        bounds = (b, b)
    else:
        padded = np.concatenate([[0], high.astype(np.int8), [0]])
        starts = np.flatnonzero(np.diff(padded) == 1)
        ends = np.flatnonzero(np.diff(padded) == -1)
        centre = (b - 1) / 2.0
        best = max(
            zip(starts, ends),
            key=lambda se: (se[1] - se[0], -abs((se[0] + se[1] - 1) / 2.0 - centre)),
        )
        bounds = (int(best[0]), int(best[1]))
    regions = {
        "I": list(range(0, bounds[0])),
        "II": list(range(bounds[0], bounds[1])),
        "III": list(range(bounds[1], b)),
    }
    summary = {}
    for name, bins in regions.items():
        vals = per_bin[bins] if bins else np.array([])
        vals = vals[np.isfinite(vals)]
        summary[name] = {
            "bins": [int(i) for i in bins],
            "mean_mse": float(vals.mean()) if vals.size else None,
            "mse_range": float(vals.max() - vals.min()) if vals.size else None,
        }
    summary["threshold"] = float(threshold)
    return summary


# -------------------------------------------------------------- strategies

@dataclass(frozen=True)
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    bins: int = 100
    kernel_size: float = 0.06
    kernel_sigma: float = 0.02
    threshold: int = 10
    regressor: str = "ridge"
    ridge_penalty: float = 1.0
    knn_k: int = 10
    repeats: int = 3
    train_fraction: float = 0.5
    region_threshold: float = 500.0
    region_fraction: Optional[float] = None
    strategies: tuple = ("baseline", "cwl", "tns+cwl")
    identity_kernel: bool = False
    seed: int = 0

    def binning(self) -> LabelBinning:
        return LabelBinning(self.sim.label_min, self.sim.label_max, self.bins)

    def kernel(self) -> DiscreteKernel:
        if self.identity_kernel:
            return DiscreteKernel.identity()
        return build_kernel(self.kernel_size, self.kernel_sigma, self.binning().bin_width)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategies"] = list(self.strategies)
        return d


@dataclass
class TrainingSet:
    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    frames_added: int = 0


# (train sequences, binning, kernel, seed, config) -> TrainingSet
Strategy = Callable[[SequenceDataset, LabelBinning, DiscreteKernel, int, ExperimentConfig], TrainingSet]


def _stack(seqs: List[Sequence], weights: List[np.ndarray], added: int = 0) -> TrainingSet:
    return TrainingSet(
        np.concatenate([s.features for s in seqs]),
        np.concatenate([s.labels for s in seqs]),
        np.concatenate(weights),
        added,
    )


def baseline_strategy(train, binning, kernel, seed, config) -> TrainingSet:
    seqs = list(train)
    return _stack(seqs, [uniform_weights(s).weights for s in seqs])


def _weighting_strategy(scheme: str) -> Strategy:
    def strategy(train, binning, kernel, seed, config) -> TrainingSet:
        seqs = list(train)
        weights = [
            compute_weights(scheme, s, bin_labels(s, binning, clamp=True), kernel).weights
            for s in seqs
        ]
        return _stack(seqs, weights)

    strategy.__name__ = f"{scheme}_strategy"
    return strategy


def tns_cwl_strategy(train, binning, kernel, seed, config) -> TrainingSet:
    """Augment each sequence toward its smoothed counts, then CWL-weight the result.

    Bins whose smoothed target exceeds the observed count but hold no frames
    cannot be filled by slice sampling and are skipped.
    """
    seqs, weights, added = [], [], 0
    for s in train:
        before = bin_labels(s, binning, clamp=True)
        after = convolve(before, kernel)
        plan = make_plan(before, after)
        res = augment_sequence(s, plan, config.threshold, seed=seed, missing_bins="skip")
        aug = res.sequence
        table = compute_cwl_weights(bin_labels(aug, binning, clamp=True), after, aug)
        seqs.append(aug)
        weights.append(table.weights)
        added += res.added
    return _stack(seqs, weights, added)


STRATEGIES: Dict[str, Strategy] = {
    "baseline": baseline_strategy,
    "cwl": _weighting_strategy("cwl"),
    "inv": _weighting_strategy("inv"),
    "lds": _weighting_strategy("lds"),
    "dense": _weighting_strategy("dense"),
    "tns+cwl": tns_cwl_strategy,
}


def register_strategy(name: str, fn: Strategy) -> None:
    """Make an extra data-preparation strategy (e.g. another oversampler) available by name."""
    STRATEGIES[name.lower()] = fn


# ------------------------------------------------------------------ runner

def _fit(config: ExperimentConfig, ts: TrainingSet):
    if config.regressor == "ridge":
        return fit_weighted_ridge(ts.features, ts.labels, ts.weights, config.ridge_penalty)
    if config.regressor == "knn":
        return fit_weighted_knn(ts.features, ts.labels, ts.weights, min(config.knn_k, ts.labels.size))
    raise ValueError(f"unknown regressor {config.regressor!r}")


def split_sequences(n: int, train_fraction: float, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    order = rng.permutation(n)
    n_train = min(max(1, int(round(train_fraction * n))), n - 1)
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def per_bin_errors(y_true, y_pred, binning: LabelBinning):
    """Mean, min and max of squared errors per true-label bin; NaN where empty."""
    err = (np.asarray(y_true) - np.asarray(y_pred)) ** 2
    idx = binning.index(np.clip(y_true, binning.label_min, binning.label_max))
    b = binning.bin_count
    mean, lo, hi = np.full(b, np.nan), np.full(b, np.nan), np.full(b, np.nan)
    for i in np.unique(idx):
        e = err[idx == i]
        mean[i], lo[i], hi[i] = e.mean(), e.min(), e.max()
    return mean, lo, hi


def _nan_to_none(values) -> list:
    return [None if not np.isfinite(v) else float(v) for v in values]


def run_single(config: ExperimentConfig, corpus_seed: int) -> dict:
    """One corpus: simulate, split, train every strategy and score on true test labels."""
    sim = replace(config.sim, seed=corpus_seed)
    corpus = simulate(sim)
    binning = config.binning()
    kernel = config.kernel()
    train_idx, test_idx = split_sequences(len(corpus.observed), config.train_fraction, corpus_seed)
    train = corpus.observed.subset(train_idx)
    test = corpus.observed.subset(test_idx)
    X_test, y_test = test.stacked(use_utopia=True)

    raw_train = sum((bin_labels(s, binning, clamp=True) for s in list(train)[1:]),
                    bin_labels(train[0], binning, clamp=True))
    conv_train = LabelHistogram(binning, sum(
        convolve(bin_labels(s, binning, clamp=True), kernel).counts for s in train))
    test_utopia = utopia_distribution(test, binning)

    record = {
        "seed": int(corpus_seed),
        "train_sequences": [train[i].seq_id for i in range(len(train))],
        "test_sequences": [test[i].seq_id for i in range(len(test))],
        "distribution_pcc": {
            "raw_train_vs_test": distribution_pcc(raw_train, test_utopia),
            "convolved_train_vs_test": distribution_pcc(conv_train, test_utopia),
        },
        "strategies": {},
    }
    threshold = config.region_threshold
    if config.region_fraction is not None:
        threshold = config.region_fraction * float(raw_train.counts.max())
    for name in config.strategies:
        ts = STRATEGIES[name.lower()](train, binning, kernel, corpus_seed, config)
        model = _fit(config, ts)
        pred = model.predict(X_test)
        bin_mean, bin_min, bin_max = per_bin_errors(y_test, pred, binning)
        bin_range = bin_max - bin_min
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            regions = region_analysis(raw_train, bin_mean, threshold)
        record["strategies"][name] = {
            "mse": mse(y_test, pred),
            "pcc": pcc(y_test, pred),
            "train_frames": int(ts.labels.size),
            "frames_added": int(ts.frames_added),
            "mean_bin_mse_range": float(np.nanmean(bin_range)),
            "per_bin_mse": _nan_to_none(bin_mean),
            "per_bin_mse_min": _nan_to_none(bin_min),
            "per_bin_mse_max": _nan_to_none(bin_max),
            "regions": regions,
        }
    record["train_hist"] = [float(c) for c in raw_train.counts]
    record["convolved_train_hist"] = [float(c) for c in conv_train.counts]
    record["test_utopia_hist"] = [float(c) for c in test_utopia.counts]
    return record


def summarize(records: List[dict], strategies) -> dict:
    out = {}
    for name in strategies:
        mses = np.array([r["strategies"][name]["mse"] for r in records])
        pccs = np.array([r["strategies"][name]["pcc"] for r in records])
        ranges = np.array([r["strategies"][name]["mean_bin_mse_range"] for r in records])
        out[name] = {
            "mse_mean": float(mses.mean()),
            "mse_std": float(mses.std()),
            "pcc_mean": float(pccs.mean()),
            "pcc_std": float(pccs.std()),
            "mean_bin_mse_range": float(ranges.mean()),
        }
    raw = np.array([r["distribution_pcc"]["raw_train_vs_test"] for r in records])
    conv = np.array([r["distribution_pcc"]["convolved_train_vs_test"] for r in records])
    out["distribution_pcc"] = {
        "raw_train_vs_test_mean": float(raw.mean()),
        "convolved_train_vs_test_mean": float(conv.mean()),
        "convolution_wins": int(np.sum(conv > raw)),
        "corpora": len(records),
    }
    if "baseline" in strategies:
        base = np.array([r["strategies"]["baseline"]["mse"] for r in records])
        for name in strategies:
            if name == "baseline":
                continue
            other = np.array([r["strategies"][name]["mse"] for r in records])
            out[name]["wins_vs_baseline"] = int(np.sum(other < base))
    return out


def run_experiment(config: ExperimentConfig) -> dict:
    """Average every strategy over ``repeats`` corpora seeded ``seed + repeat``."""
    for name in config.strategies:
        if name.lower() not in STRATEGIES:
            raise ValueError(f"unknown strategy {name!r}")
    records = []
    for r in range(config.repeats):
        seed = config.seed + r
        log.info("corpus %d/%d (seed %d)", r + 1, config.repeats, seed)
        records.append(run_single(config, seed))
    return {
        "config": config.to_dict(),
        "seed": int(config.seed),
        "summary": summarize(records, config.strategies),
        "runs": records,
    }
