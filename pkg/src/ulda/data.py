"""Sequence containers shared by every module."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence as Seq

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericError(ArithmeticError):
    """A numerical routine could not produce a usable result."""


@dataclass(frozen=True, eq=False)
class Sequence:
    """One time series: frame indices, observed labels, features, optional truth."""

    seq_id: str
    t: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    utopia: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=float)
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        m = labels.shape[0]
        if t.shape != (m,) or features.ndim != 2 or features.shape[0] != m:
            raise DataError(
                f"sequence {self.seq_id!r}: inconsistent lengths "
                f"(t={t.shape}, labels={labels.shape}, features={features.shape})"
            )
        if m > 1 and np.any(np.diff(t) <= 0):
            raise DataError(f"sequence {self.seq_id!r}: t must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)
        if self.utopia is not None:
            utopia = np.asarray(self.utopia, dtype=float)
            if utopia.shape != (m,):
                raise DataError(f"sequence {self.seq_id!r}: utopia labels have wrong length")
            object.__setattr__(self, "utopia", utopia)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def with_labels(self, labels) -> "Sequence":
        return replace(self, labels=np.asarray(labels, dtype=float))

    def equals(self, other: "Sequence") -> bool:
        if self.seq_id != other.seq_id:
            return False
        if (self.utopia is None) != (other.utopia is None):
            return False
        same = (
            np.array_equal(self.t, other.t)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )
        if self.utopia is not None:
            same = same and np.array_equal(self.utopia, other.utopia)
        return bool(same)


@dataclass(frozen=True, eq=False)
class SequenceDataset:
    """An ordered collection of sequences sharing feature dimension and label range."""

    sequences: tuple
    label_range: tuple = (-1.0, 1.0)
    dim: int = field(default=0)

    def __post_init__(self):
        seqs = tuple(self.sequences)
        object.__setattr__(self, "sequences", seqs)
        lo, hi = (float(v) for v in self.label_range)
        object.__setattr__(self, "label_range", (lo, hi))
        dims = {s.dim for s in seqs}
        if len(dims) > 1:
            raise DataError(f"inconsistent feature dimensions across corpus: {sorted(dims)}")
        if seqs:
            d = dims.pop()
            if self.dim and self.dim != d:
                raise DataError(f"declared d={self.dim} but sequences have d={d}")
            object.__setattr__(self, "dim", d)
        ids = [s.seq_id for s in seqs]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate sequence ids")

    def __iter__(self) -> Iterator[Sequence]:
        return iter(self.sequences)

    def __len__(self) -> int:
        return len(self.sequences)

    def __getitem__(self, i) -> Sequence:
        return self.sequences[i]

    def subset(self, indices: Seq[int]) -> "SequenceDataset":
        return replace(self, sequences=tuple(self.sequences[i] for i in indices))

    def stacked(self, use_utopia: bool = False):
        """Concatenate all frames into (features, labels)."""
        feats = np.concatenate([s.features for s in self.sequences], axis=0)
        if use_utopia:
            labels = np.concatenate([s.utopia for s in self.sequences])
        else:
            labels = np.concatenate([s.labels for s in self.sequences])
        return feats, labels

    def equals(self, other: "SequenceDataset") -> bool:
        return (
            self.label_range == other.label_range
            and self.dim == other.dim
            and len(self) == len(other)
            and all(a.equals(b) for a, b in zip(self, other))
        )


def sequence_rng(seed: int, seq_id: str) -> np.random.Generator:
    """Independent generator stream for one sequence, derived from (seed, id)."""
    key = zlib.crc32(seq_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
