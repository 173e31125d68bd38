"""Utopia label distribution approximation for subjective time-series regression."""

from ulda.data import Sequence, SequenceDataset
from ulda.label_dist import (
    AugmentationPlan,
    DiscreteKernel,
    LabelBinning,
    LabelHistogram,
    bin_labels,
    build_kernel,
    convolve,
    make_plan,
)

__all__ = [
    "AugmentationPlan",
    "DiscreteKernel",
    "LabelBinning",
    "LabelHistogram",
    "Sequence",
    "SequenceDataset",
    "bin_labels",
    "build_kernel",
    "convolve",
    "make_plan",
]

__version__ = "0.1.0"
