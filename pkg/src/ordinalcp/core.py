"""Shared value types for ordinal prediction sets.

Labels are dense integers 0..K-1 with K declared once by the enclosing
dataset; probability vectors are validated and renormalized on ingestion.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

#: Threshold sentinel meaning "always emit the full label set". It compares
#: above every finite score, so thresholding code needs no special casing,
#: but it stays distinct from 1.0 on purpose: a threshold of exactly 1.0 does
#: not force the full set for every method.
FULL: float = math.inf

#: Probability rows whose sum is within this distance of 1 are renormalized;
#: anything further off is rejected as corrupt rather than silently fixed.
SUM_TOLERANCE: float = 1e-6

# Sums this close to 1 are float noise on an already-normalized row; dividing
# by them would perturb entries by an ulp and break save/load bit-fidelity.
_EXACT_SUM_EPS: float = 1e-12


def is_full(lam: float) -> bool:
    """True if ``lam`` is the always-full-set sentinel."""
    return math.isinf(lam) and lam > 0


def as_score_vector(probs) -> np.ndarray:
    """Validate a length-K class-probability vector and return it normalized.

    Entries must be finite and non-negative and sum to 1 within
    ``SUM_TOLERANCE``. The result is a read-only float64 array with unit sum;
    K must be at least 2.
    """
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"score vector must be 1-D, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise ValueError("score vector needs at least 2 classes")
    if not np.all(np.isfinite(arr)):
        raise ValueError("score vector entries must be finite")
    if np.any(arr < 0):
        raise ValueError("negative probability in score vector")
    total = float(arr.sum())
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ValueError(
            f"probabilities sum to {total!r}, expected 1 within {SUM_TOLERANCE}"
        )
    out = arr / total if abs(total - 1.0) > _EXACT_SUM_EPS else arr.copy()
    out.setflags(write=False)
    return out


def argmax_label(probs) -> int:
    """Label with the highest probability; ties break to the lowest label."""
    return int(np.argmax(np.asarray(probs)))


@dataclass(frozen=True, order=True)
class LabelInterval:
    """Contiguous label set {lo, ..., hi}, inclusive on both ends."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "hi", int(self.hi))
        if not 0 <= self.lo <= self.hi:
            raise ValueError(f"invalid label interval [{self.lo}, {self.hi}]")

    def __contains__(self, label: int) -> bool:
        return self.lo <= label <= self.hi

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.lo, self.hi + 1))

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class LabelSubset:
    """Arbitrary label set; unlike :class:`LabelInterval` it may have gaps."""

    members: frozenset

    def __post_init__(self) -> None:
        members = frozenset(int(y) for y in self.members)
        if any(y < 0 for y in members):
            raise ValueError("labels must be non-negative")
        object.__setattr__(self, "members", members)

    def __contains__(self, label: int) -> bool:
        return label in self.members

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.members))

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True, eq=False)
class GradingRecord:
    """One labeled grading: class probabilities, true label, patient, tags.

    ``group`` carries stratification tags such as ``disc_level`` or ``task``;
    ``patient_id`` must be non-empty because data splits operate per patient.
    """

    probs: np.ndarray
    label: int
    patient_id: str
    group: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", as_score_vector(self.probs))
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "group", dict(self.group))
        if not self.patient_id:
            raise ValueError("patient_id must be non-empty")
        k = self.probs.shape[0]
        if not 0 <= self.label < k:
            raise ValueError(f"label {self.label} outside 0..{k - 1}")

    @property
    def n_classes(self) -> int:
        return int(self.probs.shape[0])
