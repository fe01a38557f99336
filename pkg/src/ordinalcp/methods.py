"""Prediction-set constructions over ordinal class probabilities.

Every method here follows one convention: it assigns each candidate label a
per-example score in [0, 1] (smaller = more typical), and its set at
threshold ``lam`` contains exactly the labels whose score is <= ``lam``.
The families are therefore nested in ``lam``, which is what makes a single
split-conformal calibration routine work for all of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (
    LabelInterval,
    LabelSubset,
    argmax_label,
    as_score_vector,
    is_full,
)

# Scores are sums of renormalized probabilities and may drift past [0, 1] by
# a few ulps; thresholds inherit that drift through calibration.
_THRESHOLD_SLACK = 1e-9


class Method(str, Enum):
    """Prediction-set constructions selectable at calibration time."""

    APS = "aps"
    APS_EXACT = "aps_exact"
    LAC = "lac"
    CDF = "cdf"

    @property
    def contiguous(self) -> bool:
        """Whether the method always emits an interval of labels."""
        return self is not Method.LAC


#: Methods accepted by calibration. The exact minimum-width interval search
#: is exposed for diagnostics only; the greedy construction is the one whose
#: nestedness is airtight, so it is the one that gets calibrated.
CALIBRATABLE_METHODS = (Method.APS, Method.LAC, Method.CDF)


def _check_threshold(lam: float) -> float:
    lam = float(lam)
    if is_full(lam):
        return lam
    if math.isnan(lam) or lam < -_THRESHOLD_SLACK or lam > 1.0 + _THRESHOLD_SLACK:
        raise ValueError(f"threshold must lie in [0, 1] or be FULL, got {lam!r}")
    return lam


def _check_label(y: int, k: int) -> int:
    y = int(y)
    if not 0 <= y < k:
        raise ValueError(f"label {y} outside 0..{k - 1}")
    return y


@dataclass(frozen=True)
class GreedyTrace:
    """Full expansion record of the greedy interval construction.

    ``order`` lists labels in inclusion order, starting at the argmax.
    ``cum_mass_before[y]`` is the probability mass accumulated strictly
    before label ``y`` joins, so the greedy set at threshold ``lam`` is
    exactly the span of ``{y : cum_mass_before[y] <= lam}`` (the argmax,
    at mass 0, is always in). Entries are non-decreasing along ``order``.
    """

    order: tuple[int, ...]
    cum_mass_before: tuple[float, ...]  # indexed by label


def greedy_trace(probs) -> GreedyTrace:
    """Run the greedy expansion to exhaustion and record inclusion thresholds.

    Starting from the argmax label with running mass q = probs[argmax], the
    expansion repeatedly absorbs whichever in-range neighbor of the current
    interval carries more mass (ties expand toward the lower label), adding
    that mass to q. The mass q observed just before a label joins is its
    inclusion threshold.
    """
    f = as_score_vector(probs)
    k = f.shape[0]
    y_hat = argmax_label(f)
    lo = hi = y_hat
    q = float(f[y_hat])
    order = [y_hat]
    thresholds = [0.0] * k
    while lo > 0 or hi < k - 1:
        if lo == 0:
            nxt = hi + 1
        elif hi == k - 1:
            nxt = lo - 1
        elif f[lo - 1] >= f[hi + 1]:
            nxt = lo - 1
        else:
            nxt = hi + 1
        thresholds[nxt] = q
        q += float(f[nxt])
        order.append(nxt)
        if nxt < lo:
            lo = nxt
        else:
            hi = nxt
    return GreedyTrace(tuple(order), tuple(thresholds))


def aps_score(probs, y: int) -> float:
    """Minimal threshold at which label ``y`` enters the greedy interval."""
    trace = greedy_trace(probs)
    return trace.cum_mass_before[_check_label(y, len(trace.cum_mass_before))]


def greedy_interval(probs, lam: float) -> LabelInterval:
    """Greedy contiguous prediction set at threshold ``lam``.

    Always contains the argmax label; FULL yields the complete label range.
    """
    lam = _check_threshold(lam)
    trace = greedy_trace(probs)
    k = len(trace.cum_mass_before)
    if is_full(lam):
        return LabelInterval(0, k - 1)
    lo = hi = trace.order[0]
    for y, t in enumerate(trace.cum_mass_before):
        if t <= lam:
            lo = min(lo, y)
            hi = max(hi, y)
    return LabelInterval(lo, hi)


def exact_interval(probs, lam: float) -> LabelInterval:
    """Minimum-width contiguous interval whose mass reaches ``lam``.

    Brute-forces all O(K^2) intervals. Ties on width prefer larger mass,
    then the lower left endpoint. If no interval reaches ``lam`` (possible
    at lam=1.0 when the renormalized total lands an ulp below 1), the full
    label range is returned. Diagnostic counterpart to
    :func:`greedy_interval`; it is not accepted for calibration.
    """
    lam = _check_threshold(lam)
    f = as_score_vector(probs)
    k = f.shape[0]
    if is_full(lam):
        return LabelInterval(0, k - 1)
    csum = np.concatenate(([0.0], np.cumsum(f)))
    best = None  # (width, -mass, lo): tuple order implements the tie rules
    for width in range(1, k + 1):
        for lo in range(0, k - width + 1):
            mass = float(csum[lo + width] - csum[lo])
            if mass >= lam:
                cand = (width, -mass, lo)
                if best is None or cand < best:
                    best = cand
        if best is not None:
            break
    if best is None:
        return LabelInterval(0, k - 1)
    width, _, lo = best
    return LabelInterval(lo, lo + width - 1)


def lac_score(probs, y: int) -> float:
    """1 - probs[y]: larger = more surprising, matching score <= lam inclusion."""
    f = as_score_vector(probs)
    return float(1.0 - f[_check_label(y, f.shape[0])])


def lac_set(probs, lam: float) -> LabelSubset:
    """Labels whose probability reaches 1 - ``lam``; may be empty or gapped.

    This is the raw thresholded family. Calibrated prediction replaces an
    empty result with the argmax singleton; the raw form is kept exact here
    so that membership coincides with ``lac_score(probs, y) <= lam``.
    """
    lam = _check_threshold(lam)
    f = as_score_vector(probs)
    k = f.shape[0]
    if is_full(lam):
        return LabelSubset(frozenset(range(k)))
    return LabelSubset(frozenset(int(y) for y in np.flatnonzero(1.0 - f <= lam)))


def _cdf_score_matrix(pm: np.ndarray) -> np.ndarray:
    """Per-label quantile-inflation scores for each row of ``pm``."""
    n, k = pm.shape
    rows = np.arange(n)
    csum = np.cumsum(pm, axis=1)
    prev = np.concatenate((np.zeros((n, 1)), csum[:, :-1]), axis=1)
    y_hat = np.argmax(pm, axis=1)
    lower_gap = prev[rows, y_hat][:, None] - prev
    upper_gap = csum - csum[rows, y_hat][:, None]
    return np.maximum(np.maximum(lower_gap, upper_gap), 0.0)


def cdf_label_scores(probs) -> np.ndarray:
    """Scores for the cumulative-distribution construction, one per label.

    With F the cumulative mass and y_hat the argmax label, the score of y is
    the amount the interval [F(y_hat - 1), F(y_hat)] must be inflated on both
    sides, in quantile space, before it touches y's own cumulative span:
    max(F(y_hat - 1) - F(y - 1), F(y) - F(y_hat), 0). Zero at the argmax,
    monotone away from it, hence contiguous sets.
    """
    f = as_score_vector(probs)
    return _cdf_score_matrix(f[None, :])[0]


def cdf_score(probs, y: int) -> float:
    scores = cdf_label_scores(probs)
    return float(scores[_check_label(y, scores.shape[0])])


def cdf_interval(probs, lam: float) -> LabelInterval:
    """Contiguous set of labels whose quantile-inflation score is <= ``lam``."""
    lam = _check_threshold(lam)
    scores = cdf_label_scores(probs)
    k = scores.shape[0]
    if is_full(lam):
        return LabelInterval(0, k - 1)
    members = np.flatnonzero(scores <= lam)
    y_hat = argmax_label(probs)
    if members.size == 0:
        return LabelInterval(y_hat, y_hat)
    return LabelInterval(min(int(members[0]), y_hat), max(int(members[-1]), y_hat))


def _aps_threshold_matrix(pm: np.ndarray) -> np.ndarray:
    """Greedy inclusion thresholds for each row of ``pm``, vectorized.

    Row-for-row identical (bit-exact) to :func:`greedy_trace`: the same
    neighbor comparisons and the same float accumulation order.
    """
    n, k = pm.shape
    rows = np.arange(n)
    lo = np.argmax(pm, axis=1)
    hi = lo.copy()
    q = pm[rows, lo].astype(float)
    thr = np.zeros((n, k))
    for _ in range(k - 1):
        lo_p = np.where(lo > 0, pm[rows, np.maximum(lo - 1, 0)], -np.inf)
        hi_p = np.where(hi < k - 1, pm[rows, np.minimum(hi + 1, k - 1)], -np.inf)
        go_lo = lo_p >= hi_p
        nxt = np.where(go_lo, lo - 1, hi + 1)
        thr[rows, nxt] = q
        q = q + pm[rows, nxt]
        lo = np.where(go_lo, nxt, lo)
        hi = np.where(go_lo, hi, nxt)
    return thr


def label_scores(method: Method, probs) -> np.ndarray:
    """K-vector of per-label conformal scores for one probability vector."""
    method = Method(method)
    if method is Method.APS:
        return np.asarray(greedy_trace(probs).cum_mass_before)
    if method is Method.LAC:
        return 1.0 - as_score_vector(probs)
    if method is Method.CDF:
        return cdf_label_scores(probs)
    raise ValueError(f"{method.value} has no score function; it is diagnostic-only")


def label_scores_batch(method: Method, pm: np.ndarray) -> np.ndarray:
    """(n, K) score matrix for pre-validated probability rows.

    Bulk counterpart of :func:`label_scores` used by calibration and the
    trial harness; rows must already be normalized probability vectors.
    """
    method = Method(method)
    pm = np.asarray(pm, dtype=float)
    if pm.ndim != 2:
        raise ValueError(f"expected a 2-D probability matrix, got shape {pm.shape}")
    if method is Method.APS:
        return _aps_threshold_matrix(pm)
    if method is Method.LAC:
        return 1.0 - pm
    if method is Method.CDF:
        return _cdf_score_matrix(pm)
    raise ValueError(f"{method.value} has no score function; it is diagnostic-only")


def prediction_set(method: Method, probs, lam: float):
    """Raw prediction set of ``method`` at threshold ``lam``.

    Returns a :class:`LabelInterval` for the contiguous constructions and a
    :class:`LabelSubset` for LAC (which may be empty here; the calibrated
    predictor applies the argmax fallback).
    """
    method = Method(method)
    if method is Method.APS:
        return greedy_interval(probs, lam)
    if method is Method.LAC:
        return lac_set(probs, lam)
    if method is Method.CDF:
        return cdf_interval(probs, lam)
    raise ValueError(
        f"{method.value} is diagnostic-only; use exact_interval() directly"
    )
