"""Split-conformal calibration: turn held-out gradings into a threshold.

The finite-sample rank ceil((n+1)(1-alpha)) over per-record scores yields a
threshold whose prediction sets contain the true label with probability at
least 1-alpha over exchangeable data, for any underlying model.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .core import (
    FULL,
    GradingRecord,
    LabelInterval,
    LabelSubset,
    argmax_label,
    as_score_vector,
    is_full,
)
from .methods import Method, label_scores_batch, prediction_set

_SCORE_SLACK = 1e-9  # per-label scores can drift past [0,1] by accumulated rounding


def check_alpha(alpha: float) -> float:
    """Validate a miscoverage rate, strictly inside (0, 1)."""
    alpha = float(alpha)
    if math.isnan(alpha) or not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly between 0 and 1, got {alpha!r}")
    return alpha


def quantile_rank(n: int, alpha: float) -> int:
    """ceil((n+1)(1-alpha)), reading alpha as the decimal it prints as.

    Computed in exact rational arithmetic: binary rounding of alpha can push
    (n+1)(1-alpha) across an integer boundary (n=19, alpha=0.15 is such a
    case), and a rank one too low would void the coverage guarantee.
    """
    if n < 1:
        raise ValueError("need at least one calibration score")
    return math.ceil((n + 1) * (1 - Fraction(str(check_alpha(alpha)))))


def conformal_quantile(scores, alpha: float) -> float:
    """The ceil((n+1)(1-alpha))-th smallest score, or FULL.

    Takes the order statistic over the multiset exactly (no interpolation,
    which would break the finite-sample guarantee). Returns FULL when the
    rank exceeds n: too few calibration points to certify 1-alpha coverage
    with anything short of the full label set.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1:
        raise ValueError(f"scores must be 1-D, got shape {s.shape}")
    n = s.shape[0]
    if n == 0:
        raise ValueError("empty calibration set")
    if not np.all(np.isfinite(s)):
        raise ValueError("calibration scores must be finite")
    if float(s.min()) < -_SCORE_SLACK or float(s.max()) > 1.0 + _SCORE_SLACK:
        raise ValueError("calibration scores must lie in [0, 1]")
    k = quantile_rank(n, alpha)
    if k > n:
        return FULL
    return float(np.partition(s, k - 1)[k - 1])


@dataclass(frozen=True)
class CalibratedPredictor:
    """A method tag plus its calibrated threshold, ready to emit sets."""

    method: Method
    lambda_hat: float
    alpha: float
    n_cal: int
    n_classes: int

    def predict(self, probs):
        """Prediction set for one probability vector.

        Never empty: a FULL threshold emits the complete label range, and an
        empty LAC set is replaced by the argmax singleton (enlarging a set
        cannot reduce coverage, and empty predictions are useless downstream).
        """
        f = as_score_vector(probs)
        if f.shape[0] != self.n_classes:
            raise ValueError(
                f"score vector has {f.shape[0]} classes, "
                f"calibrated for {self.n_classes}"
            )
        if is_full(self.lambda_hat):
            if self.method is Method.LAC:
                return LabelSubset(frozenset(range(self.n_classes)))
            return LabelInterval(0, self.n_classes - 1)
        out = prediction_set(self.method, f, self.lambda_hat)
        if self.method is Method.LAC and out.size == 0:
            return LabelSubset(frozenset({argmax_label(f)}))
        return out


def calibrate(
    method: Method | str,
    records: Iterable[GradingRecord],
    alpha: float,
) -> CalibratedPredictor:
    """Calibrate a prediction-set method on held-out gradings.

    Parameters
    ----------
    method : Method or str
        One of ``aps``, ``lac``, ``cdf``. The exact interval variant is
        rejected: it is a diagnostic and its nestedness is not guaranteed
        under ties, so only the greedy interval family gets calibrated.
    records : iterable of GradingRecord
        Gradings unseen by the underlying model, all with the same class
        count.
    alpha : float
        Target miscoverage rate in (0, 1).

    Returns
    -------
    CalibratedPredictor
        Carries the method, the calibrated threshold (or FULL), alpha, and
        the calibration size.
    """
    method = Method(method)
    if method is Method.APS_EXACT:
        raise ValueError("exact variant is diagnostic-only; calibrate 'aps' instead")
    alpha = check_alpha(alpha)
    recs = list(records)
    if not recs:
        raise ValueError("empty calibration set")
    k = recs[0].n_classes
    for i, r in enumerate(recs):
        if r.n_classes != k:
            raise ValueError(f"record {i} has {r.n_classes} classes, expected {k}")
    pm = np.stack([r.probs for r in recs])
    labels = np.fromiter((r.label for r in recs), dtype=np.intp, count=len(recs))
    scores = label_scores_batch(method, pm)[np.arange(len(recs)), labels]
    lam = conformal_quantile(scores, alpha)
    return CalibratedPredictor(method, lam, alpha, len(recs), k)


# ---------------------------------------------------------------------------
# Text serialization: fixed field order, 17 significant digits so thresholds
# round-trip bit-faithfully.

_FIELDS = ("method", "lambda_hat", "alpha", "n_cal", "n_classes")


def predictor_to_text(p: CalibratedPredictor) -> str:
    lam = "FULL" if is_full(p.lambda_hat) else f"{p.lambda_hat:.17g}"
    lines = (
        f"method={p.method.value}",
        f"lambda_hat={lam}",
        f"alpha={p.alpha!r}",
        f"n_cal={p.n_cal}",
        f"n_classes={p.n_classes}",
    )
    return "\n".join(lines) + "\n"


def predictor_from_text(text: str) -> CalibratedPredictor:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        values[key] = value
    missing = [f for f in _FIELDS if f not in values]
    if missing:
        raise ValueError(f"missing predictor fields: {', '.join(missing)}")
    lam = FULL if values["lambda_hat"] == "FULL" else float(values["lambda_hat"])
    return CalibratedPredictor(
        method=Method(values["method"]),
        lambda_hat=lam,
        alpha=check_alpha(float(values["alpha"])),
        n_cal=int(values["n_cal"]),
        n_classes=int(values["n_classes"]),
    )


def save_predictor(p: CalibratedPredictor, path) -> None:
    """Write a predictor atomically (temp file + rename)."""
    write_text_atomic(path, predictor_to_text(p))


def load_predictor(path) -> CalibratedPredictor:
    with open(path, "r", encoding="utf-8") as fh:
        return predictor_from_text(fh.read())


def write_text_atomic(path, text: str) -> None:
    """Write UTF-8 text so that a failed run never leaves a partial file."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
