"""Coverage and set-size evaluation: multi-trial protocol, stratification,
per-patient uncertainty flagging, and an exact 2x2 enrichment test.

The trial harness repeats a patient-level split / calibrate / predict cycle
and aggregates coverage and set size (mean and population standard deviation
across trials), optionally stratified by true class, emitted set size, or a
group tag. Trials share splits across methods and alpha values so that
method comparisons are paired.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .calibrate import check_alpha, conformal_quantile
from .core import GradingRecord
from .data import Dataset, split_by_patient
from .methods import Method, label_scores_batch


@dataclass(frozen=True)
class StratumStats:
    """Coverage, mean set size, and membership count for one stratum cell."""

    coverage: float
    mean_size: float
    count: int


@dataclass(frozen=True)
class StratumSummary:
    """One stratum cell aggregated across trials.

    ``n_trials`` counts the trials in which the cell was non-empty; means and
    standard deviations are taken over exactly those trials.
    """

    coverage_mean: float
    coverage_std: float
    size_mean: float
    size_std: float
    count_mean: float
    n_trials: int


@dataclass(frozen=True, eq=False)
class TrialReport:
    """Per-trial coverage/set-size series for one (method, alpha) cell."""

    method: Method
    alpha: float
    coverages: np.ndarray
    mean_sizes: np.ndarray
    eval_counts: np.ndarray
    strata: Mapping[str, Mapping[object, StratumSummary]]

    @property
    def n_trials(self) -> int:
        return int(self.coverages.shape[0])

    @property
    def coverage_mean(self) -> float:
        return float(self.coverages.mean())

    @property
    def coverage_std(self) -> float:
        return float(self.coverages.std())

    @property
    def size_mean(self) -> float:
        return float(self.mean_sizes.mean())

    @property
    def size_std(self) -> float:
        return float(self.mean_sizes.std())


@dataclass(frozen=True)
class PatientUncertainty:
    """A patient's uncertainty score: mean set size over their gradings."""

    patient_id: str
    mean_set_size: float
    n_gradings: int


def empirical_coverage(sets: Sequence, labels: Sequence[int]) -> float:
    """Fraction of prediction sets containing their true label."""
    sets = list(sets)
    labels = list(labels)
    if len(sets) != len(labels):
        raise ValueError(f"{len(sets)} sets vs {len(labels)} labels")
    if not sets:
        raise ValueError("nothing to evaluate")
    covered = sum(1 for s, y in zip(sets, labels) if y in s)
    return covered / len(sets)


def mean_set_size(sets: Sequence) -> float:
    """Arithmetic mean of prediction-set sizes."""
    sets = list(sets)
    if not sets:
        raise ValueError("nothing to evaluate")
    return sum(s.size for s in sets) / len(sets)


def _check_strata_name(strata: str) -> str:
    if strata in ("true_class", "set_size"):
        return strata
    if strata.startswith("group:") and len(strata) > len("group:"):
        return strata
    raise ValueError(
        f"unknown stratification {strata!r}; "
        "expected true_class, set_size, or group:<tag>"
    )


def _group_keys(records: Sequence[GradingRecord], tag: str) -> np.ndarray:
    values = []
    for r in records:
        try:
            values.append(r.group[tag])
        except KeyError:
            raise ValueError(
                f"unknown group tag {tag!r} (patient {r.patient_id})"
            ) from None
    return np.array(values, dtype=object)


def _cells(keys: np.ndarray, covered: np.ndarray, sizes: np.ndarray) -> dict:
    out = {}
    for key in np.unique(keys):
        mask = keys == key
        pykey = str(key) if keys.dtype == object else int(key)
        out[pykey] = StratumStats(
            coverage=float(covered[mask].mean()),
            mean_size=float(sizes[mask].mean()),
            count=int(mask.sum()),
        )
    return out


def stratified_report(
    sets: Sequence,
    records: Sequence[GradingRecord],
    strata: str,
) -> dict:
    """Coverage/size/count per stratum cell; empty cells are omitted.

    ``strata`` is ``true_class``, ``set_size``, or ``group:<tag>``. Keys are
    label or size integers, or group-tag strings. The count-weighted mean of
    the cell coverages always reproduces the overall coverage exactly.
    """
    strata = _check_strata_name(strata)
    sets = list(sets)
    records = list(records)
    if len(sets) != len(records):
        raise ValueError(f"{len(sets)} sets vs {len(records)} records")
    if not sets:
        raise ValueError("nothing to evaluate")
    covered = np.fromiter(
        (r.label in s for s, r in zip(sets, records)), dtype=bool, count=len(sets)
    )
    sizes = np.fromiter((s.size for s in sets), dtype=np.intp, count=len(sets))
    if strata == "true_class":
        keys = np.fromiter((r.label for r in records), dtype=np.intp, count=len(records))
    elif strata == "set_size":
        keys = sizes
    else:
        keys = _group_keys(records, strata[len("group:") :])
    return _cells(keys, covered, sizes)


# ---------------------------------------------------------------------------
# Multi-trial protocol


def _as_records(records) -> tuple:
    if isinstance(records, Dataset):
        return records.records
    return tuple(records)


def _arrays(records: Sequence[GradingRecord]):
    pm = np.stack([r.probs for r in records])
    labels = np.fromiter((r.label for r in records), dtype=np.intp, count=len(records))
    return pm, labels


def _one_trial(recs, methods, alphas, strata, cal_fraction, seed, t):
    # Trial t draws its split from SeedSequence entropy (seed, t): fixed,
    # documented mixing, so trials are independent and order-insensitive.
    cal, ev = split_by_patient(recs, cal_fraction, seed=(seed, t))
    if not cal or not ev:
        side = "calibration" if not cal else "evaluation"
        raise ValueError(
            f"trial {t} (seed {seed}): {side} split is empty; "
            f"adjust cal_fraction={cal_fraction}"
        )
    pm_cal, y_cal = _arrays(cal)
    pm_ev, y_ev = _arrays(ev)
    n_ev = len(ev)
    rows = np.arange(n_ev)
    argmax_ev = np.argmax(pm_ev, axis=1)
    group_keys = {
        s: _group_keys(ev, s[len("group:") :]) for s in strata if s.startswith("group:")
    }
    out = {}
    for method in methods:
        s_cal = label_scores_batch(method, pm_cal)[np.arange(len(cal)), y_cal]
        s_ev = label_scores_batch(method, pm_ev)
        for alpha in alphas:
            lam = conformal_quantile(s_cal, alpha)
            member = s_ev <= lam
            sizes = member.sum(axis=1)
            covered = member[rows, y_ev]
            if method is Method.LAC:
                empty = sizes == 0
                if empty.any():
                    covered = covered | (empty & (y_ev == argmax_ev))
                    sizes = np.where(empty, 1, sizes)
            cells = {}
            for s in strata:
                if s == "true_class":
                    keys = y_ev
                elif s == "set_size":
                    keys = sizes
                else:
                    keys = group_keys[s]
                cells[s] = _cells(keys, covered, sizes)
            out[(method, alpha)] = (
                float(covered.mean()),
                float(sizes.mean()),
                n_ev,
                cells,
            )
    return out


def _summarize_strata(per_trial_cells: Sequence[dict]) -> dict:
    summary = {}
    keys = _key_order({k for cells in per_trial_cells for k in cells})
    for key in keys:
        stats = [cells[key] for cells in per_trial_cells if key in cells]
        cov = np.array([s.coverage for s in stats])
        size = np.array([s.mean_size for s in stats])
        cnt = np.array([s.count for s in stats])
        summary[key] = StratumSummary(
            coverage_mean=float(cov.mean()),
            coverage_std=float(cov.std()),
            size_mean=float(size.mean()),
            size_std=float(size.std()),
            count_mean=float(cnt.mean()),
            n_trials=len(stats),
        )
    return summary


def run_trials(
    records,
    methods,
    alphas: Iterable[float],
    n_trials: int,
    cal_fraction: float,
    seed: int = 0,
    strata: Iterable[str] = (),
    workers: int = 1,
) -> dict:
    """Repeat split/calibrate/predict cycles and aggregate per (method, alpha).

    Parameters
    ----------
    records : Dataset or sequence of GradingRecord
        Gradings with patient ids; each trial splits them by whole patients.
    methods : Method, str, or sequence thereof
        Methods to calibrate; all share each trial's split (paired design).
    alphas : iterable of float
        Distinct miscoverage rates, each evaluated on the same trials.
    n_trials : int
        Number of random splits.
    cal_fraction : float
        Fraction of patients assigned to calibration (ceiling, at least one).
    seed : int
        Master seed; trial t derives its generator from entropy (seed, t).
    strata : iterable of str
        Optional stratifications (``true_class``, ``set_size``,
        ``group:<tag>``) aggregated per cell across trials.
    workers : int
        Thread count for running trials concurrently. Results are collected
        in trial order, so the output is identical for any worker count.

    Returns
    -------
    dict
        (Method, alpha) -> :class:`TrialReport`, in method-major order.
    """
    recs = _as_records(records)
    if not recs:
        raise ValueError("no records to evaluate")
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if isinstance(methods, (Method, str)):
        methods = [methods]
    methods = [Method(m) for m in methods]
    if len(set(methods)) != len(methods):
        raise ValueError("duplicate methods requested")
    if Method.APS_EXACT in methods:
        raise ValueError("exact variant is diagnostic-only; evaluate 'aps' instead")
    alphas = [check_alpha(a) for a in alphas]
    if len(set(alphas)) != len(alphas):
        raise ValueError("alpha grid entries must be distinct")
    if not alphas:
        raise ValueError("alpha grid is empty")
    strata = tuple(_check_strata_name(s) for s in strata)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")

    def job(t):
        return _one_trial(recs, methods, alphas, strata, cal_fraction, seed, t)

    if workers == 1:
        per_trial = [job(t) for t in range(n_trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(job, range(n_trials)))

    reports = {}
    for method in methods:
        for alpha in alphas:
            rows = [trial[(method, alpha)] for trial in per_trial]
            coverages = np.array([r[0] for r in rows])
            sizes = np.array([r[1] for r in rows])
            counts = np.array([r[2] for r in rows])
            strata_summary = {
                s: _summarize_strata([r[3][s] for r in rows]) for s in strata
            }
            reports[(method, alpha)] = TrialReport(
                method=method,
                alpha=alpha,
                coverages=coverages,
                mean_sizes=sizes,
                eval_counts=counts,
                strata=strata_summary,
            )
    return reports


# ---------------------------------------------------------------------------
# Uncertainty-based case flagging


def patient_uncertainty(
    sets: Sequence,
    records: Sequence[GradingRecord],
) -> list[PatientUncertainty]:
    """Rank patients by mean prediction-set size, most uncertain first.

    Ties break by patient id ascending so the ranking is deterministic.
    """
    sets = list(sets)
    records = list(records)
    if len(sets) != len(records):
        raise ValueError(f"{len(sets)} sets vs {len(records)} records")
    totals: dict = {}
    for s, r in zip(sets, records):
        size_sum, n = totals.get(r.patient_id, (0, 0))
        totals[r.patient_id] = (size_sum + s.size, n + 1)
    ranking = [
        PatientUncertainty(pid, size_sum / n, n)
        for pid, (size_sum, n) in totals.items()
    ]
    ranking.sort(key=lambda u: (-u.mean_set_size, u.patient_id))
    return ranking


def flag_top_k(ranking: Sequence[PatientUncertainty], k: int) -> set:
    """Ids of the k most uncertain patients in an existing ranking."""
    k = int(k)
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k > len(ranking):
        raise ValueError(f"k={k} exceeds the {len(ranking)} ranked patients")
    return {u.patient_id for u in ranking[:k]}


def fisher_exact_2x2(a: int, b: int, c: int, d: int) -> float:
    """Two-sided Fisher exact p-value for the contingency table [[a, b], [c, d]].

    Enumerates the hypergeometric support with exact integer weights and sums
    the probability of every table (same margins) whose point probability is
    at most the observed one. Ties are decided by exact integer comparison,
    so no floating-point slack is needed.
    """
    counts = []
    for name, x in zip("abcd", (a, b, c, d)):
        if x != int(x):
            raise ValueError(f"count {name} must be an integer, got {x!r}")
        x = int(x)
        if x < 0:
            raise ValueError(f"count {name} must be non-negative, got {x}")
        counts.append(x)
    a, b, c, d = counts
    n = a + b + c + d
    if n == 0:
        raise ValueError("all-zero table")
    r1 = a + b
    c1 = a + c
    lo = max(0, r1 - (n - c1))
    hi = min(r1, c1)
    w_obs = math.comb(c1, a) * math.comb(n - c1, b)
    numerator = 0
    for x in range(lo, hi + 1):
        w = math.comb(c1, x) * math.comb(n - c1, r1 - x)
        if w <= w_obs:
            numerator += w
    return float(Fraction(numerator, math.comb(n, r1)))


# ---------------------------------------------------------------------------
# Report rendering (machine CSV + aligned text table)


def _key_order(keys):
    return sorted(keys, key=lambda k: (isinstance(k, str), k))


def report_csv(
    reports: Mapping,
    *,
    n_trials: int,
    cal_fraction: float,
    seed: int,
) -> str:
    """Machine-readable report: one row per (method, alpha, stratum cell).

    Standard deviations are population (divide by the trial count); ``count``
    is the mean per-trial cell count; ``trials`` counts the trials in which
    the cell was non-empty. Floats use shortest round-trip form, so values
    parse back bit-identically and reruns are byte-identical.
    """
    lines = [
        "# ordinal prediction-set evaluation",
        f"# trials={n_trials} cal_fraction={cal_fraction!r} seed={seed}",
        "# std convention: population (divide by trial count); count: mean per-trial",
        "method,alpha,stratum,key,coverage_mean,coverage_std,size_mean,size_std,count,trials",
    ]

    def row(method, alpha, stratum, key, cm, cs, sm, ss, count, trials):
        lines.append(
            f"{method.value},{alpha!r},{stratum},{key},"
            f"{cm!r},{cs!r},{sm!r},{ss!r},{count!r},{trials}"
        )

    for (method, alpha), rep in reports.items():
        row(
            method, alpha, "overall", "",
            rep.coverage_mean, rep.coverage_std,
            rep.size_mean, rep.size_std,
            float(rep.eval_counts.mean()), rep.n_trials,
        )
        for strat, cells in rep.strata.items():
            for key in _key_order(cells):
                s = cells[key]
                row(
                    method, alpha, strat, key,
                    s.coverage_mean, s.coverage_std,
                    s.size_mean, s.size_std,
                    s.count_mean, s.n_trials,
                )
    return "\n".join(lines) + "\n"


def report_table(reports: Mapping) -> str:
    """Aligned text table: per alpha, rows are stratum cells x methods."""
    by_alpha: dict = {}
    for (method, alpha), rep in reports.items():
        by_alpha.setdefault(alpha, []).append((method, rep))

    out = []
    for alpha, entries in by_alpha.items():
        target = (1 - alpha) * 100
        out.append(f"alpha = {alpha:g}   (target coverage >= {target:g}%)")
        header = f"{'stratum':<12} {'key':<16} {'method':<6} {'coverage':>16} {'set size':>14}"
        out.append(header)
        out.append("-" * len(header))

        def emit(stratum, key, method, cm, cs, sm, ss):
            cov = f"{cm * 100.0:.1f}% ± {cs * 100.0:.1f}%"
            size = f"{sm:.2f} ± {ss:.2f}"
            out.append(
                f"{stratum:<12} {str(key):<16} {method.value:<6} {cov:>16} {size:>14}"
            )

        for method, rep in entries:
            emit("overall", "-", method, rep.coverage_mean, rep.coverage_std,
                 rep.size_mean, rep.size_std)
        strata_names = entries[0][1].strata.keys()
        for strat in strata_names:
            keys = _key_order(
                {k for _, rep in entries for k in rep.strata.get(strat, {})}
            )
            for key in keys:
                for method, rep in entries:
                    cell = rep.strata.get(strat, {}).get(key)
                    if cell is None:
                        continue
                    emit(strat, key, method, cell.coverage_mean, cell.coverage_std,
                         cell.size_mean, cell.size_std)
        out.append("")
    return "\n".join(out) + ("\n" if out else "")
