"""Dataset ingestion, synthetic benchmark generation, patient-level splits.

File format: UTF-8 CSV with a mandatory header ``patient_id,label,p0..p{K-1}``
followed by optional group-tag columns (for example ``disc_level,task``).
Probabilities are decimal literals, renormalized on load when their sum is
within 1e-6 of 1 and rejected otherwise. Synthetic datasets ship with a
hidden-truth sidecar holding the true conditional distribution per row.

All randomness flows through NumPy's default generator (PCG64 seeded via
SeedSequence), so a seed reproduces results within this codebase; bit
equality with other codebases is a non-goal.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import GradingRecord
from .calibrate import write_text_atomic

#: Tag values cycled onto synthetic gradings so that group stratification is
#: exercisable without real data: six lumbar disc levels, three grading tasks.
DISC_LEVELS = ("T12-L1", "L1-L2", "L2-L3", "L3-L4", "L4-L5", "L5-S1")
TASKS = ("central", "left-foraminal", "right-foraminal")


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable collection of gradings sharing one class count."""

    n_classes: int
    records: tuple
    provenance: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        for i, r in enumerate(self.records):
            if r.n_classes != self.n_classes:
                raise ValueError(
                    f"record {i} has {r.n_classes} classes, "
                    f"dataset declares {self.n_classes}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def patient_ids(self) -> tuple:
        """Distinct patient ids in order of first appearance."""
        return distinct_patients(self.records)


def distinct_patients(records: Sequence[GradingRecord]) -> tuple:
    seen = dict.fromkeys(r.patient_id for r in records)
    return tuple(seen)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic grading benchmark with known conditionals.

    Each grading draws a true conditional distribution from a Dirichlet with
    the given concentration, then a label from it. Emitted scores equal the
    true conditional when ``temperature`` is None (a perfectly calibrated
    model) or the conditional raised to 1/temperature and renormalized
    otherwise. ``shared_within_patient`` draws one conditional per patient
    instead of one per grading, creating within-patient correlation.
    """

    n_classes: int
    n_patients: int
    gradings_per_patient: int
    concentration: tuple
    temperature: float | None = None
    seed: int = 0
    shared_within_patient: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "concentration", tuple(float(c) for c in self.concentration)
        )
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if len(self.concentration) != self.n_classes:
            raise ValueError(
                f"concentration has {len(self.concentration)} entries, "
                f"expected {self.n_classes}"
            )
        if any(c <= 0 for c in self.concentration):
            raise ValueError("concentration entries must be positive")
        if self.n_patients < 1 or self.gradings_per_patient < 1:
            raise ValueError("need at least one patient and one grading each")
        if self.temperature is not None and not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature!r}")


def temperature_scale(probs, t: float) -> np.ndarray:
    """Flatten (t > 1) or sharpen (t < 1) a distribution: probs**(1/t), renormalized.

    Monotone in each entry, so the argmax label is preserved for every t > 0.
    """
    if not t > 0:
        raise ValueError(f"temperature must be positive, got {t!r}")
    f = np.asarray(probs, dtype=float)
    scaled = np.power(f, 1.0 / t)
    return scaled / scaled.sum(axis=-1, keepdims=True)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Generate a dataset plus the hidden true conditionals, row-aligned.

    Draw order is fixed (all conditionals first, then all labels) so a seed
    fully determines the output. Grading j of every patient carries group
    tags disc_level=DISC_LEVELS[j % 6], task=TASKS[(j // 6) % 3].
    """
    rng = np.random.default_rng(spec.seed)
    n_records = spec.n_patients * spec.gradings_per_patient
    if spec.shared_within_patient:
        per_patient = rng.dirichlet(spec.concentration, size=spec.n_patients)
        truths = np.repeat(per_patient, spec.gradings_per_patient, axis=0)
    else:
        truths = rng.dirichlet(spec.concentration, size=n_records)
    u = rng.random(n_records)
    labels = np.minimum(
        (np.cumsum(truths, axis=1) < u[:, None]).sum(axis=1), spec.n_classes - 1
    )
    if spec.temperature is None:
        scores = truths
    else:
        scores = temperature_scale(truths, spec.temperature)

    width = max(4, len(str(spec.n_patients - 1)))
    records = []
    idx = 0
    for p in range(spec.n_patients):
        pid = f"P{p:0{width}d}"
        for j in range(spec.gradings_per_patient):
            records.append(
                GradingRecord(
                    probs=scores[idx],
                    label=int(labels[idx]),
                    patient_id=pid,
                    group={
                        "disc_level": DISC_LEVELS[j % len(DISC_LEVELS)],
                        "task": TASKS[(j // len(DISC_LEVELS)) % len(TASKS)],
                    },
                )
            )
            idx += 1
    ds = Dataset(
        n_classes=spec.n_classes,
        records=tuple(records),
        provenance=f"synthetic:seed={spec.seed}",
    )
    truths = truths.copy()
    truths.setflags(write=False)
    return ds, truths


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_header(header: Sequence[str]):
    if len(header) < 2 or header[0] != "patient_id" or header[1] != "label":
        raise ValueError(
            "header must start with 'patient_id,label', got "
            + ",".join(header[:2])
        )
    k = 0
    while 2 + k < len(header) and header[2 + k] == f"p{k}":
        k += 1
    if k < 2:
        raise ValueError("header must declare probability columns p0, p1, ...")
    group_cols = list(header[2 + k :])
    for col in group_cols:
        if col.startswith("p") and col[1:].isdigit():
            raise ValueError(f"probability columns must be contiguous; found {col!r} after p{k - 1}")
    return k, group_cols


def load_records(path) -> Dataset:
    """Load a grading CSV; every parse error names the offending line.

    The class count is inferred from the p0..p{K-1} header columns; any
    trailing columns become group tags. Probability rows are renormalized
    within the ingestion tolerance and rejected beyond it.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _read_records(fh, provenance=f"file:{os.fspath(path)}")


def _read_records(fh, provenance: str) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty file: missing header row") from None
    k, group_cols = _parse_header([h.strip() for h in header])
    n_cols = 2 + k + len(group_cols)
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != n_cols:
            raise ValueError(f"line {lineno}: expected {n_cols} fields, got {len(row)}")
        pid = row[0].strip()
        if not pid:
            raise ValueError(f"line {lineno}: missing patient_id")
        try:
            label = int(row[1])
            probs = [float(x) for x in row[2 : 2 + k]]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        group = {
            col: row[2 + k + i].strip()
            for i, col in enumerate(group_cols)
            if row[2 + k + i].strip()
        }
        try:
            rec = GradingRecord(probs=probs, label=label, patient_id=pid, group=group)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        records.append(rec)
    if not records:
        raise ValueError("no data rows in file")
    return Dataset(n_classes=k, records=tuple(records), provenance=provenance)


def _group_columns(records: Sequence[GradingRecord]) -> list:
    cols = {}
    for r in records:
        for key in r.group:
            cols[key] = None
    return sorted(cols)


def records_to_csv(ds: Dataset) -> str:
    """Render a dataset in the load_records format, probabilities at 17 digits."""
    group_cols = _group_columns(ds.records)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["patient_id", "label"]
        + [f"p{i}" for i in range(ds.n_classes)]
        + group_cols
    )
    for r in ds.records:
        writer.writerow(
            [r.patient_id, r.label]
            + [f"{p:.17g}" for p in r.probs]
            + [r.group.get(col, "") for col in group_cols]
        )
    return buf.getvalue()


def save_records(ds: Dataset, path) -> None:
    write_text_atomic(path, records_to_csv(ds))


def truth_sidecar_path(path) -> str:
    """data.csv -> data.truth.csv (suffix inserted before the extension)."""
    base, ext = os.path.splitext(os.fspath(path))
    return f"{base}.truth{ext or '.csv'}"


def save_truths(ds: Dataset, truths: np.ndarray, path) -> None:
    """Write the hidden-truth sidecar: one true conditional per data row."""
    truths = np.asarray(truths, dtype=float)
    if truths.shape != (len(ds.records), ds.n_classes):
        raise ValueError(
            f"truths shape {truths.shape} does not match "
            f"({len(ds.records)}, {ds.n_classes})"
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["patient_id"] + [f"pi{i}" for i in range(ds.n_classes)])
    for r, row in zip(ds.records, truths):
        writer.writerow([r.patient_id] + [f"{p:.17g}" for p in row])
    write_text_atomic(path, buf.getvalue())


# ---------------------------------------------------------------------------
# Patient-level splitting


def split_by_patient(
    records: Dataset | Iterable[GradingRecord],
    cal_fraction: float,
    seed,
) -> tuple[tuple, tuple]:
    """Split gradings into (calibration, evaluation) by whole patients.

    The distinct patient list (first-appearance order) is shuffled with the
    seeded generator and the first ceil(cal_fraction * n_patients) patients'
    gradings form the calibration side, so no patient straddles the split.
    The ceiling guarantees at least one calibration patient.
    """
    if isinstance(records, Dataset):
        records = records.records
    recs = tuple(records)
    if not 0.0 < cal_fraction < 1.0:
        raise ValueError(f"cal_fraction must lie in (0, 1), got {cal_fraction!r}")
    patients = distinct_patients(recs)
    if len(patients) < 2:
        raise ValueError(f"need at least 2 distinct patients, got {len(patients)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(patients))
    n_cal = math.ceil(cal_fraction * len(patients))
    cal_ids = frozenset(patients[i] for i in order[:n_cal])
    cal = tuple(r for r in recs if r.patient_id in cal_ids)
    ev = tuple(r for r in recs if r.patient_id not in cal_ids)
    return cal, ev
