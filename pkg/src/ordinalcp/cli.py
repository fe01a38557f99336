"""Command-line interface: calibrate, predict, evaluate, simulate, flag, fisher.

Thin adapters over the library; no statistics are computed here. Output files
are written to a temporary name and renamed on success, so a failed run never
leaves a partial artifact. Exit codes: 0 success, 1 usage error, 2 data or
validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

from .calibrate import (
    calibrate,
    load_predictor,
    save_predictor,
    write_text_atomic,
)
from .core import LabelInterval
from .data import (
    SyntheticSpec,
    generate_synthetic,
    load_records,
    save_records,
    save_truths,
    truth_sidecar_path,
)
from .evaluation import (
    empirical_coverage,
    fisher_exact_2x2,
    flag_top_k,
    mean_set_size,
    patient_uncertainty,
    report_csv,
    report_table,
    run_trials,
)
from .methods import Method

DEFAULT_ALPHA_GRID = "0.2,0.15,0.1,0.05,0.01"
DEFAULT_STRATA = "true_class,set_size"


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; data problems exit 2 (see main)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ordinalcp",
        description="Calibrated ordinal prediction sets with coverage guarantees.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="fit a threshold on a calibration dataset")
    p.add_argument("--input", required=True, help="calibration dataset CSV")
    p.add_argument("--method", required=True, choices=["aps", "lac", "cdf"])
    p.add_argument("--alpha", required=True, type=float, help="miscoverage rate")
    p.add_argument("--output", required=True, help="predictor file to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="emit prediction sets for a dataset")
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--predictor", required=True, help="saved predictor file")
    p.add_argument("--output", required=True, help="per-row sets CSV to write")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="multi-trial coverage/set-size report")
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--output", required=True, help="report prefix (writes .csv and .txt)")
    p.add_argument("--method", default="all", choices=["aps", "lac", "cdf", "all"])
    p.add_argument("--alpha-grid", default=DEFAULT_ALPHA_GRID, type=_floats,
                   help=f"comma-separated rates (default {DEFAULT_ALPHA_GRID})")
    p.add_argument("--trials", default=100, type=int)
    p.add_argument("--cal-fraction", default=0.05, type=float)
    p.add_argument("--seed", default=0, type=int)
    p.add_argument("--strata", default=DEFAULT_STRATA, type=_names,
                   help="comma-separated: true_class, set_size, group:<tag>")
    p.add_argument("--workers", default=1, type=int, help="threads across trials")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    p.add_argument("--output", required=True, help="dataset CSV to write (+ .truth sidecar)")
    p.add_argument("--classes", default=4, type=int)
    p.add_argument("--patients", default=500, type=int)
    p.add_argument("--gradings", default=12, type=int, help="gradings per patient")
    p.add_argument("--concentration", default="2,1,1,0.5", type=_floats,
                   help="Dirichlet concentration, one value per class")
    p.add_argument("--temperature", default=None, type=float,
                   help="miscalibrate scores by probs**(1/t); omit for none")
    p.add_argument("--seed", default=0, type=int)
    p.add_argument("--shared-patient", action="store_true",
                   help="one conditional per patient instead of per grading")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("flag", help="rank patients by uncertainty and flag the top k")
    p.add_argument("--input", required=True, help="dataset CSV")
    p.add_argument("--predictor", required=True, help="saved predictor file")
    p.add_argument("--k", required=True, type=int, help="number of patients to flag")
    p.add_argument("--output", required=True, help="ranking CSV to write")
    p.set_defaults(func=cmd_flag)

    p = sub.add_parser("fisher", help="two-sided Fisher exact test on a 2x2 table")
    p.add_argument("counts", nargs=4, type=int, metavar=("A", "B", "C", "D"))
    p.set_defaults(func=cmd_fisher)

    return parser


def cmd_calibrate(args) -> int:
    ds = load_records(args.input)
    pred = calibrate(args.method, ds.records, args.alpha)
    save_predictor(pred, args.output)
    lam = "FULL" if pred.lambda_hat == float("inf") else f"{pred.lambda_hat:.17g}"
    print(
        f"calibrated {pred.method.value} on {pred.n_cal} gradings "
        f"(K={pred.n_classes}, alpha={pred.alpha:g}): lambda_hat={lam}"
    )
    return 0


def _set_row(record, s):
    members = ";".join(str(y) for y in s)
    if isinstance(s, LabelInterval):
        lo, hi = s.lo, s.hi
    else:
        lo, hi = "", ""
    return [record.patient_id, record.label, lo, hi, members, s.size,
            int(record.label in s)]


def cmd_predict(args) -> int:
    ds = load_records(args.input)
    pred = load_predictor(args.predictor)
    sets = [pred.predict(r.probs) for r in ds.records]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["patient_id", "label", "set_lo", "set_hi", "set_members", "set_size", "covered"]
    )
    for r, s in zip(ds.records, sets):
        writer.writerow(_set_row(r, s))
    write_text_atomic(args.output, buf.getvalue())
    cov = empirical_coverage(sets, [r.label for r in ds.records])
    print(
        f"predicted {len(sets)} sets ({pred.method.value}, alpha={pred.alpha:g}): "
        f"coverage={cov:.4f} mean_size={mean_set_size(sets):.4f}"
    )
    return 0


def cmd_evaluate(args) -> int:
    ds = load_records(args.input)
    methods = [Method.APS, Method.LAC, Method.CDF] if args.method == "all" else [args.method]
    reports = run_trials(
        ds,
        methods,
        args.alpha_grid,
        n_trials=args.trials,
        cal_fraction=args.cal_fraction,
        seed=args.seed,
        strata=args.strata,
        workers=args.workers,
    )
    csv_path = f"{args.output}.csv"
    txt_path = f"{args.output}.txt"
    write_text_atomic(
        csv_path,
        report_csv(reports, n_trials=args.trials, cal_fraction=args.cal_fraction,
                   seed=args.seed),
    )
    write_text_atomic(txt_path, report_table(reports))
    print(f"evaluated {len(ds)} gradings over {args.trials} trials; "
          f"wrote {csv_path} and {txt_path}")
    return 0


def cmd_simulate(args) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes,
        n_patients=args.patients,
        gradings_per_patient=args.gradings,
        concentration=tuple(args.concentration),
        temperature=args.temperature,
        seed=args.seed,
        shared_within_patient=args.shared_patient,
    )
    ds, truths = generate_synthetic(spec)
    save_records(ds, args.output)
    sidecar = truth_sidecar_path(args.output)
    save_truths(ds, truths, sidecar)
    print(f"wrote {len(ds)} gradings for {args.patients} patients to {args.output} "
          f"(hidden truths: {sidecar})")
    return 0


def cmd_flag(args) -> int:
    ds = load_records(args.input)
    pred = load_predictor(args.predictor)
    sets = [pred.predict(r.probs) for r in ds.records]
    ranking = patient_uncertainty(sets, ds.records)
    flagged = flag_top_k(ranking, args.k)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rank", "patient_id", "mean_set_size", "n_gradings", "flagged"])
    for rank, u in enumerate(ranking, start=1):
        writer.writerow(
            [rank, u.patient_id, f"{u.mean_set_size:.17g}", u.n_gradings,
             int(u.patient_id in flagged)]
        )
    write_text_atomic(args.output, buf.getvalue())
    print(f"flagged {len(flagged)} of {len(ranking)} patients; wrote {args.output}")
    return 0


def cmd_fisher(args) -> int:
    p = fisher_exact_2x2(*args.counts)
    print(f"{p:.17g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"ordinalcp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
