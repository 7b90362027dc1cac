"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 a condition required by a guarantee
fails, 3 data error (unreadable input, infeasible block count, ...).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .blocks import CONSTANTS, choose_block_count, make_regular_partition, mean_half_width, robust_mean
from .dictionary import build_histogram_dictionary, build_polynomial_dictionary, build_trigonometric_dictionary
from .errors import ConditionError, RobustMeanError
from .experiments import KINDS, run_coverage_experiment
from .lasso import lasso_weights, solve_lasso
from .mestimation import contrast_kullback_histogram, contrast_l2_density, contrast_l2_regression, select_m_estimator
from .mixing import select_m_estimator_mixing
from .selection import CandidateEstimator, ModelSpec, classical_penalty, label_partitions, robust_penalty, select, with_penalties

EXIT_OK, EXIT_USAGE, EXIT_CONDITION, EXIT_DATA = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class DataError(Exception):
    pass


def _read_csv(path: str | None, columns: int = 1) -> np.ndarray:
    if path is None:
        raise DataError("--input is required")
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path} is not a headerless numeric CSV: {exc}") from exc
    if data.size == 0:
        raise DataError(f"{path} contains no observations")
    if data.shape[1] != columns:
        raise DataError(f"{path} has {data.shape[1]} columns, expected {columns}")
    return data[:, 0] if columns == 1 else data


def _emit(args, record: dict, csv_rows: list[tuple] | None = None):
    if args.output == "csv":
        rows = csv_rows if csv_rows is not None else [tuple(record.keys()), tuple(record.values())]
        for row in rows:
            print(",".join(str(v) for v in row))
    else:
        print(json.dumps(record, indent=2))


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc


def _delta(args, default: float = 0.05) -> float:
    return args.delta if args.delta is not None else default


def _histogram(cells: int):
    return build_histogram_dictionary(np.linspace(0.0, 1.0, cells + 1))


def cmd_mean(args) -> int:
    x = _read_csv(args.input)
    delta = _delta(args)
    V = choose_block_count(delta, x.size, "mean")
    part = make_regular_partition(x.size, V)
    value = robust_mean(x, None, part).value
    width = mean_half_width(x, None, part)
    _emit(args, {"value": value, "V": V, "half_width": width, "n": int(x.size), "delta": delta})
    return EXIT_OK


def cmd_lasso(args) -> int:
    x = _read_csv(args.input)
    if args.basis == "histogram":
        dic = _histogram(args.size)
    else:
        dic = build_trigonometric_dictionary(args.size)
    problem = lasso_weights(x, dic, _delta(args))
    fit = solve_lasso(problem)
    record = {"V": problem.V, **fit.to_dict()}
    rows = [("label", "theta", "weight")] + [
        (lab, float(fit.theta_hat[j]), float(fit.weights[j])) for j, lab in enumerate(dic.labels)
    ]
    _emit(args, record, rows)
    return EXIT_OK


def cmd_select(args) -> int:
    x = _read_csv(args.input)
    delta = _delta(args)
    freqs = sorted({int(f) for f in args.frequencies.split(",")})
    dic = build_trigonometric_dictionary(max(freqs))
    menu = tuple(ModelSpec(f"freq<={f}", tuple(range(2 * f + 1)), 0.0, 1.0 + 2.0 * f) for f in freqs)
    emp = dic.evaluate(x).mean(axis=0)
    cands = []
    for f in freqs:
        coef = np.zeros(dic.M)
        coef[: 2 * f + 1] = emp[: 2 * f + 1]
        cands.append(CandidateEstimator(f"proj<={f}", coef, menu))
    if args.mode == "robust":
        parts = label_partitions(x.size, delta, range(dic.M))
        pens = {m.name: robust_penalty(m, x, dic, args.epsilon, parts) for m in menu}
        res = select(with_penalties(cands, pens), x, args.alpha, dic, "robust", partitions=parts)
    else:
        s_norm = float(np.linalg.norm(emp))
        pens = {m.name: classical_penalty(m, x, dic, delta, args.nu, 1.0 / len(menu), s_norm) for m in menu}
        res = select(with_penalties(cands, pens), x, args.alpha, dic, "classical")
    record = {**res.to_dict(), "penalties": pens}
    rows = [("candidate", "criterion", "model")] + [
        (name, cv.value, cv.model) for name, cv in zip(res.names, res.criteria)
    ]
    _emit(args, record, rows)
    return EXIT_OK


def _contrast(args, n: int):
    if args.contrast == "l2":
        return contrast_l2_density(_histogram(args.cells)), 1
    if args.contrast == "kullback":
        return contrast_kullback_histogram(np.linspace(0.0, 1.0, args.cells + 1), 1.0 / n), 1
    return contrast_l2_regression(build_polynomial_dictionary(args.degree)), 2


def _trace_rows(trace):
    return [("block", "worst_case", "selected")] + [
        (k, float(w), int(k == trace.K_star)) for k, w in enumerate(trace.worst_case)
    ]


def cmd_mselect(args) -> int:
    columns = 2 if args.contrast == "regression" else 1
    data = _read_csv(args.input, columns)
    contrast, _ = _contrast(args, data.shape[0])
    trace = select_m_estimator(data, contrast, _delta(args), V=args.blocks)
    _emit(args, trace.to_dict(), _trace_rows(trace))
    return EXIT_OK


def cmd_mixing(args) -> int:
    columns = 2 if args.contrast == "regression" else 1
    data = _read_csv(args.input, columns)
    contrast, _ = _contrast(args, data.shape[0])
    trace = select_m_estimator_mixing(data, contrast, _delta(args), V=args.blocks)
    _emit(args, trace.to_dict(), _trace_rows(trace))
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _load_config(args.config)
    if args.delta is not None:
        config["delta"] = args.delta
    reps = args.reps if args.reps is not None else int(config.get("reps", 1000))
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    config.pop("reps", None)
    config.pop("seed", None)
    report = run_coverage_experiment(args.kind, config, reps, seed, workers=args.workers, timing=args.timing)
    if args.output == "csv":
        sys.stdout.write(report.to_csv())
    else:
        print(report.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--delta", type=float, default=None, help="confidence level (default 0.05)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--reps", type=int, default=None)
    common.add_argument("--input", default=None, help="headerless CSV: one column, or x,y for regression")
    common.add_argument("--output", choices=("json", "csv"), default="json")
    common.add_argument("--config", default=None, help="JSON configuration file")

    parser = _Parser(prog="robustmean", description="Median-of-means estimation and selection tools")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mean", parents=[common], help="robust mean with its deviation half-width")
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("lasso", parents=[common], help="robust Lasso density estimate")
    p.add_argument("--basis", choices=("histogram", "trigonometric"), default="histogram")
    p.add_argument("--size", type=int, default=16, help="cells, or maximal frequency")
    p.set_defaults(func=cmd_lasso)

    p = sub.add_parser("select", parents=[common], help="select among trigonometric projection estimators")
    p.add_argument("--frequencies", default="0,1,2,4,8")
    p.add_argument("--mode", choices=("robust", "classical"), default="robust")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--nu", type=float, default=0.5)
    p.set_defaults(func=cmd_select)

    for name, func, helptext in (
        ("mselect", cmd_mselect, "argmin-max selection among block M-estimators"),
        ("mixing", cmd_mixing, "argmin-max selection for dependent data"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--contrast", choices=("l2", "kullback", "regression"), default="l2")
        p.add_argument("--cells", type=int, default=4)
        p.add_argument("--degree", type=int, default=1)
        p.add_argument("--blocks", type=int, default=None, help="override the block count")
        p.set_defaults(func=func)

    p = sub.add_parser("experiment", parents=[common], help="Monte Carlo coverage experiment")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identity)")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except ConditionError as exc:
        print(f"robustmean: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except (DataError, RobustMeanError) as exc:
        print(f"robustmean: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
