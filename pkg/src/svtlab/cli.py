"""``svtlab`` command line.

Exit codes: 0 success (audit verdict within bound), 1 data error, 2 usage
error, 3 audit verdict ViolatesBound or Unbounded.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import audit as au
from . import bench as bn
from .errors import DataError, InvalidPatternError, SvtlabError
from .mechanisms import utility_bounds
from .svt import BudgetSplit, SvtConfig, Variant, optimize_split

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2, 3

_CE_VARIANT = {
    au.Counterexample.ALG3_APPENDIX: Variant.ALG3,
    au.Counterexample.ALG5_THM2: Variant.ALG5,
    au.Counterexample.ALG6_APPENDIX: Variant.ALG6,
}


class UsageError(Exception):
    pass


def _positive_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (x > 0 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return x


def _positive_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return x


def _probability(text):
    x = _positive_float(text)
    if x >= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1): {text!r}")
    return x


def _int_list(text):
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"cutoffs must be positive: {text!r}")
    return values


def _split(text):
    try:
        parts = [float(t) for t in text.split(":")]
        return BudgetSplit(*parts)
    except (TypeError, ValueError):
        raise argparse.ArgumentTypeError(f"expected eps1:eps2[:eps3], got {text!r}")


def _zipf(text):
    try:
        items, records = (int(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ITEMS:RECORDS, got {text!r}")
    if items < 1 or records < 1:
        raise argparse.ArgumentTypeError("ITEMS and RECORDS must be positive")
    return items, records


def _seed(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer: {text!r}")
    if not 0 <= x < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None,
                        help="random seed (default: $SVTLAB_SEED or 0)")

    parser = argparse.ArgumentParser(prog="svtlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", parents=[common], help="audit an SVT variant's privacy loss")
    p.add_argument("--variant", help="alg1..alg7 or gptt")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--counterexample", help="thm2, appendixA1 or appendixA2")
    src.add_argument("--family", choices=["adversarial"])
    src.add_argument("--instance", type=Path, help="JSON file with one neighbour instance")
    p.add_argument("--m", type=_positive_int, default=4, help="counterexample size")
    p.add_argument("--eps", type=_positive_float, default=1.0)
    p.add_argument("--split", type=_split, help="eps1:eps2[:eps3] for alg6/alg7")
    p.add_argument("--c", type=_positive_int, default=1, help="cutoff")
    p.add_argument("--monotonic", action="store_true")
    p.add_argument("--len", type=_positive_int, default=4, dest="length",
                   help="maximum stream length for --family")
    p.add_argument("--method", choices=[m.value for m in au.Method], default="quadrature")
    p.add_argument("--samples", type=_positive_int, default=10 ** 6)
    p.add_argument("--claim", type=_positive_float, help="claimed epsilon (default: total budget)")
    p.add_argument("--out", type=Path, help="CSV with one row per audited instance")

    p = sub.add_parser("bench", parents=[common], help="top-c selection benchmark")
    data = p.add_mutually_exclusive_group(required=True)
    data.add_argument("--data", type=Path, help="transactions file or item,count CSV")
    data.add_argument("--zipf", type=_zipf, metavar="ITEMS:RECORDS")
    p.add_argument("--c", type=_int_list, required=True, help="comma-separated cutoffs")
    p.add_argument("--eps", type=_positive_float, required=True)
    p.add_argument("--methods", required=True,
                   help="comma-separated: em, svt-dpbook, svt-s:R1:R2, svt-retr:R1:R2:kD")
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--out", type=Path, default=Path("bench_out"),
                   help="directory for results.csv and summary.csv")

    p = sub.add_parser("gen-zipf", parents=[common], help="write a Zipf item histogram")
    p.add_argument("--items", type=_positive_int, default=10_000)
    p.add_argument("--records", type=_positive_int, default=1_000_000)
    p.add_argument("--out", type=Path, help="CSV path (default: stdout)")

    p = sub.add_parser("split", parents=[common], help="variance-optimal eps1/eps2 split")
    p.add_argument("--eps", type=_positive_float, required=True)
    p.add_argument("--c", type=_positive_int, required=True)
    p.add_argument("--monotonic", action="store_true")

    p = sub.add_parser("bounds", parents=[common], help="SVT vs EM accuracy margins")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--beta", type=_probability, required=True)
    p.add_argument("--eps", type=_positive_float, required=True)
    return parser


def effective_seed(flag) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("SVTLAB_SEED")
    if env:
        try:
            return _seed(env)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"SVTLAB_SEED: {exc}")
    return 0


def _audit_config(args, variant) -> SvtConfig:
    kwargs = dict(cutoff_c=args.c, thresholds=0.0, monotonic=args.monotonic)
    if args.split is not None:
        return SvtConfig(variant, split=args.split, **kwargs)
    return SvtConfig(variant, epsilon=args.eps, **kwargs)


def _load_instance(path: Path) -> au.NeighborInstance:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})")
    try:
        return au.NeighborInstance(raw["scores_d"], raw["scores_d_prime"], raw.get("delta", 1.0),
                                   raw.get("thresholds", 0.0), tuple(raw.get("pattern", ())),
                                   raw.get("id", path.stem), raw.get("m"))
    except KeyError as exc:
        raise DataError(f"{path}: missing field {exc}")
    except InvalidPatternError:
        raise
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}")


def cmd_audit(args, seed: int, out) -> int:
    variant = Variant.parse(args.variant) if args.variant else None
    rng = np.random.default_rng(seed)
    if args.counterexample:
        try:
            ce = au.Counterexample.parse(args.counterexample)
        except KeyError:
            raise UsageError(f"unknown counterexample {args.counterexample!r}")
        if variant is not None and variant is not _CE_VARIANT[ce]:
            raise UsageError(f"{ce.value} is a counterexample for {_CE_VARIANT[ce].value}")
        case = au.make_counterexample(au.CounterexampleSpec(ce, args.m, args.eps))
        reports = [au.audit_instance(case.config, case.instance, args.method, args.claim,
                                     args.samples, rng)]
    else:
        if variant is None:
            raise UsageError("--variant is required with --family/--instance")
        config = _audit_config(args, variant)
        if args.family:
            if args.method != "quadrature":
                raise UsageError("--family sweeps use quadrature")
            summary = au.verify_dp_bound(config, au.adversarial_family(config, args.length),
                                         args.claim)
            reports = list(summary.reports)
        else:
            inst = _load_instance(args.instance)
            reports = [au.audit_instance(config, inst, args.method, args.claim, args.samples, rng)]
    if args.out:
        au.write_audit_csv(reports, args.out)
    worst = max(reports, key=au._severity)
    verdict = au.Verdict.WITHIN_BOUND
    for rep in reports:
        if rep.verdict is au.Verdict.UNBOUNDED:
            verdict = rep.verdict
            break
        if rep.verdict is au.Verdict.VIOLATES_BOUND:
            verdict = rep.verdict
    print(f"variant={worst.variant} instances={len(reports)} method={worst.method.value} "
          f"claim={worst.claimed_bound:.6g}", file=out)
    print(f"worst instance={worst.instance_id} log_prob_d={worst.log_prob_d:.10g} "
          f"log_prob_dprime={worst.log_prob_d_prime:.10g} log_ratio={worst.log_ratio:.10g} "
          f"ci={worst.ci_halfwidth:.3g}", file=out)
    print(f"verdict={verdict.value}", file=out)
    return EXIT_OK if verdict is au.Verdict.WITHIN_BOUND else EXIT_VIOLATION


def cmd_bench(args, seed: int, out) -> int:
    try:
        methods = [bn.BenchMethod.parse(m) for m in args.methods.split(",") if m.strip()]
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.zipf:
        hist = bn.gen_zipf(args.zipf[0], args.zipf[1], seed)
    else:
        hist = bn.load_dataset(args.data)
    if max(args.c) + 1 > len(hist):
        raise DataError(f"dataset has {len(hist)} items; cutoff {max(args.c)} needs one more")
    results = [bn.run_bench(bn.BenchPlan(m, c, args.eps, args.trials, seed), hist)
               for m in methods for c in args.c]
    bn.write_csv(args.out / "results.csv", bn.RESULT_FIELDS, bn.result_rows(results))
    summary = bn.summary_rows(results)
    bn.write_csv(args.out / "summary.csv", bn.SUMMARY_FIELDS, summary)
    print(",".join(bn.SUMMARY_FIELDS), file=out)
    for row in summary:
        print(",".join(str(x) for x in row), file=out)
    return EXIT_OK


def cmd_gen_zipf(args, seed: int, out) -> int:
    hist = bn.gen_zipf(args.items, args.records, seed)
    if args.out:
        bn.write_histogram_csv(hist, args.out)
    else:
        print("item,count", file=out)
        for item, count in zip(hist.ids, hist.counts):
            print(f"{item},{bn._fmt_count(count)}", file=out)
    return EXIT_OK


def cmd_split(args, seed: int, out) -> int:
    s = optimize_split(args.eps, args.c, args.monotonic)
    print(f"eps1 {s.eps1:.6g}", file=out)
    print(f"eps2 {s.eps2:.6g}", file=out)
    print(f"ratio 1:{s.eps2 / s.eps1:.6g}", file=out)
    return EXIT_OK


def cmd_bounds(args, seed: int, out) -> int:
    if args.k < 2:
        raise UsageError("--k must be at least 2")
    alpha_svt, alpha_em = utility_bounds(args.k, args.beta, args.eps)
    print(f"alpha_svt {alpha_svt:.6g}", file=out)
    print(f"alpha_em {alpha_em:.6g}", file=out)
    print(f"alpha_em < alpha_svt/8 {'true' if alpha_em < alpha_svt / 8 else 'false'}", file=out)
    return EXIT_OK


COMMANDS = {"audit": cmd_audit, "bench": cmd_bench, "gen-zipf": cmd_gen_zipf,
            "split": cmd_split, "bounds": cmd_bounds}


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        seed = effective_seed(args.seed)
        print(f"seed={seed}", file=err)
        return COMMANDS[args.command](args, seed, out)
    except UsageError as exc:
        print(f"svtlab {args.command}: error: {exc}", file=err)
        return EXIT_USAGE
    except DataError as exc:
        print(f"svtlab {args.command}: data error: {exc}", file=err)
        return EXIT_DATA
    except (SvtlabError, ValueError) as exc:
        # invalid combinations, patterns or domains are caller mistakes
        print(f"svtlab {args.command}: error: {exc}", file=err)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
