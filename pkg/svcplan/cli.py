import argparse
import logging
import sys
from typing import Optional, Sequence

from .exceptions import SvcPlanException
from .bnb import BnbSettings
from .micp import WeightScheme
from .planner import RunConfig, run
from .settings import DEFAULT_ALPHA, DEFAULT_EPS_THETA, DEFAULT_SVC_RANGE

logger = logging.getLogger("svcplan")


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")


def _range(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svcplan",
        description="Allocate static var compensators over probabilistic load scenarios.",
    )
    parser.add_argument("--case", help="case file path or http(s) URL (default: bundled IEEE 30-bus)")
    parser.add_argument("--scenarios", help="scenario CSV with columns rho,lambda (default: built-in 15-scenario table)")
    parser.add_argument(
        "--weights",
        action="append",
        help="weight scheme: case1..case4 or 'a1,a2'; repeat for several (default: case1)",
    )
    parser.add_argument("--nv", type=_int_list, default=[1, 2, 3, 4, 5], help="SVC budgets, e.g. 1,2,3")
    parser.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="cone penalty scale")
    parser.add_argument("--eps-theta", type=float, default=DEFAULT_EPS_THETA, help="loop angle tolerance (rad)")
    parser.add_argument("--svc-range", type=_range, default=DEFAULT_SVC_RANGE, help="susceptance range lo,hi (p.u.)")
    parser.add_argument("--base-load", type=_range, help="rescale the case to total demand MW,MVAr")
    parser.add_argument("--time-limit", type=float, help="branch-and-bound time limit per cell (s)")
    parser.add_argument("--validate", action="store_true", help="check every result with an AC power flow")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="cells solved in parallel")
    parser.add_argument("--seed", type=int, help="accepted for compatibility; runs are deterministic")
    parser.add_argument("--full-charging", action="store_true", help="use the full b_ch in the thermal cones")
    parser.add_argument("--plot-scenarios", type=_int_list, default=[], help="scenario ids for voltage profiles")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true")
    verbosity.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        weights = [(w.strip(), WeightScheme.from_string(w, args.alpha)) for w in (args.weights or ["case1"])]
        config = RunConfig(
            case=args.case,
            scenarios=args.scenarios,
            weights=weights,
            nv=args.nv,
            svc_range=args.svc_range,
            alpha=args.alpha,
            eps_theta=args.eps_theta,
            half_charging=not args.full_charging,
            out=args.out,
            validate=args.validate,
            workers=args.workers,
            seed=args.seed,
            plot_scenarios=args.plot_scenarios,
            base_load=args.base_load,
            bnb=BnbSettings(time_limit=args.time_limit),
        )
        report = run(config)
    except (SvcPlanException, ValueError, OSError) as exc:
        logger.error("%s", getattr(exc, "message", exc))
        return 2

    print(report.render_table3())
    if report.failed:
        logger.error("%d cell(s) failed", len(report.failed))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
