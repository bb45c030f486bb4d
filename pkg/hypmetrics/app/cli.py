"""Command-line front end.

Exit status: 0 when every audited claim holds (for ``counterexample``:
when the outcome matches the theory), 2 when a finding is reported, 1 on
usage or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from hypmetrics import __version__
from hypmetrics.app.experiments import (
    DEFAULT_BUDGET,
    EXIT_USAGE,
    ExperimentConfig,
    load_config,
    parse_config,
    run,
    write_report,
)
from hypmetrics.services.errors import HypMetricsError
from hypmetrics.services.settings import SETTINGS

logger = logging.getLogger(__name__)

EPILOG = """exit status:
  0  all audited claims hold (counterexample: outcome matches the theory,
     i.e. a violation is found for dhv with c < 2 on the unit disk and none otherwise)
  2  a finding was reported (violated bound, failed audit, unexpected search outcome)
  1  usage, parse or I/O error
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_r_grid(text: str) -> List[float]:
    """``0.1,0.01,0.001`` or ``geom:START:STOP:COUNT`` (log-spaced, inclusive)."""
    if text.startswith("geom:"):
        try:
            start, stop, count = text[5:].split(":")
            values = np.geomspace(float(start), float(stop), int(count))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad geometric grid: {text}") from None
        return [float(v) for v in values]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad radius list: {text}") from None


def parse_coords(text: str) -> Any:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad coordinates: {text}") from None
    return values[0] if len(values) == 1 else values


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config; flags given here override it")
    parser.add_argument("--family", choices=["go", "dhv", "na", "ibr"], help="metric family (default go)")
    parser.add_argument("--c", type=float, help="DHV constant c > 0 (default 2)")
    parser.add_argument("--seed", type=int, help=f"seed of every sampled stream (default {SETTINGS.seed})")
    parser.add_argument("--threads", type=int, help=f"worker threads (default {SETTINGS.threads})")
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument("--format", choices=["json", "csv"], help="report format (csv: dilatation only)")
    parser.add_argument("--record", action="store_true", help="store the run in the ledger database")
    parser.add_argument("--log-level", default=SETTINGS.log_level, help="logging level on stderr")


def _scan(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--space", help="space-spec JSON file")
    parser.add_argument("--mode", choices=["exhaustive", "sampled"], help="default: exhaustive within budget")
    parser.add_argument("--samples", type=int, help=f"sampled tuples (default {SETTINGS.samples})")
    parser.add_argument("--quad-budget", type=int, help=f"exhaustive quadruple budget (default {SETTINGS.quad_budget})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hypmetrics",
        description="Audit weighted hyperbolic-type metrics on sampled spaces.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eval", help="evaluate rho for one pair", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--d", type=float, help="base distance (default |x - y|)")
    p.add_argument("--x", type=parse_coords, help="first point, comma separated")
    p.add_argument("--y", type=parse_coords, help="second point, comma separated")
    p.add_argument("--fx", type=float, help="weight F(x)")
    p.add_argument("--fy", type=float, help="weight F(y)")

    p = sub.add_parser("audit", help="metric, Lipschitz and envelope audits", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    _scan(p)

    p = sub.add_parser("delta", help="Gromov delta against the certified bound", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    _scan(p)
    p.add_argument("--transfer", action="store_true", help="also check the base-point transfer")

    p = sub.add_parser("dilatation", help="dilatation profile at a center", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--space", help="space-spec JSON file (Euclidean)")
    p.add_argument("--center", type=parse_coords, help="profile center (default: first point)")
    p.add_argument("--r-grid", type=parse_r_grid, help="radii as fractions of F(center)")
    p.add_argument("--probes", type=int, help="sphere probes per radius")
    p.add_argument("--variant", choices=["fine", "coarse"], help="ibr lower envelope")

    p = sub.add_parser("counterexample", help="search a triangle violation of h_c", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--space", help="unit_disk or halfplane_lattice spec selecting the geometry")
    p.add_argument("--geometry", choices=["unit_disk", "halfplane"], help="default unit_disk")
    p.add_argument(
        "--budget",
        type=int,
        help=f"random triples after the collinear sweep (default {DEFAULT_BUDGET:,}; use 10000000 for a thorough c >= 2 check)",
    )
    return parser


_CONFIG_KEYS = (
    "family", "c", "space", "mode", "samples", "seed", "quad_budget", "probes", "r_grid",
    "center", "variant", "geometry", "budget", "d", "x", "y", "fx", "fy", "format", "threads",
)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: Dict[str, Any] = {}
    if args.config:
        data = load_config(args.config).model_dump(exclude_none=True)
    data["command"] = args.command
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "transfer", False):
        data["transfer"] = True
    return parse_config(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_from_args(args)
        outcome = run(config)
        text = write_report(outcome, config.format, args.out)
        if args.out is None:
            sys.stdout.write(text)
        if args.record:
            from hypmetrics.services import models
            from hypmetrics.services.database import SessionLocal, engine

            models.Base.metadata.create_all(bind=engine)
            db = SessionLocal()
            try:
                stored = models.record_run(db, outcome)
                logger.info("Recorded run %d", stored.id)
            finally:
                db.close()
    except (HypMetricsError, OSError) as e:
        print(f"hypmetrics: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return outcome.exit_status


if __name__ == "__main__":
    sys.exit(main())
