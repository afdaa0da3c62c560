import glob
import logging
from pathlib import Path

from ..errors import IngestionError
from ..services.runner import aggregate

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("aggregate", help="median and quantiles across seeds")
    parser.add_argument("pattern", nargs="+", help="metrics CSV files or glob patterns")
    parser.add_argument("-o", "--output", type=Path, required=True)
    parser.add_argument(
        "-q", "--quantiles", type=float, nargs="+", default=[0.25, 0.5, 0.75],
        help="quantiles to report besides the median",
    )
    parser.set_defaults(handler=handle)


def expand(patterns) -> list:
    files = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern))
        if not matches:
            raise IngestionError(f"no files match {pattern}")
        files.extend(matches)
    return files


def handle(args) -> None:
    files = expand(args.pattern)
    logger.info(f"Aggregating {len(files)} file(s)")
    aggregate(files, args.quantiles, args.output)
    print(args.output)
