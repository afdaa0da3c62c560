import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from . import __version__
from .commands import COMMANDS
from .config import get_settings
from .errors import ConfigError, ConsequentialError

logger = logging.getLogger("consequential")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consequential",
        description="Learning decision policies from selectively labeled data",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="overrides LOG_LEVEL")
    parser.add_argument("--no-progress", action="store_true", help="hide progress bars")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def configure_logging(level: Optional[str] = None) -> None:
    settings = get_settings()
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    if args.no_progress:
        get_settings().progress = False

    try:
        args.handler(args)
    except ConsequentialError as e:
        logger.error(str(e))
        return e.exit_code
    except ValidationError as e:
        error = ConfigError("invalid configuration", [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()])
        logger.error(str(error))
        return error.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
