from pathlib import Path

from ..loader import load_lending_config
from ..services.lending import lending_sweep


def register(subparsers) -> None:
    parser = subparsers.add_parser("lending-sweep", help="initial-collection threshold sweep on a score table")
    parser.add_argument("config", type=Path)
    parser.add_argument("-o", "--output", type=Path, default=None, help="CSV path (default: the config's output)")
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    config = load_lending_config(args.config)
    output = args.output if args.output is not None else config.output
    if output is None:
        output = Path("lending.csv")
    lending_sweep(config, output)
    print(output)
