from pathlib import Path

from ..loader import validate_config


def register(subparsers) -> None:
    parser = subparsers.add_parser("validate", help="check a run config and print it with defaults filled in")
    parser.add_argument("config", type=Path)
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    _, resolved = validate_config(args.config)
    print(resolved)
