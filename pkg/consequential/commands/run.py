from pathlib import Path

from ..loader import load_run_config
from ..services.runner import run_experiment


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="run every (strategy, seed, lambda) cell of a config")
    parser.add_argument("config", type=Path)
    parser.add_argument("-o", "--output", type=Path, default=None, help="output directory")
    parser.add_argument("-w", "--workers", type=int, default=None, help="overrides WORKERS")
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    config = load_run_config(args.config)
    result = run_experiment(config, output=args.output, workers=args.workers)
    print(result.metrics_path)
