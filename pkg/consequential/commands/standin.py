from pathlib import Path

from ..errors import ConfigError
from ..services.ingestion import write_dataset_csv, write_score_table_csv
from ..services.presets import standin_dataset, standin_score_table


def register(subparsers) -> None:
    parser = subparsers.add_parser("standin", help="write the generated stand-in dataset and score table as CSV")
    parser.add_argument("--dataset", type=Path, default=None, help="dataset CSV path")
    parser.add_argument("--rows", type=int, default=6000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--score-table", type=Path, default=None, help="score table CSV path")
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    if args.dataset is None and args.score_table is None:
        raise ConfigError("nothing to write: pass --dataset and/or --score-table")
    if args.dataset is not None:
        if args.rows < 2:
            raise ConfigError(f"--rows must be >= 2, got {args.rows}")
        print(write_dataset_csv(standin_dataset(args.rows, args.seed), args.dataset))
    if args.score_table is not None:
        print(write_score_table_csv(standin_score_table(), args.score_table))
