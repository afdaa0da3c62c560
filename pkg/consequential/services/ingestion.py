"""
CSV ingestion for user-supplied datasets and score tables, and writers for
the bundled stand-ins.

Dataset CSV: one row per individual with a 0/1 column ``s``, a 0/1 column
``y`` and numeric feature columns.

Score-table CSV: header ``score,cdf_group0,cdf_group1,p_repay_group0,p_repay_group1``,
one row per integer score in increasing order.
"""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..errors import IngestionError
from .environments import ScoreTableSpec

logger = logging.getLogger(__name__)

SCORE_TABLE_COLUMNS = ["score", "cdf_group0", "cdf_group1", "p_repay_group0", "p_repay_group1"]

PathLike = Union[str, Path]


def _read_csv(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise IngestionError(f"{path}: file not found")
    try:
        return pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise IngestionError(f"{path}: cannot parse CSV: {e}") from e


def load_dataset_csv(path: PathLike) -> pd.DataFrame:
    """Read a dataset table; row-level checks happen when the environment is built."""
    path = Path(path)
    frame = _read_csv(path)
    missing = [c for c in ("s", "y") if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing required column(s) {', '.join(missing)}")
    logger.info(f"Loaded {len(frame)} rows from {path.name} (columns {list(frame.columns)})")
    return frame


def load_score_table_csv(
    path: PathLike,
    group_weights: Optional[Tuple[float, float]] = None,
) -> ScoreTableSpec:
    path = Path(path)
    frame = _read_csv(path)
    missing = [c for c in SCORE_TABLE_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing required column(s) {', '.join(missing)}")

    numeric = {}
    for name in SCORE_TABLE_COLUMNS:
        values = pd.to_numeric(frame[name], errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            row = int(bad[0])
            raise IngestionError(
                f"{path}: row {row + 1} (line {row + 2}), column '{name}': invalid value {frame[name].iloc[row]!r}"
            )
        numeric[name] = values.to_numpy(dtype=float)

    scores = numeric["score"]
    fractional = np.flatnonzero(scores != np.round(scores))
    if fractional.size:
        row = int(fractional[0])
        raise IngestionError(f"{path}: row {row + 1} (line {row + 2}), column 'score': scores must be integers")

    try:
        spec = ScoreTableSpec(
            scores=scores.astype(np.int64).tolist(),
            cdf=(numeric["cdf_group0"].tolist(), numeric["cdf_group1"].tolist()),
            repay=(numeric["p_repay_group0"].tolist(), numeric["p_repay_group1"].tolist()),
            group_weights=group_weights if group_weights is not None else (0.5, 0.5),
        )
    except ValidationError as e:
        problems = "; ".join(err["msg"] for err in e.errors())
        raise IngestionError(f"{path}: invalid score table: {problems}") from e

    logger.info(f"Loaded score table {path.name}: scores {spec.domain[0]}..{spec.domain[1]}")
    return spec


def write_dataset_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_score_table_csv(spec: ScoreTableSpec, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "score": spec.scores,
        "cdf_group0": spec.cdf[0],
        "cdf_group1": spec.cdf[1],
        "p_repay_group0": spec.repay[0],
        "p_repay_group1": spec.repay[1],
    })
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote score table with {len(frame)} scores to {path}")
    return path
