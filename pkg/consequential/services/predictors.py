"""
Logistic predictive models Q(y=1|x,s).

Fitted by (L2-regularized) maximum likelihood with gradient ascent, with
optional k-fold cross-validation over the regularization strength. These
back the deterministic threshold baseline and the lending sweep.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, log_expit
from sklearn.model_selection import KFold

from ..errors import NumericalError
from ..schemas import TrainSpec
from .environments import LabeledBatch, LabeledExample, columns, is_row
from .policies import FeatureMap

logger = logging.getLogger(__name__)

# Ridge used when single-class data would send the unregularized MLE to infinity
FALLBACK_RIDGE = 1e-6


@dataclass(frozen=True)
class Predictor:
    """Logistic model weights over FeatureMap outputs."""
    weights: np.ndarray
    regularization: float = 0.0
    history: Tuple[float, ...] = ()  # training objective at checkpoints
    cv_report: Optional[dict] = None

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(weights)):
            raise NumericalError("predictor weights are not finite")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def predict(self, phi: np.ndarray) -> np.ndarray:
        return expit(phi @ self.weights)


def log_likelihood(phi: np.ndarray, y: np.ndarray, weights: np.ndarray) -> float:
    """Mean Bernoulli log-likelihood of labels y under sigmoid(phi w)."""
    a = phi @ weights
    return float(np.mean(y * log_expit(a) + (1 - y) * log_expit(-a)))


def objective(phi: np.ndarray, y: np.ndarray, weights: np.ndarray, regularization: float) -> float:
    return log_likelihood(phi, y, weights) - 0.5 * regularization * float(weights @ weights)


def gradient(phi: np.ndarray, y: np.ndarray, weights: np.ndarray, regularization: float) -> np.ndarray:
    residual = y - expit(phi @ weights)
    return phi.T @ residual / phi.shape[0] - regularization * weights


def _as_batch(data: Union[LabeledBatch, Sequence[LabeledExample]]) -> LabeledBatch:
    if isinstance(data, LabeledBatch):
        return data
    return LabeledBatch.from_examples(list(data))


def train_mle(
    data: Union[LabeledBatch, Sequence[LabeledExample]],
    fmap: FeatureMap,
    spec: TrainSpec,
    rng: np.random.Generator,
    initial_weights: Optional[np.ndarray] = None,
) -> Predictor:
    """
    Fit Q by regularized maximum likelihood.

    Full-batch gradient ascent by default; ``spec.batch_size`` (or pools
    larger than ``spec.full_batch_limit``) switches to minibatches drawn
    with replacement from ``rng``. ``initial_weights`` warm-starts the fit.
    """
    batch = _as_batch(data)
    n = len(batch)
    if n == 0:
        raise ValueError("cannot fit a predictor on an empty dataset")

    regularization = spec.regularization
    if regularization == 0.0 and batch.y.min() == batch.y.max():
        logger.warning(
            f"All {n} training labels equal {int(batch.y[0])}; fitting with ridge {FALLBACK_RIDGE}"
        )
        regularization = FALLBACK_RIDGE

    phi = fmap.transform(batch.x, batch.s)
    y = batch.y.astype(float)
    if initial_weights is None:
        weights = np.zeros(phi.shape[1])
    else:
        weights = np.array(initial_weights, dtype=float)
        if weights.shape != (phi.shape[1],):
            raise ValueError(f"initial weights have shape {weights.shape}, expected ({phi.shape[1]},)")

    batch_size = spec.batch_size
    if batch_size is None and n > spec.full_batch_limit:
        batch_size = spec.full_batch_limit
    stochastic = batch_size is not None and batch_size < n

    history = [objective(phi, y, weights, regularization)]
    for step in range(1, spec.steps + 1):
        if stochastic:
            rows = rng.integers(0, n, size=batch_size)
            g = gradient(phi[rows], y[rows], weights, regularization)
        else:
            g = gradient(phi, y, weights, regularization)
        weights = weights + spec.learning_rate * g
        if step % spec.checkpoint_every == 0 or step == spec.steps:
            history.append(objective(phi, y, weights, regularization))
            if not np.all(np.isfinite(weights)):
                raise NumericalError(f"predictor training diverged at step {step}")

    return Predictor(weights, regularization, tuple(history))


def train_cv(
    data: Union[LabeledBatch, Sequence[LabeledExample]],
    fmap: FeatureMap,
    spec: TrainSpec,
    rng: np.random.Generator,
) -> Predictor:
    """
    Pick the regularization strength with the best mean held-fold
    log-likelihood, then refit on all data.

    Ties go to the earliest grid entry. The fold assignment and the grid
    scores are kept in ``Predictor.cv_report``.
    """
    batch = _as_batch(data)
    if not spec.grid:
        logger.info("Empty regularization grid; fitting without cross-validation")
        return train_mle(batch, fmap, spec, rng)
    n = len(batch)
    if n < spec.folds:
        raise ValueError(f"cross-validation needs at least {spec.folds} examples, got {n}")

    fold_seed = int(rng.integers(0, 2**31 - 1))
    train_seed = int(rng.integers(0, 2**31 - 1))
    splits = list(KFold(n_splits=spec.folds, shuffle=True, random_state=fold_seed).split(np.arange(n)))
    fold_ids = np.empty(n, dtype=np.int64)
    for k, (_, held) in enumerate(splits):
        fold_ids[held] = k

    scores = []
    for strength in spec.grid:
        fold_spec = spec.model_copy(update={"regularization": strength, "grid": None})
        fold_scores = []
        for train_rows, held_rows in splits:
            fitted = train_mle(batch.take(train_rows), fmap, fold_spec, np.random.default_rng(train_seed))
            held = batch.take(held_rows)
            fold_scores.append(log_likelihood(fmap.transform(held.x, held.s), held.y, fitted.weights))
        scores.append(float(np.mean(fold_scores)))

    best = int(np.argmax(scores))
    chosen = float(spec.grid[best])
    logger.info(f"Cross-validation selected regularization {chosen:g} (held-fold log-likelihood {scores[best]:.5f})")
    final = train_mle(
        batch,
        fmap,
        spec.model_copy(update={"regularization": chosen, "grid": None}),
        np.random.default_rng(train_seed),
    )
    report = {
        "grid": [float(v) for v in spec.grid],
        "scores": scores,
        "selected": chosen,
        "fold_seed": fold_seed,
        "fold_ids": fold_ids.tolist(),
    }
    return replace(final, cv_report=report)


def predict_prob(predictor: Predictor, fmap: FeatureMap, individual):
    """sigmoid(phi^T w): a float for one individual, an array for a batch."""
    x, s = columns(individual)
    q = predictor.predict(fmap.transform(x, s))
    return float(q[0]) if is_row(individual) else q
