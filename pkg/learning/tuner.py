"""
Random Search Module.

Samples classifier and cloner hyperparameters (log-uniform learning rate, uniform dropout, batch
size from a fixed set) and keeps the configuration with the best validation objective.
"""

import logging
from typing import Callable

import numpy as np
from pydantic import BaseModel, Field

from config import SEARCH_BATCH_SIZES, SEARCH_DROPOUT_RANGE, SEARCH_LEARNING_RATE_RANGE
from errors import TrainingError
from learning.mlp import Hyperparams

logger = logging.getLogger(__name__)


class SearchSpace(BaseModel):
    learning_rate: tuple[float, float] = SEARCH_LEARNING_RATE_RANGE
    dropout: tuple[float, float] = SEARCH_DROPOUT_RANGE
    batch_sizes: list[int] = Field(default_factory=lambda: list(SEARCH_BATCH_SIZES))

    def sample(self, rng: np.random.Generator, base: Hyperparams) -> Hyperparams:
        low, high = np.log(self.learning_rate[0]), np.log(self.learning_rate[1])
        return base.model_copy(update={
            "learning_rate": float(np.exp(rng.uniform(low, high))),
            "dropout": float(rng.uniform(*self.dropout)),
            "batch_size": int(rng.choice(self.batch_sizes)),
        })


class SearchTrial(BaseModel):
    hyperparams: Hyperparams
    score: float


class SearchResult(BaseModel):
    best: Hyperparams
    best_score: float
    trials: list[SearchTrial]


def random_search(space: SearchSpace, budget: int, objective: Callable[[Hyperparams], float], seed: int,
                  base: Hyperparams = None) -> SearchResult:
    """
    Evaluates ``budget`` sampled configurations and returns the one with the highest objective.

    Args:
        space (SearchSpace): Ranges of the tuned hyperparameters.
        budget (int): Number of configurations to evaluate.
        objective (Callable): Maps hyperparameters to a validation score; higher is better. A trial
            whose training fails with a TrainingError scores minus infinity.
        seed (int): Seed of the sampling.
        base (Hyperparams | None): Values of the untuned hyperparameters.

    Returns:
        SearchResult: The best configuration, its score and every trial in sampling order.
    """
    if budget < 1:
        raise ValueError("search budget must be at least 1")
    rng = np.random.default_rng(seed)
    base = base or Hyperparams()
    trials = []
    for trial in range(budget):
        candidate = space.sample(rng, base)
        try:
            score = float(objective(candidate))
        except TrainingError as e:
            logger.warning(f"Trial {trial + 1}/{budget} failed: {e}")
            score = float("-inf")
        trials.append(SearchTrial(hyperparams=candidate, score=score))
        logger.info(f"Trial {trial + 1}/{budget}: lr={candidate.learning_rate:.2e}, dropout={candidate.dropout:.3f}, "
                    f"batch={candidate.batch_size}, score={score:.4f}")
    best = max(trials, key=lambda t: t.score)
    return SearchResult(best=best.hyperparams, best_score=best.score, trials=trials)
