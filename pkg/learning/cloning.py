"""
Behavioral Cloning Module.

Fits one regressor per archetype on the orders that archetype submitted. The inputs are the book
features with prices taken relative to the book mid; the targets are the order's price offset from
the mid and its signed size. The last training day picks the hyperparameters and the epoch count.
Actions are sampled as the point prediction plus a training residual and put back on the price
scale by adding the mid.
"""

import logging

import numpy as np

from learning.dataset import (SampleSet, ZScoreParams, book_mid, cloning_inputs, cloning_offsets, cloning_targets,
                              validation_split, zscore_apply, zscore_fit, zscore_invert)
from learning.mlp import Hyperparams, MlpModel, check_cloner_samples, sample_regression, train_cloner
from learning.tuner import SearchSpace, random_search

logger = logging.getLogger(__name__)


def fit_cloner(samples: SampleSet, hp: Hyperparams, seed: int, search_budget: int = 0) -> tuple:
    """
    Trains the cloner of one archetype.

    Args:
        samples (SampleSet): The archetype's training-day samples, covering at least two days.
        hp (Hyperparams): Starting hyperparameters; ``epochs`` bounds the epoch selection.
        seed (int): Seed of the search and of every training run.
        search_budget (int): Random-search trials scored by validation loss; 0 keeps hp.

    Returns:
        tuple: (MlpModel, SearchResult | None). The model's meta holds the input, offset and
        target z-score parameters.

    Raises:
        TrainingError: If too few samples are available or every candidate diverges.
        DatasetError: If the samples cover fewer than two days.
    """
    check_cloner_samples(len(samples))
    input_params = zscore_fit(cloning_inputs(samples))
    offset_params = zscore_fit(cloning_offsets(samples), drop_constant=False)
    target_params = zscore_fit(cloning_targets(samples), drop_constant=False)

    def normalized(subset: SampleSet) -> tuple:
        return (zscore_apply(input_params, cloning_inputs(subset)),
                zscore_apply(offset_params, cloning_offsets(subset)))

    fit, valid = validation_split(samples)
    fit_x, fit_y = normalized(fit)
    valid_pair = normalized(valid)

    def validate(candidate: Hyperparams):
        _, history = train_cloner(fit_x, fit_y, candidate, seed, min_samples=1, valid=valid_pair)
        return history

    search = None
    if search_budget > 0:
        search = random_search(SearchSpace(), search_budget, lambda c: -min(validate(c).valid_loss), seed, hp)
        hp = search.best
    hp = hp.model_copy(update={"epochs": validate(hp).best_epoch()})
    logger.info(f"Cloner validation loss is lowest after {hp.epochs} epochs")

    model, _ = train_cloner(*normalized(samples), hp, seed)
    model.meta.update({"input_zscore": input_params.model_dump(), "offset_zscore": offset_params.model_dump(),
                       "target_zscore": target_params.model_dump()})
    return model, search


def clone_actions(model: MlpModel, samples: SampleSet, rng: np.random.Generator) -> np.ndarray:
    """
    Samples one (price, signed size) action per sample on the original scale.

    Returns:
        np.ndarray: (n, 2) array laid out like cloning_targets.
    """
    input_params = ZScoreParams.model_validate(model.meta["input_zscore"])
    offset_params = ZScoreParams.model_validate(model.meta["offset_zscore"])
    actions = zscore_invert(offset_params,
                            sample_regression(model, zscore_apply(input_params, cloning_inputs(samples)), rng))
    actions[:, 0] += book_mid(samples)
    return actions
