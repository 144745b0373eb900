"""Concept bottleneck locality toolkit."""

from ._core import (
    CBModel,
    ConfigError,
    Dataset,
    FormatError,
    add_gaussian_noise,
    generate_dataset,
    lemma_prod_identity,
    lemma_sum_bound,
    load_cbm,
    load_dataset,
    locality_intervention,
    locality_leakage,
    locality_masking,
    parse_experiment_config,
    subsample_concept_combinations,
    theorem_trial,
    train_cbm,
)

__all__ = [
    "CBModel",
    "ConfigError",
    "Dataset",
    "FormatError",
    "add_gaussian_noise",
    "generate_dataset",
    "lemma_prod_identity",
    "lemma_sum_bound",
    "load_cbm",
    "load_dataset",
    "locality_intervention",
    "locality_leakage",
    "locality_masking",
    "parse_experiment_config",
    "subsample_concept_combinations",
    "theorem_trial",
    "train_cbm",
]
