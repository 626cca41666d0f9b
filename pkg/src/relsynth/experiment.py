"""Seeded toy fidelity run: train on a split of the toy dataset, synthesize, evaluate."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .evaluate import ClassifierConfig, model_compatibility, privacy_score, train_test_split
from .model import TrainConfig, synthesize, train_model
from .relational import RelationalDataset, join_on_identifier, validate
from .seeding import derive_seed
from .toy import make_toy_dataset


@dataclass
class FidelityRun:
    seed: int
    mc_roc_auc: float
    mc_f1: float
    privacy: float
    alpha: float
    real_means: dict
    synthetic_means: dict
    synthetic_valid: bool
    seconds: float

    @property
    def ordering_preserved(self) -> bool:
        """Class-conditional mean of ``amount`` keeps the real ordering of classes."""
        r, s = self.real_means, self.synthetic_means
        return all(k in s for k in r) and (r["A"] < r["B"]) == (s["A"] < s["B"])


def class_means(dataset: RelationalDataset, target="label", value="amount") -> dict:
    joined = join_on_identifier(dataset, "orders", check=False)
    labels, values = joined.column(target), joined.column(value)
    return {c: float(np.mean([v for l, v in zip(labels, values) if l == c]))
            for c in sorted(set(labels)) if any(l == c for l in labels)}


def toy_fidelity(seed: int, config: TrainConfig = None, dataset: RelationalDataset = None,
                 fraction: float = 0.8) -> FidelityRun:
    real = dataset if dataset is not None else make_toy_dataset(seed=seed)
    start = time.perf_counter()
    train, _ = train_test_split(real, fraction, derive_seed(seed, "split"))
    config = config or TrainConfig()
    model, _ = train_model(train, TrainConfig(**{**config.to_dict(), "seed": derive_seed(seed, "train")}))
    synthetic = synthesize(model, train, derive_seed(seed, "generate"))
    mc = model_compatibility(real, synthetic, "label", derive_seed(seed, "split"), fraction,
                             ClassifierConfig(seed=derive_seed(seed, "classifier")))
    privacy = privacy_score(train, synthetic, derive_seed(seed, "privacy"))
    return FidelityRun(seed, mc.metrics["roc_auc"].mc, mc.metrics["f1"].mc, privacy.score, privacy.alpha,
                       class_means(train), class_means(synthetic), validate(synthetic) == [],
                       time.perf_counter() - start)
