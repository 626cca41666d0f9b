"""Synthetic-truth relational datasets with a known cross-table dependency."""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from .relational import AttributeSpec, Kind, RelationalDataset, TableData

CHANNELS = ("web", "store", "phone")


def make_toy_dataset(n_primary: int = 200, children: int = 3, separation: float = 4.0,
                     seed: int = 0, name: str = "toy") -> RelationalDataset:
    """Customers with a two-class ``label`` and ``children`` orders each.

    An order's ``amount`` is normal with unit standard deviation and a mean
    that differs by ``separation`` standard deviations between the classes of
    its customer. ``age``, ``channel`` and ``placed`` are independent noise.
    """
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n_primary) % 2)
    ages = np.round(rng.normal(40.0, 10.0, n_primary), 2)
    customers = TableData(
        "customers",
        (AttributeSpec("customer_id", Kind.IDENTIFIER, unique=True),
         AttributeSpec("label", Kind.CATEGORICAL),
         AttributeSpec("age", Kind.NUMERIC)),
        tuple((f"c{i + 1}", "AB"[labels[i]], float(ages[i])) for i in range(n_primary)),
    )
    start = datetime(2023, 1, 1)
    rows = []
    for i in range(n_primary):
        mean = 10.0 + (separation / 2.0) * (1 if labels[i] else -1)
        for _ in range(children):
            amount = round(float(rng.normal(mean, 1.0)), 3)
            channel = CHANNELS[int(rng.integers(len(CHANNELS)))]
            placed = start + timedelta(seconds=int(rng.integers(0, 365 * 86400)))
            rows.append((f"c{i + 1}", amount, channel, placed))
    orders = TableData(
        "orders",
        (AttributeSpec("customer_id", Kind.IDENTIFIER),
         AttributeSpec("amount", Kind.NUMERIC),
         AttributeSpec("channel", Kind.CATEGORICAL),
         AttributeSpec("placed", Kind.DATETIME)),
        tuple(rows),
    )
    return RelationalDataset.single_primary((customers, orders), "customers", "customer_id", name)
