"""Monte Carlo injection scenarios around a nominal operating point."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gridreduce.netmodel import Network, fingerprint


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    injections: np.ndarray  # S x N, pu
    q_injections: np.ndarray  # S x N, pu, same per-bus factors as injections
    seed: int
    sigma: float
    split: tuple  # (train_count, test_count)
    bus_ids: tuple = ()
    base_mva: float = 100.0
    network_hash: str = field(default="")

    def __post_init__(self):
        if self.injections.shape[0] != sum(self.split):
            raise ValueError(
                f"split {self.split} does not add up to {self.injections.shape[0]} scenarios")

    def __len__(self):
        return self.injections.shape[0]

    @property
    def is_train(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        mask[: self.split[0]] = True
        return mask


def default_split(count: int) -> tuple:
    train = int(round(0.8 * count))
    return train, count - train


def generate_scenarios(net: Network, count: int, sigma: float = 0.15, seed: int = 0,
                       split=None) -> ScenarioSet:
    """Scale every nominal bus injection by an independent ``1 + N(0, sigma)`` factor.

    Reactive injections are scaled by the same per-bus factor, keeping each
    bus at its nominal power factor. The first ``split[0]`` scenarios form
    the training set.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    split = default_split(count) if split is None else tuple(int(s) for s in split)
    rng = np.random.default_rng(seed)
    factor = 1.0 + rng.normal(0.0, sigma, size=(count, net.n_bus))
    return ScenarioSet(
        injections=net.p_inj * factor,
        q_injections=net.q_inj * factor,
        seed=int(seed),
        sigma=float(sigma),
        split=split,
        bus_ids=tuple(int(b) for b in net.bus_ids),
        base_mva=net.base_mva,
        network_hash=fingerprint(net),
    )
