"""Route-choice model of autonomous mobility service users.

A user weighs each offered route by time and money and may instead decline
the service in favor of an outside option (walking, transit, ...).  Choices
follow a multinomial logit over the rewards

    route i:  -omega1 * latency_i - omega2 * price_i     (undominated routes)
    route i:  -inf                                       (dominated routes)
    decline:  -zeta * alt_latency

Choice indices follow one convention everywhere: 0 declines the service and
i in 1..N picks route i.  Probability and fraction vectors have length N+1
and are indexed the same way (entry 0 is the decline option).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class UserParams:
    """Reward parameters: time weight, money weight, outside-option weight."""

    omega1: float
    omega2: float
    zeta: float

    def __post_init__(self) -> None:
        if self.omega1 < 0 or self.omega2 < 0 or self.zeta < 0:
            raise ValueError("reward parameters must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([self.omega1, self.omega2, self.zeta])


@dataclass(frozen=True)
class RouteOffer:
    """Menu of route latencies and prices plus the outside-option latency."""

    latencies: np.ndarray
    prices: np.ndarray
    alt_latency: float

    def __post_init__(self) -> None:
        lat = np.asarray(self.latencies, dtype=float)
        pr = np.asarray(self.prices, dtype=float)
        if lat.ndim != 1 or lat.shape != pr.shape:
            raise ValueError("latencies and prices must be 1-d and of equal length")
        if (lat <= 0).any():
            raise ValueError("latencies must be strictly positive")
        if (pr < 0).any():
            raise ValueError("prices must be nonnegative")
        if not self.alt_latency > 0:
            raise ValueError("alternative latency must be strictly positive")
        object.__setattr__(self, "latencies", lat)
        object.__setattr__(self, "prices", pr)

    @property
    def n(self) -> int:
        return self.latencies.size

    def to_dict(self) -> dict:
        return {
            "l": self.latencies.tolist(),
            "p": self.prices.tolist(),
            "l_w": self.alt_latency,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RouteOffer":
        return cls(latencies=np.asarray(doc["l"], dtype=float),
                   prices=np.asarray(doc["p"], dtype=float),
                   alt_latency=float(doc["l_w"]))


class PopulationSamples:
    """Set of user-parameter samples representing a population distribution.

    Stored as an (M, 3) array of (omega1, omega2, zeta) rows.
    """

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 3 or values.shape[0] < 1:
            raise ValueError("population samples must form a nonempty (M, 3) array")
        if (values < 0).any():
            raise ValueError("sampled parameters must be nonnegative")
        self.values = values

    @classmethod
    def from_users(cls, users) -> "PopulationSamples":
        return cls(np.array([u.as_array() for u in users]))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def users(self) -> list[UserParams]:
        return [UserParams(*row) for row in self.values]

    def __eq__(self, other) -> bool:
        return isinstance(other, PopulationSamples) and np.array_equal(
            self.values, other.values)


def dominated_set(offer: RouteOffer) -> set[int]:
    """Route indices (1-based) that are strictly worse deals than some other route.

    Route i is dominated when another route is at least as good in both price
    and latency and strictly better in one.  Comparisons are exact; identical
    (price, latency) pairs do not dominate each other.
    """
    p, l = offer.prices, offer.latencies
    worse_price = p[:, None] > p[None, :]
    worse_lat = l[:, None] > l[None, :]
    geq_price = p[:, None] >= p[None, :]
    geq_lat = l[:, None] >= l[None, :]
    dominated_by = (worse_price & geq_lat) | (geq_price & worse_lat)
    return {int(i) + 1 for i in np.nonzero(dominated_by.any(axis=1))[0]}


def _dominated_mask(offer: RouteOffer) -> np.ndarray:
    mask = np.zeros(offer.n, dtype=bool)
    for i in dominated_set(offer):
        mask[i - 1] = True
    return mask


def reward(user: UserParams, offer: RouteOffer, choice: int) -> float:
    """Reward of one option; -inf for dominated routes, finite otherwise."""
    if not 0 <= choice <= offer.n:
        raise IndexError(f"choice {choice} out of range 0..{offer.n}")
    if choice == 0:
        return -user.zeta * offer.alt_latency
    if choice in dominated_set(offer):
        return -np.inf
    i = choice - 1
    return -user.omega1 * offer.latencies[i] - user.omega2 * offer.prices[i]


def _reward_matrix_raw(params: np.ndarray, latencies: np.ndarray,
                       prices: np.ndarray, alt_latency: float,
                       dominated_mask: np.ndarray) -> np.ndarray:
    """(M, N+1) rewards from raw arrays; column 0 is the decline option."""
    omega1 = params[:, 0:1]
    omega2 = params[:, 1:2]
    zeta = params[:, 2:3]
    routes = -omega1 * latencies[None, :] - omega2 * prices[None, :]
    routes[:, dominated_mask] = -np.inf
    decline = -zeta * alt_latency
    return np.hstack([decline, routes])


def _reward_matrix(params: np.ndarray, offer: RouteOffer,
                   dominated_mask: np.ndarray) -> np.ndarray:
    return _reward_matrix_raw(params, offer.latencies, offer.prices,
                              offer.alt_latency, dominated_mask)


def _softmax_rows(rewards: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction; -inf entries get probability 0."""
    shift = rewards - np.max(rewards, axis=1, keepdims=True)
    weights = np.where(np.isneginf(shift), 0.0, np.exp(shift))
    return weights / weights.sum(axis=1, keepdims=True)


def choice_probabilities(user: UserParams, offer: RouteOffer) -> np.ndarray:
    """Logit choice distribution over decline (index 0) and routes 1..N."""
    rewards = _reward_matrix(user.as_array()[None, :], offer, _dominated_mask(offer))
    return _softmax_rows(rewards)[0]


def expected_fractions(population: PopulationSamples, offer: RouteOffer) -> np.ndarray:
    """Population-average choice distribution (Monte-Carlo estimate of q).

    Entry 0 is the expected declining fraction, entry i the expected fraction
    picking route i.
    """
    rewards = _reward_matrix(population.values, offer, _dominated_mask(offer))
    return _softmax_rows(rewards).mean(axis=0)


def load_population(path: str | Path) -> PopulationSamples:
    """Read population samples from JSONL, one parameter triple per line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        doc = json.loads(line)
        rows.append([float(doc["omega1"]), float(doc["omega2"]), float(doc["zeta"])])
    if not rows:
        raise ValueError(f"population file {path} holds no samples")
    return PopulationSamples(np.array(rows))


def save_population(population: PopulationSamples, path: str | Path) -> None:
    lines = [
        json.dumps({"omega1": row[0], "omega2": row[1], "zeta": row[2]})
        for row in population.values.tolist()
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def population_jsonl(population: PopulationSamples) -> str:
    return "\n".join(
        json.dumps({"omega1": row[0], "omega2": row[1], "zeta": row[2]})
        for row in population.values.tolist()
    ) + "\n"
