"""Bayesian learning of user reward parameters from observed route choices.

The posterior over (omega1, omega2, zeta) given a user's choice history is
proportional to the prior times the product of logit choice likelihoods; it
has no closed form, so samples come from a random-walk Metropolis-Hastings
chain.  Active querying then picks the next (latency, price) menu by
minimizing the sum over outcomes of the squared aggregate choice probability
across posterior samples: menus the samples disagree on score lower and are
asked first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .choice import (
    PopulationSamples,
    RouteOffer,
    UserParams,
    _dominated_mask,
    _reward_matrix,
    _softmax_rows,
    dominated_set,
)


class ChoiceDataError(ValueError):
    """Recorded choice is inconsistent with its offer."""


@dataclass(frozen=True)
class ChoiceDatum:
    """One observed decision: the offer shown and the option taken.

    ``chosen`` is 0 for declining the service, i in 1..N for route i.  A
    recorded pick of a dominated route is rejected: the model assigns it
    probability zero, so it cannot be data.
    """

    offer: RouteOffer
    chosen: int

    def __post_init__(self) -> None:
        if not 0 <= self.chosen <= self.offer.n:
            raise ChoiceDataError(
                f"chosen index {self.chosen} out of range 0..{self.offer.n}")
        if self.chosen != 0 and self.chosen in dominated_set(self.offer):
            raise ChoiceDataError(
                f"chosen route {self.chosen} is dominated in its offer")

    def to_dict(self) -> dict:
        return {"offer": self.offer.to_dict(), "chosen": self.chosen}

    @classmethod
    def from_dict(cls, doc: dict) -> "ChoiceDatum":
        return cls(offer=RouteOffer.from_dict(doc["offer"]), chosen=int(doc["chosen"]))


@dataclass(frozen=True)
class Prior:
    """Prior over (omega1, omega2, zeta).

    The built-in form is a uniform box over nonnegative parameters; a custom
    unnormalized log-density can be supplied instead and is evaluated on top
    of the box support.
    """

    lower: tuple[float, float, float] = (0.0, 0.0, 0.0)
    upper: tuple[float, float, float] = (3.0, 3.0, 3.0)
    log_density_fn: Callable[[np.ndarray], float] | None = None

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("prior bounds must have three entries")
        if not np.isfinite(lo).all() or not np.isfinite(hi).all():
            raise ValueError("prior bounds must be finite")
        if (lo < 0).any():
            raise ValueError("prior support must be nonnegative")
        if (hi < lo).any():
            raise ValueError("upper bounds must not fall below lower bounds")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def contains(self, params: np.ndarray) -> bool:
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return bool((params >= lo).all() and (params <= hi).all())

    def log_density(self, params: np.ndarray) -> float:
        """Unnormalized log prior; -inf outside the box support."""
        if not self.contains(params):
            return -math.inf
        if self.log_density_fn is not None:
            return float(self.log_density_fn(params))
        return 0.0

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return rng.uniform(lo, hi, size=(count, 3))

    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, doc: dict) -> "Prior":
        return cls(lower=tuple(doc["lower"]), upper=tuple(doc["upper"]))


@dataclass(frozen=True)
class MHConfig:
    """Metropolis-Hastings chain settings.

    With ``chain_length`` unset the chain runs just long enough to emit the
    requested number of samples after discarding the burn-in share and
    thinning.  Proposal scales default to 5% of the prior box width per
    coordinate; proposals leaving the support are rejected outright.
    """

    chain_length: int | None = None
    burn_in_fraction: float = 0.2
    thinning: int = 20
    proposal_scale: tuple[float, float, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn-in fraction must lie in [0, 1)")
        if self.chain_length is not None and self.chain_length < 1:
            raise ValueError("chain length must be positive")

    def resolved_lengths(self, num_samples: int) -> tuple[int, int]:
        """(total iterations, burn-in iterations) for the requested sample count."""
        if self.chain_length is not None:
            total = self.chain_length
            burn = int(self.burn_in_fraction * total)
            if (total - burn) < num_samples:
                raise ValueError(
                    f"chain of length {total} cannot emit {num_samples} samples "
                    f"after burn-in {burn}")
            return total, burn
        keep_span = num_samples * self.thinning
        burn = int(math.ceil(keep_span * self.burn_in_fraction
                             / (1.0 - self.burn_in_fraction)))
        return keep_span + burn, burn


class _DataMatrix:
    """Padded array view of a choice dataset for fast likelihood evaluation.

    Column 0 of the reward layout is the decline option, matching the choice
    convention; routes occupy columns 1..max_n with a validity mask.
    """

    def __init__(self, data: list[ChoiceDatum]):
        self.count = len(data)
        max_n = max((d.offer.n for d in data), default=0)
        self.latencies = np.zeros((self.count, max_n))
        self.prices = np.zeros((self.count, max_n))
        self.blocked = np.ones((self.count, max_n), dtype=bool)
        self.alt_latency = np.zeros(self.count)
        self.chosen_col = np.zeros(self.count, dtype=int)
        for m, datum in enumerate(data):
            n = datum.offer.n
            self.latencies[m, :n] = datum.offer.latencies
            self.prices[m, :n] = datum.offer.prices
            blocked = np.zeros(n, dtype=bool)
            blocked[_dominated_mask(datum.offer)] = True
            self.blocked[m, :n] = blocked
            self.alt_latency[m] = datum.offer.alt_latency
            self.chosen_col[m] = datum.chosen  # 0 = decline column

    def log_likelihood(self, params: np.ndarray) -> float:
        """Sum over data of the log probability of the recorded choice."""
        if self.count == 0:
            return 0.0
        omega1, omega2, zeta = params
        rewards = np.empty((self.count, self.latencies.shape[1] + 1))
        rewards[:, 0] = -zeta * self.alt_latency
        rewards[:, 1:] = -omega1 * self.latencies - omega2 * self.prices
        rewards[:, 1:][self.blocked] = -np.inf
        peak = rewards.max(axis=1)
        logz = peak + np.log(np.exp(rewards - peak[:, None]).sum(axis=1))
        picked = rewards[np.arange(self.count), self.chosen_col]
        return float((picked - logz).sum())


def log_posterior_unnorm(params: UserParams | np.ndarray, data: list[ChoiceDatum],
                         prior: Prior) -> float:
    """Unnormalized log posterior: log prior plus per-choice log likelihoods.

    Choices are conditionally independent given the parameters, so the data
    term is a plain sum.  Returns -inf outside the prior support.
    """
    vec = params.as_array() if isinstance(params, UserParams) else np.asarray(params, dtype=float)
    lp = prior.log_density(vec)
    if lp == -math.inf:
        return -math.inf
    return lp + _DataMatrix(data).log_likelihood(vec)


def sample_posterior(data: list[ChoiceDatum], prior: Prior, num_samples: int,
                     cfg: MHConfig) -> PopulationSamples:
    """Draw posterior samples by random-walk Metropolis-Hastings.

    Gaussian proposals per coordinate; moves leaving the prior support are
    rejected.  Deterministic for a fixed seed.  Coordinates with zero prior
    width stay pinned, which is how conditioned (reduced) posteriors are
    sampled.
    """
    if num_samples < 1:
        raise ValueError("at least one sample is required")
    total, burn = cfg.resolved_lengths(num_samples)
    scale = (np.asarray(cfg.proposal_scale, dtype=float)
             if cfg.proposal_scale is not None else 0.05 * prior.widths)
    if scale.shape != (3,):
        raise ValueError("proposal scale needs three entries")
    rng = np.random.default_rng(cfg.seed)
    matrix = _DataMatrix(data)

    def logpost(vec: np.ndarray) -> float:
        lp = prior.log_density(vec)
        if lp == -math.inf:
            return -math.inf
        return lp + matrix.log_likelihood(vec)

    current = prior.center()
    current_lp = logpost(current)
    steps = rng.normal(size=(total, 3)) * scale
    accept_logs = np.log(rng.uniform(size=total))
    kept: list[np.ndarray] = []
    for t in range(total):
        proposal = current + steps[t]
        proposal_lp = logpost(proposal)
        if proposal_lp - current_lp > accept_logs[t]:
            current = proposal
            current_lp = proposal_lp
        if t >= burn and (t - burn) % cfg.thinning == 0 and len(kept) < num_samples:
            kept.append(current.copy())
    if len(kept) < num_samples:
        raise ValueError("chain too short for the requested sample count")
    return PopulationSamples(np.array(kept))


@dataclass(frozen=True)
class Query:
    """Candidate menu to show a user; includes the implicit decline option."""

    offer: RouteOffer

    def __post_init__(self) -> None:
        if self.offer.n < 1:
            raise ValueError("a query needs at least one priced option")


@dataclass(frozen=True)
class QuerySpace:
    """Search box for query synthesis: per-option latency and price ranges.

    The default box is deliberately generous relative to typical reward
    weights; most uniform draws from it are lopsided menus, which is exactly
    what the synthesis is supposed to improve on.
    """

    n_options: int = 3
    latency_range: tuple[float, float] = (0.5, 10.0)
    price_range: tuple[float, float] = (0.0, 20.0)
    alt_latency: float = 5.0

    def __post_init__(self) -> None:
        if self.n_options < 1:
            raise ValueError("queries need at least one option")
        if not 0 < self.latency_range[0] <= self.latency_range[1]:
            raise ValueError("latency range must be positive and ordered")
        if not 0 <= self.price_range[0] <= self.price_range[1]:
            raise ValueError("price range must be nonnegative and ordered")
        if self.alt_latency <= 0:
            raise ValueError("alternative latency must be positive")

    def bounds(self) -> list[tuple[float, float]]:
        return ([self.latency_range] * self.n_options
                + [self.price_range] * self.n_options)

    def offer_from_vector(self, x: np.ndarray) -> RouteOffer:
        n = self.n_options
        return RouteOffer(latencies=x[:n].copy(), prices=x[n:].copy(),
                          alt_latency=self.alt_latency)


def random_query(space: QuerySpace, rng: np.random.Generator) -> Query:
    """Uniform draw from the query search box."""
    lo_l, hi_l = space.latency_range
    lo_p, hi_p = space.price_range
    return Query(RouteOffer(
        latencies=rng.uniform(lo_l, hi_l, size=space.n_options),
        prices=rng.uniform(lo_p, hi_p, size=space.n_options),
        alt_latency=space.alt_latency,
    ))


def query_objective(query: Query, samples: PopulationSamples) -> float:
    """Sum over outcomes of the squared aggregate choice probability.

    Aggregates are taken across posterior samples without the 1/M factor;
    lower values mean the samples disagree more about the answer, so the
    query is more informative.  Bounded between M^2 / (#undominated + 1)
    and M^2.
    """
    probs = _softmax_rows(_reward_matrix(samples.values, query.offer,
                                         _dominated_mask(query.offer)))
    totals = probs.sum(axis=0)
    return float((totals ** 2).sum())


def _objective_and_decisiveness(query: Query,
                                samples: PopulationSamples) -> tuple[float, float]:
    """Exact objective plus the per-sample decisiveness used for tie-breaking.

    The objective only sees the aggregate outcome distribution, so a menu
    every sample shrugs at scores the same as one the samples answer
    decisively but differently; only the second kind moves the posterior.
    Decisiveness (the summed squared per-sample probabilities) separates the
    two: near-equal-objective candidates with higher decisiveness win.
    """
    probs = _softmax_rows(_reward_matrix(samples.values, query.offer,
                                         _dominated_mask(query.offer)))
    totals = probs.sum(axis=0)
    return float((totals ** 2).sum()), float((probs ** 2).sum())


def _objective_and_grad(x: np.ndarray, space: QuerySpace, params: np.ndarray,
                        dominated: np.ndarray) -> tuple[float, np.ndarray]:
    """Query objective and its gradient in the flattened (latencies, prices).

    The dominated mask is held fixed so the objective is smooth; membership
    changes are handled by the caller between restarts.
    """
    n = space.n_options
    offer = space.offer_from_vector(x)
    probs = _softmax_rows(_reward_matrix(params, offer, dominated))
    totals = probs.sum(axis=0)
    value = float((totals ** 2).sum())
    # d(value)/d(reward of option j for sample m)
    #   = 2 * P_m(j) * (S_j - <S, P_m>)
    inner = probs @ totals
    dval_dr = 2.0 * probs * (totals[None, :] - inner[:, None])
    route_part = dval_dr[:, 1:]  # decline reward does not depend on the query
    grad_l = -(params[:, 0:1] * route_part).sum(axis=0)
    grad_p = -(params[:, 1:2] * route_part).sum(axis=0)
    grad = np.concatenate([grad_l, grad_p])
    grad[np.concatenate([dominated, dominated])] = 0.0
    return value, grad


@dataclass(frozen=True)
class SynthesisConfig:
    restarts: int = 1000
    seed: int = 0
    max_iterations: int = 200
    tie_rel: float = 0.25


def synthesize_query(samples: PopulationSamples, space: QuerySpace,
                     cfg: SynthesisConfig = SynthesisConfig()) -> Query:
    """Locally minimize the query objective by multistart quasi-Newton search.

    Each restart starts from a uniform point of the search box, fixes the
    dominated set implied by that point, runs a bound-constrained L-BFGS
    descent on the smoothed objective, and is finally rescored with the
    exact objective (dominance recomputed).  Candidates within ``tie_rel``
    of the best objective count as ties and break toward higher per-sample
    decisiveness (see _objective_and_decisiveness).  Deterministic for a
    fixed seed.
    """
    if cfg.restarts < 1:
        raise ValueError("at least one restart is required")
    rng = np.random.default_rng(cfg.seed)
    bounds = space.bounds()
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    scored: list[tuple[float, float, Query]] = []
    best_value = math.inf
    for _ in range(cfg.restarts):
        x0 = rng.uniform(lo, hi)
        if np.all(hi - lo <= 0):
            x = x0
        else:
            dominated = _dominated_mask(space.offer_from_vector(x0))
            result = minimize(
                _objective_and_grad, x0, jac=True,
                args=(space, samples.values, dominated),
                method="L-BFGS-B", bounds=bounds,
                options={"maxiter": cfg.max_iterations},
            )
            x = result.x
            # fall back to the start if fixing the dominated set misled the descent
            if query_objective(Query(space.offer_from_vector(x)), samples) \
                    > query_objective(Query(space.offer_from_vector(x0)), samples):
                x = x0
        query = Query(space.offer_from_vector(x))
        value, decisiveness = _objective_and_decisiveness(query, samples)
        scored.append((value, decisiveness, query))
        best_value = min(best_value, value)
    threshold = best_value * (1.0 + cfg.tie_rel)
    best: tuple[float, float, Query] | None = None
    for value, decisiveness, query in scored:
        if value > threshold:
            continue
        if (best is None or decisiveness > best[1] + 1e-12
                or (abs(decisiveness - best[1]) <= 1e-12 and value < best[0] - 1e-12)):
            best = (value, decisiveness, query)
    assert best is not None
    return best[2]


def simulate_choice(true_params: UserParams, offer: RouteOffer,
                    rng: np.random.Generator) -> int:
    """Sample a choice index (0 declines) from the logit model of a known user."""
    probs = _softmax_rows(_reward_matrix(true_params.as_array()[None, :], offer,
                                         _dominated_mask(offer)))[0]
    return int(rng.choice(probs.size, p=probs))


def load_choice_data(path: str | Path) -> list[ChoiceDatum]:
    """Read a choice dataset from JSONL."""
    data = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            data.append(ChoiceDatum.from_dict(json.loads(line)))
    return data


def save_choice_data(data: list[ChoiceDatum], path: str | Path) -> None:
    Path(path).write_text(
        "\n".join(json.dumps(d.to_dict()) for d in data) + ("\n" if data else ""))
