"""Exponential-weight aggregation over a dictionary of intensity models.

Given empirical risks r_1..r_M computed on a learning sample of size n that is
independent of the sample the dictionary was fit on, the Gibbs weights

    w_k = exp(-n r_k / T) / sum_j exp(-n r_j / T)

are the unique minimizer over the simplex of the penalized linearized risk
sum_k w_k r_k + (T/n) sum_k w_k log w_k. The aggregate is the corresponding
convex mixture of the dictionary members.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import Dataset, IntensityModel, Mixture
from .errors import CapExceeded, InvalidConfig
from .risk import empirical_risk

GRID_DICTIONARY_CAP = 4


def default_temperature(clip: float) -> float:
    """T = 4 clip^2: a squared sup-norm scale for the learning losses."""
    return 4.0 * clip * clip


def gibbs_weights(risks: Sequence[float], n: int, T: float) -> np.ndarray:
    """exp(-n risk / T) normalized, computed with max subtraction.

    Stable for |n risk / T| up to ~1e8; weights that underflow to zero are
    kept as computed.
    """
    r = np.asarray(risks, dtype=np.float64)
    if r.size == 0:
        raise InvalidConfig("gibbs_weights needs at least one risk")
    if not T > 0.0:
        raise InvalidConfig(f"temperature must be positive, got {T}")
    if n < 1:
        raise InvalidConfig(f"sample size must be at least 1, got {n}")
    g = -(n / T) * r
    g -= g.max()
    w = np.exp(g)
    return w / w.sum()


def penalized_objective(weights: np.ndarray, risks: np.ndarray, n: int, T: float) -> float:
    """sum w r + (T/n) sum w log w, with 0 log 0 = 0."""
    w = np.asarray(weights, dtype=np.float64)
    r = np.asarray(risks, dtype=np.float64)
    ent = np.where(w > 0.0, w * np.log(np.where(w > 0.0, w, 1.0)), 0.0)
    return float(w @ r + (T / n) * ent.sum())


def verify_gibbs_optimality(
    risks: Sequence[float], n: int, T: float, grid_step: float
) -> tuple[float, float]:
    """Objective at the closed-form weights vs the simplex-grid brute force.

    The closed form is the exact minimizer, so its objective never exceeds the
    grid minimum (up to evaluation roundoff). Grid search is exponential in
    the dictionary size, hence the hard cap.
    """
    r = np.asarray(risks, dtype=np.float64)
    if r.size == 0:
        raise InvalidConfig("needs at least one risk")
    if r.size > GRID_DICTIONARY_CAP:
        raise CapExceeded(
            f"grid search over {r.size} models is infeasible",
            required=int(r.size),
            cap=GRID_DICTIONARY_CAP,
        )
    if not 0.0 < grid_step <= 0.01:
        raise InvalidConfig(f"grid_step must lie in (0, 0.01], got {grid_step}")
    closed = penalized_objective(gibbs_weights(r, n, T), r, n, T)

    m = r.size
    k = int(round(1.0 / grid_step))
    if m == 1:
        return closed, penalized_objective(np.ones(1), r, n, T)
    axes = np.indices((k + 1,) * (m - 1)).reshape(m - 1, -1)
    keep = axes.sum(axis=0) <= k
    counts = axes[:, keep]
    last = k - counts.sum(axis=0)
    w = np.vstack([counts, last[None, :]]).T.astype(np.float64) / k
    lin = w @ r
    ent = np.where(w > 0.0, w * np.log(np.where(w > 0.0, w, 1.0)), 0.0).sum(axis=1)
    grid_min = float(np.min(lin + (T / n) * ent))
    return closed, grid_min


@dataclass(frozen=True)
class AggregateFit:
    """Gibbs-weighted dictionary with the risks that produced the weights."""

    dictionary: tuple[IntensityModel, ...]
    weights: np.ndarray
    temperature: float
    learning_risks: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.dictionary),):
            raise InvalidConfig("one weight per dictionary member required")
        if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidConfig("weights must be a point on the simplex")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        lr = np.asarray(self.learning_risks, dtype=np.float64)
        lr.setflags(write=False)
        object.__setattr__(self, "learning_risks", lr)

    @cached_property
    def model(self) -> IntensityModel:
        return Mixture(tuple(zip(self.weights.tolist(), self.dictionary)))


def aggregate_from_risks(
    dictionary: Sequence[IntensityModel],
    risks: Sequence[float],
    n: int,
    T: float,
) -> AggregateFit:
    """Form the aggregate from precomputed learning risks."""
    if len(dictionary) == 0:
        raise InvalidConfig("aggregation needs a nonempty dictionary")
    if len(dictionary) != len(risks):
        raise InvalidConfig("one learning risk per dictionary member required")
    w = gibbs_weights(risks, n, T)
    return AggregateFit(
        dictionary=tuple(dictionary),
        weights=w,
        temperature=float(T),
        learning_risks=np.asarray(risks, dtype=np.float64),
    )


def aggregate(
    dictionary: Sequence[IntensityModel], learning_data: Dataset, T: float
) -> AggregateFit:
    """Evaluate each member's empirical risk on the learning half and mix.

    The learning sample must be disjoint from whatever data fit the
    dictionary; the pipeline enforces that split.
    """
    if len(dictionary) == 0:
        raise InvalidConfig("aggregation needs a nonempty dictionary")
    risks = [empirical_risk(learning_data, m) for m in dictionary]
    return aggregate_from_risks(dictionary, risks, learning_data.n, T)


def jackknife(splits: Sequence[AggregateFit]) -> IntensityModel:
    """Equal-weight average of aggregates from repeated splits."""
    if len(splits) == 0:
        raise InvalidConfig("jackknife needs at least one aggregate")
    if len(splits) == 1:
        return splits[0].model
    share = 1.0 / len(splits)
    return Mixture(tuple((share, s.model) for s in splits))
