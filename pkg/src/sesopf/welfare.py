"""Consumer satisfaction, inverse demand, generation cost, and the
SES-weighted welfare objective.

Satisfaction of an aggregator consuming p MW is the concave quadratic
gamma*p - 0.5*mu*p^2 up to the saturation point gamma/mu, constant beyond it.
The marginal satisfaction gamma - mu*p is the inverse demand (willingness to
pay) on the non-saturated branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .casemodel import Aggregator, CaseData, Generator


@dataclass(frozen=True)
class SatisfactionParams:
    gamma: float
    mu: float

    def __post_init__(self):
        if self.gamma <= 0 or self.mu <= 0:
            raise ValueError("gamma and mu must be positive")

    @property
    def saturation_point(self) -> float:
        return self.gamma / self.mu


def _params(obj) -> SatisfactionParams:
    if isinstance(obj, SatisfactionParams):
        return obj
    return SatisfactionParams(obj.gamma, obj.mu)


def satisfaction(params, p: float) -> float:
    """Consumer satisfaction in $/h at demand p (MW)."""
    params = _params(params)
    if p < 0:
        raise ValueError("demand must be nonnegative")
    sat = params.saturation_point
    if p >= sat:
        return 0.5 * params.gamma ** 2 / params.mu
    return params.gamma * p - 0.5 * params.mu * p * p


def marginal_satisfaction(params, p: float) -> float:
    """dU/dp, valid for all p >= 0 (zero on the saturated branch)."""
    params = _params(params)
    if p >= params.saturation_point:
        return 0.0
    return params.gamma - params.mu * p


def inverse_demand(params, p: float) -> float:
    """Willingness-to-pay price ($/MWh) at demand p on [0, gamma/mu]."""
    params = _params(params)
    if not 0 <= p <= params.saturation_point:
        raise ValueError("demand outside [0, gamma/mu]")
    return params.gamma - params.mu * p


def normalized_satisfaction(agg: Aggregator, p: float) -> float:
    """Satisfaction at p relative to satisfaction at the normal limit."""
    base = satisfaction(agg, agg.p_n)
    if base <= 0:
        raise ValueError("normal-limit satisfaction must be positive")
    return satisfaction(agg, p) / base


def gen_cost(gen: Generator, p: float) -> float:
    """Quadratic generation cost a*p^2 + b*p + c in $/h, p in MW."""
    return gen.a * p * p + gen.b * p + gen.c


def marginal_cost(gen: Generator, p: float) -> float:
    return 2.0 * gen.a * p + gen.b


def social_objective(case: CaseData, p_agg, p_gen) -> tuple[float, float, float]:
    """Evaluate the welfare objective at MW demand/generation vectors.

    Returns (weighted_objective, total_satisfaction, total_cost) where
    weighted_objective = sum(sigma * U) - sum(C) and total_satisfaction is
    the unweighted sum of satisfactions. Social welfare as reported
    elsewhere is total_satisfaction - total_cost.
    """
    p_agg = np.asarray(p_agg, dtype=float)
    p_gen = np.asarray(p_gen, dtype=float)
    if p_agg.shape != (len(case.aggregators),):
        raise ValueError("p_agg length must match the aggregator count")
    if p_gen.shape != (len(case.generators),):
        raise ValueError("p_gen length must match the generator count")

    sats = [satisfaction(a, p) for a, p in zip(case.aggregators, p_agg)]
    total_satisfaction = float(sum(sats))
    weighted = float(sum(a.sigma * s for a, s in zip(case.aggregators, sats)))
    total_cost = float(sum(gen_cost(g, p) for g, p in zip(case.generators, p_gen)))
    return weighted - total_cost, total_satisfaction, total_cost
