"""Stable moving-average processes X_t = sum_j theta_j eps_{t-j}."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stable import StableParams, make_rng, stable_sample

__all__ = ["SmaModel", "aggregate_params", "simulate"]


@dataclass(frozen=True)
class SmaModel:
    """MA coefficients (theta_0 = 1, theta_1, ..., theta_q) and innovation law."""

    theta: tuple[float, ...]
    innovation: StableParams

    def __post_init__(self):
        theta = tuple(float(t) for t in self.theta)
        object.__setattr__(self, "theta", theta)
        if not theta or theta[0] != 1.0:
            raise ValueError("theta must start with theta_0 = 1")
        if not all(math.isfinite(t) for t in theta):
            raise ValueError("theta coefficients must be finite")

    @classmethod
    def ma1(cls, theta1: float, innovation: StableParams) -> "SmaModel":
        return cls((1.0, theta1), innovation)

    @property
    def q(self) -> int:
        return len(self.theta) - 1


def aggregate_params(model: SmaModel) -> StableParams:
    """Marginal S0 law of X_t.

    In S1 coordinates (alpha != 1) the location mu = delta - beta*gamma*tan(pi*alpha/2)
    is linear under independent sums and scaling, gamma^alpha adds, and
    beta*gamma^alpha adds with sign(theta_j).  The result is mapped back to S0.
    """
    inn = model.innovation
    alpha, beta0, gamma0, delta0 = inn.as_tuple()
    if not any(model.theta[1:]):
        return inn
    if alpha == 1.0:
        raise NotImplementedError("aggregate law for alpha = 1 is not available")
    weights = np.abs(model.theta) ** alpha
    total = weights.sum()
    signed = (np.sign(model.theta) * weights).sum()
    gamma = gamma0 * total ** (1.0 / alpha)
    beta = beta0 * signed / total
    tan_term = math.tan(0.5 * math.pi * alpha)
    mu0 = delta0 - beta0 * gamma0 * tan_term
    mu = mu0 * sum(model.theta)
    delta = mu + beta * gamma * tan_term
    return StableParams(alpha, float(beta), float(gamma), float(delta))


def simulate(model: SmaModel, n: int, seed=0) -> np.ndarray:
    """n consecutive observations of the process.

    Draws n + q innovations so that the first returned value already
    combines q earlier shocks.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed)
    eps = stable_sample(model.innovation, n + model.q, rng)
    if model.q == 0:
        return eps
    return np.convolve(eps, np.asarray(model.theta), mode="valid")
