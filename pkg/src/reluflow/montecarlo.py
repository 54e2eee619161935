"""Sampling oracles for the closed forms used elsewhere in the package.

Everything here estimates an expectation by plain Monte Carlo and reports a
standard error, so closed-form results can be verified against an
implementation that shares no code with them. Estimators draw from an owned
generator seeded per call and accumulate in fixed-size chunks, which keeps
memory bounded and results bit-stable for a given seed.

`dist` selects the input law: 'gaussian' is x ~ N(0, I_d); 'sphere' is the
uniform unit sphere (normalized Gaussians), under which all the second
moments shrink by exactly 1/d relative to the Gaussian forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .population import NeuronConfig, WeightState

_CHUNK = 1 << 16


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo mean with per-entry standard error of the mean."""

    value: np.ndarray
    stderr: np.ndarray
    n: int
    seed: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise DomainError("standard errors need n >= 2")
        if np.any(np.asarray(self.stderr) < 0):
            raise DomainError("stderr entries must be non-negative")


def _draw(rng: np.random.Generator, count: int, d: int, dist: str) -> np.ndarray:
    x = rng.standard_normal((count, d))
    if dist == "sphere":
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    elif dist != "gaussian":
        raise DomainError(f"unknown dist {dist!r}")
    return x


def _finish(s1: np.ndarray, s2: np.ndarray, n: int, seed: int) -> McEstimate:
    mean = s1 / n
    var = np.maximum(s2 - n * mean * mean, 0.0) / (n - 1)
    return McEstimate(value=mean, stderr=np.sqrt(var / n), n=n, seed=seed)


def _unit(u: np.ndarray, name: str) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise DimensionError(f"{name} must be a vector")
    norm = float(np.linalg.norm(u))
    if abs(norm - 1.0) > 1e-10:
        raise DomainError(f"{name} must be a unit vector")
    return u


def mc_half_space_moment(
    u: np.ndarray, n: int, seed: int, dist: str = "gaussian"
) -> McEstimate:
    """Estimate E[ 1{u.x > 0} x x^T ] with per-entry standard errors."""
    u = _unit(u, "u")
    if n < 2:
        raise DomainError("n must be >= 2")
    d = u.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s1 = np.zeros((d, d))
    s2 = np.zeros((d, d))
    left = n
    while left > 0:
        count = min(_CHUNK, left)
        x = _draw(rng, count, d, dist)
        ind = (x @ u > 0.0).astype(float)
        s1 += np.einsum("n,ni,nj->ij", ind, x, x)
        xx = x * x
        s2 += np.einsum("n,ni,nj->ij", ind, xx, xx)
        left -= count
    return _finish(s1, s2, n, seed)


def mc_double_wedge_moment(
    u: np.ndarray, v: np.ndarray, n: int, seed: int, dist: str = "gaussian"
) -> McEstimate:
    """Estimate E[ 1{u.x > 0} 1{v.x > 0} x x^T ] with standard errors."""
    u = _unit(u, "u")
    v = _unit(v, "v")
    if u.shape != v.shape:
        raise DimensionError("u and v must share a dimension")
    if n < 2:
        raise DomainError("n must be >= 2")
    d = u.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s1 = np.zeros((d, d))
    s2 = np.zeros((d, d))
    left = n
    while left > 0:
        count = min(_CHUNK, left)
        x = _draw(rng, count, d, dist)
        ind = ((x @ u > 0.0) & (x @ v > 0.0)).astype(float)
        s1 += np.einsum("n,ni,nj->ij", ind, x, x)
        xx = x * x
        s2 += np.einsum("n,ni,nj->ij", ind, xx, xx)
        left -= count
    return _finish(s1, s2, n, seed)


def mc_relu_product(u: np.ndarray, v: np.ndarray, n: int, seed: int) -> McEstimate:
    """Estimate E[ relu(u.x) relu(v.x) ] for x ~ N(0, I), unit u and v."""
    u = _unit(u, "u")
    v = _unit(v, "v")
    if u.shape != v.shape:
        raise DimensionError("u and v must share a dimension")
    if n < 2:
        raise DomainError("n must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s1 = 0.0
    s2 = 0.0
    left = n
    while left > 0:
        count = min(_CHUNK, left)
        x = _draw(rng, count, u.shape[0], "gaussian")
        y = np.maximum(x @ u, 0.0) * np.maximum(x @ v, 0.0)
        s1 += float(y.sum())
        s2 += float((y * y).sum())
        left -= count
    return _finish(np.asarray(s1), np.asarray(s2), n, seed)


def mc_population_loss(config: NeuronConfig, state: WeightState, n: int, seed: int) -> McEstimate:
    """Estimate the population loss of a state by sampling fresh inputs."""
    if n < 2:
        raise DomainError("n must be >= 2")
    p = state.product
    p_star = config.target_product
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s1 = 0.0
    s2 = 0.0
    left = n
    while left > 0:
        count = min(_CHUNK, left)
        x = _draw(rng, count, config.d, "gaussian")
        err = p * np.maximum(x @ state.w, 0.0) - p_star * np.maximum(x @ config.target_w, 0.0)
        y = 0.5 * err * err
        s1 += float(y.sum())
        s2 += float((y * y).sum())
        left -= count
    return _finish(np.asarray(s1), np.asarray(s2), n, seed)


def mc_population_gradient(
    config: NeuronConfig, state: WeightState, n: int, seed: int
) -> tuple[McEstimate, McEstimate]:
    """Estimate the loss gradient in (w, hidden scalars) by sampling.

    Per-sample contributions are e * P * 1{w.x > 0} x for the weight vector
    and e * (P / v_k) relu(w.x) for hidden scalar k, with e the signed
    residual; the derivative of relu at 0 is taken as 0 (strict indicator).
    Returns (weight-gradient estimate, hidden-gradient estimate).
    """
    if n < 2:
        raise DomainError("n must be >= 2")
    if any(v <= 0.0 for v in state.hidden):
        raise DomainError("hidden scalars must be positive")
    d, m = config.d, config.m
    p = state.product
    p_star = config.target_product
    hidden = np.array(state.hidden, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    s1w = np.zeros(d)
    s2w = np.zeros(d)
    s1h = np.zeros(m)
    s2h = np.zeros(m)
    left = n
    while left > 0:
        count = min(_CHUNK, left)
        x = _draw(rng, count, d, "gaussian")
        pre = x @ state.w
        ind = pre > 0.0
        act = np.where(ind, pre, 0.0)
        e = p * act - p_star * np.maximum(x @ config.target_w, 0.0)
        gw = (p * e * ind)[:, None] * x
        s1w += gw.sum(axis=0)
        s2w += (gw * gw).sum(axis=0)
        if m:
            gh = (e * act)[:, None] * (p / hidden)[None, :]
            s1h += gh.sum(axis=0)
            s2h += (gh * gh).sum(axis=0)
        left -= count
    return _finish(s1w, s2w, n, seed), _finish(s1h, s2h, n, seed)


def angle_concentration(d: int, eps: float, trials: int, seed: int) -> tuple[float, float]:
    """Empirical check that random directions are nearly orthogonal.

    Draws pairs u, v ~ N(0, I_d) and measures how often their cosine falls
    below eps; returns (empirical fraction, 1 - 2 exp(-d eps^2 / 2)). The
    fraction must not sit more than three binomial standard errors below the
    bound; that is asserted here, so a failing bound raises immediately.
    """
    if d < 1 or trials < 1_000:
        raise DomainError("need d >= 1 and trials >= 1000")
    if eps <= 0:
        raise DomainError("eps must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    left = trials
    while left > 0:
        count = min(_CHUNK, left)
        u = rng.standard_normal((count, d))
        v = rng.standard_normal((count, d))
        cos = np.einsum("ni,ni->n", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
        )
        hits += int(np.count_nonzero(cos < eps))
        left -= count
    fraction = hits / trials
    bound = 1.0 - 2.0 * math.exp(-0.5 * d * eps * eps)
    stderr = math.sqrt(max(fraction * (1.0 - fraction), 0.0) / trials)
    if fraction < bound - 3.0 * stderr:
        raise AssertionError(
            f"concentration bound violated: fraction {fraction} < bound {bound} - 3 stderr"
        )
    return fraction, bound
