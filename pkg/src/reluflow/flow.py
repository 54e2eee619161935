"""Gradient-flow dynamics, in reduced polar form and in full weight space.

The full flow is d(params)/dt = -grad population_loss. For a balanced start
(all hidden scalars equal to ||w||, teacher balanced) the flow closes in two
scalar coordinates, the magnitude v = ||w|| (= every hidden scalar) and the
alignment angle phi:

    dv/dt   = -(1/2) v^m ( v^(m+1) - vstar^(m+1) (sin phi - phi cos phi)/pi )
    dphi/dt = v^(m-1) vstar^(m+1) phi sin(phi) / (2 pi)

with vstar the teacher magnitude and m the number of hidden scalars. The
angle is monotone increasing; convergence is phi -> pi together with
v -> vstar.

The driving factor (sin phi - phi cos phi)/pi increases from 0 at phi = 0 to
1 at phi = pi; its shortfall from 1 is `epsilon_gap`, the quantity every
envelope in the bounds module is anchored on. Near phi = pi both the factor
and the right-hand sides are evaluated through series in (pi - phi) to keep
relative accuracy once sin(phi) underflows toward the rounding floor.

Integration is classic fixed-step fourth-order Runge-Kutta: the step-halving
order checks in the test suite and the tight envelope tolerances rely on a
deterministic, constant-step scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, DomainError
from .population import (
    NeuronConfig,
    PolarState,
    WeightState,
    population_gradient,
    population_loss,
    relu_product_moment,
)

# Magnitudes beyond this are treated as a blown-up integration.
_BLOWUP = 1e12
# Within this distance of pi the angle is declared converged and frozen.
_FREEZE_GAP = 1e-12
# Switch point for the (pi - phi) series forms.
_SERIES_GAP = 1e-6


def _sin_cos_from_gap(delta: float) -> tuple[float, float]:
    """(sin phi, cos phi) for phi = pi - delta, via 5-term series in delta."""
    d2 = delta * delta
    sin_phi = delta * (1.0 + d2 * (-1.0 / 6 + d2 * (1.0 / 120 + d2 * (-1.0 / 5040 + d2 / 362880))))
    cos_d = 1.0 + d2 * (-0.5 + d2 * (1.0 / 24 + d2 * (-1.0 / 720 + d2 / 40320)))
    return sin_phi, -cos_d


def epsilon_gap(phi: float) -> float:
    """Shortfall 1 - (sin phi - phi cos phi)/pi, in [0, 1] on [0, pi].

    Decreases from 1 at phi = 0 to 0 at phi = pi; near pi it behaves as
    (pi - phi)^2 / 2 and is computed by that series to avoid cancellation.
    """
    if not 0.0 <= phi <= math.pi:
        raise DomainError(f"phi={phi} must lie in [0, pi]")
    delta = math.pi - phi
    if delta < _SERIES_GAP:
        return delta * delta * (
            0.5 + delta * (-1.0 / (3.0 * math.pi) + delta * (-1.0 / 24 + delta / (30.0 * math.pi)))
        )
    return 1.0 - (math.sin(phi) - phi * math.cos(phi)) / math.pi


def _polar_rates(m: int, target_norm: float, v: float, phi: float) -> tuple[float, float]:
    """Unchecked right-hand side shared by the public op and the integrator."""
    delta = math.pi - phi
    if abs(delta) < _SERIES_GAP:
        sin_phi, cos_phi = _sin_cos_from_gap(delta)
    else:
        sin_phi, cos_phi = math.sin(phi), math.cos(phi)
    drive = (sin_phi - phi * cos_phi) / math.pi
    a = target_norm ** (m + 1)
    dv = -0.5 * v**m * (v ** (m + 1) - a * drive)
    dphi = v ** (m - 1) * a * phi * sin_phi / (2.0 * math.pi)
    return dv, dphi


def polar_rhs(m: int, target_norm: float, state: PolarState) -> tuple[float, float]:
    """Time derivatives (dv/dt, dphi/dt) of the reduced balanced flow."""
    if m < 0:
        raise DomainError(f"m={m} must be non-negative")
    if target_norm <= 0:
        raise DomainError(f"target_norm={target_norm} must be positive")
    if state.magnitude <= 0:
        raise DomainError("polar dynamics need magnitude > 0")
    if not 0.0 < state.angle < math.pi:
        raise DomainError(f"angle {state.angle} must lie strictly inside (0, pi)")
    return _polar_rates(m, target_norm, state.magnitude, state.angle)


def vector_rhs(config: NeuronConfig, state: WeightState) -> tuple[np.ndarray, np.ndarray]:
    """Full-space flow field: negative gradient of the population loss."""
    grad_w, grad_hidden = population_gradient(config, state)
    return -grad_w, -grad_hidden


@dataclass(frozen=True)
class FlowSpec:
    """A reduced-flow initial value problem plus integrator settings."""

    m: int
    target_norm: float
    initial: PolarState
    t_end: float
    dt: float = 1e-3

    def __post_init__(self) -> None:
        if self.m < 0:
            raise DomainError(f"m={self.m} must be non-negative")
        if self.target_norm <= 0:
            raise DomainError("target_norm must be positive")
        if self.initial.magnitude <= 0:
            raise DomainError("initial magnitude must be positive")
        if not 0.0 < self.initial.angle < math.pi:
            raise DomainError("initial angle must lie strictly inside (0, pi)")
        if not 0.0 < self.dt <= self.t_end:
            raise DomainError(f"need 0 < dt <= t_end, got dt={self.dt}, t_end={self.t_end}")


@dataclass(frozen=True)
class Trajectory:
    """Sampled path of a run: times, reduced states, optional channels.

    times[0] is always 0 (the initial state is always recorded); times are
    strictly increasing. For flow runs they are real times, for descent runs
    step indices. weight_states, when kept, holds the full parameters at the
    same sample points.
    """

    times: np.ndarray
    states: list[PolarState]
    losses: np.ndarray | None = None
    weight_states: list[WeightState] | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or len(times) != len(self.states):
            raise DomainError("times and states must align one-to-one")
        if len(times) == 0 or times[0] != 0.0:
            raise DomainError("a trajectory must start at time 0")
        if np.any(np.diff(times) <= 0):
            raise DomainError("times must be strictly increasing")
        if self.losses is not None:
            losses = np.asarray(self.losses, dtype=float)
            if losses.shape != times.shape:
                raise DomainError("losses channel must align with times")
            object.__setattr__(self, "losses", losses)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.array([s.magnitude for s in self.states])

    @property
    def angles(self) -> np.ndarray:
        return np.array([s.angle for s in self.states])


def balanced_population_loss(m: int, target_norm: float, state: PolarState) -> float:
    """Population loss of the balanced realization of a reduced state."""
    v, phi = state.magnitude, state.angle
    theta = math.pi - phi
    h = relu_product_moment(theta)
    a = 0.5 * v ** (2 * (m + 1))
    b = (v * target_norm) ** m * v * target_norm * h
    c = 0.5 * target_norm ** (2 * (m + 1))
    return 0.5 * ((a + c) - 2.0 * b)


def _check_step(v: float, phi: float, t: float) -> tuple[float, bool]:
    """Clamp/freeze the angle after a step; detect blow-up. Returns (phi, frozen)."""
    if not (math.isfinite(v) and math.isfinite(phi)):
        raise DivergenceError(f"non-finite state at t={t}")
    if abs(v) > _BLOWUP:
        raise DivergenceError(f"magnitude {v} exceeded {_BLOWUP} at t={t}")
    if phi >= math.pi:
        overshoot = phi - math.pi
        if overshoot > _FREEZE_GAP:
            raise DivergenceError(
                f"angle overshot pi by {overshoot} at t={t}; clamping this far is not allowed"
            )
        return math.nextafter(math.pi, 0.0), True
    if phi <= 0.0:
        raise DivergenceError(f"angle left (0, pi) downward at t={t}")
    if math.pi - phi <= _FREEZE_GAP:
        return phi, True
    return phi, False


def integrate_polar(spec: FlowSpec, sample_every: int = 1) -> Trajectory:
    """Integrate the reduced flow with fixed-step RK4.

    States are recorded at step 0, every sample_every-th step, and the final
    step. Once the angle comes within 1e-12 of pi it is frozen (converged)
    while the magnitude keeps evolving.
    """
    if sample_every < 1:
        raise DomainError("sample_every must be >= 1")
    m, tn = spec.m, spec.target_norm
    n_steps = max(1, round(spec.t_end / spec.dt))
    h = spec.t_end / n_steps

    v, phi = spec.initial.magnitude, spec.initial.angle
    frozen = False
    times = [0.0]
    states = [PolarState(v, phi)]
    losses = [balanced_population_loss(m, tn, states[0])]

    for k in range(n_steps):
        if frozen:
            kv1, _ = _polar_rates(m, tn, v, phi)
            kv2, _ = _polar_rates(m, tn, v + 0.5 * h * kv1, phi)
            kv3, _ = _polar_rates(m, tn, v + 0.5 * h * kv2, phi)
            kv4, _ = _polar_rates(m, tn, v + h * kv3, phi)
            v += (h / 6.0) * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4)
        else:
            kv1, kp1 = _polar_rates(m, tn, v, phi)
            kv2, kp2 = _polar_rates(m, tn, v + 0.5 * h * kv1, phi + 0.5 * h * kp1)
            kv3, kp3 = _polar_rates(m, tn, v + 0.5 * h * kv2, phi + 0.5 * h * kp2)
            kv4, kp4 = _polar_rates(m, tn, v + h * kv3, phi + h * kp3)
            v += (h / 6.0) * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4)
            phi += (h / 6.0) * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4)
        t = (k + 1) * h
        phi, now_frozen = _check_step(v, phi, t)
        frozen = frozen or now_frozen
        if (k + 1) % sample_every == 0 or k + 1 == n_steps:
            state = PolarState(v, phi)
            times.append(t)
            states.append(state)
            losses.append(balanced_population_loss(m, tn, state))

    return Trajectory(np.array(times), states, losses=np.array(losses))


def integrate_vector(
    config: NeuronConfig,
    init: WeightState,
    t_end: float,
    dt: float = 1e-3,
    sample_every: int = 1,
    keep_weights: bool = False,
) -> Trajectory:
    """Integrate the full flow d(params)/dt = -grad L with fixed-step RK4.

    Records the reduced coordinates and population loss of each sample;
    keep_weights additionally retains the full WeightState at sample points.
    Works for arbitrary (not necessarily balanced) positive hidden scalars.
    """
    if sample_every < 1:
        raise DomainError("sample_every must be >= 1")
    if not 0.0 < dt <= t_end:
        raise DomainError(f"need 0 < dt <= t_end, got dt={dt}, t_end={t_end}")
    # Validate the initial state through the checked ops once.
    population_gradient(config, init)

    d, m = config.d, config.m
    tw = config.target_w
    t_norm = config.target_norm
    p_star = config.target_product
    two_pi = 2.0 * math.pi

    def rhs(y: np.ndarray) -> np.ndarray:
        w = y[:d]
        hidden = y[d:]
        norm = math.sqrt(float(w @ w))
        p = float(np.prod(hidden)) if m else 1.0
        cos_t = max(-1.0, min(1.0, float(w @ tw) / (norm * t_norm)))
        phi = math.pi - math.acos(cos_t)
        delta = math.pi - phi
        if abs(delta) < _SERIES_GAP:
            sin_phi, cos_phi = _sin_cos_from_gap(delta)
        else:
            sin_phi, cos_phi = math.sin(phi), math.cos(phi)
        out = np.empty_like(y)
        coef_w = 0.5 * p * p - p * p_star * (sin_phi / two_pi) * (t_norm / norm)
        np.multiply(w, -coef_w, out=out[:d])
        out[:d] += (p * p_star * phi / two_pi) * tw
        if m:
            shared = 0.5 * p * norm * norm - p_star * norm * t_norm * (
                (sin_phi - phi * cos_phi) / two_pi
            )
            np.divide(-p * shared, hidden, out=out[d:])
        return out

    y = np.concatenate([init.w, np.array(init.hidden, dtype=float)])
    n_steps = max(1, round(t_end / dt))
    h = t_end / n_steps

    def snapshot(t: float) -> tuple[PolarState, float, WeightState]:
        state = WeightState(y[:d].copy(), tuple(y[d:]))
        norm = float(np.linalg.norm(state.w))
        cos_t = max(-1.0, min(1.0, float(state.w @ tw) / (norm * t_norm)))
        polar = PolarState(norm, math.pi - math.acos(cos_t))
        return polar, population_loss(config, state), state

    times = [0.0]
    polar0, loss0, w0 = snapshot(0.0)
    states = [polar0]
    losses = [loss0]
    weights = [w0] if keep_weights else None

    for k in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + (0.5 * h) * k1)
        k3 = rhs(y + (0.5 * h) * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = (k + 1) * h
        if not np.all(np.isfinite(y)) or float(np.linalg.norm(y[:d])) > _BLOWUP:
            raise DivergenceError(f"full flow blew up at t={t}")
        if m and np.any(y[d:] <= 0.0):
            raise DivergenceError(f"a hidden scalar crossed zero at t={t}")
        if (k + 1) % sample_every == 0 or k + 1 == n_steps:
            polar, loss, wstate = snapshot(t)
            times.append(t)
            states.append(polar)
            losses.append(loss)
            if weights is not None:
                weights.append(wstate)

    return Trajectory(np.array(times), states, losses=np.array(losses), weight_states=weights)
