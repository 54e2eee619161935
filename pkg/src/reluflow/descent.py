"""Gradient descent and its bridge to the flow results.

The bridge: solutions of the flow that can be written as w(t) = g(e^(-c t))
turn into descent-side statements by substituting e^(-c t) -> (1 - c eta)^T,
accurate to first order in the step size over any fixed horizon c eta T.
`ExpFlowForm` carries one such (c, g) pair; `gf_to_gd` performs the
substitution; `flow_forms_for` builds the pairs realizing the closed-form
envelopes of the bounds module, so the descent-side envelopes in `gd_bounds`
are literally the flow envelopes pushed through the substitution (the angle
upper band is the sum of two such pairs, rates c and 3c, then clipped at pi).

Step-size thresholds: every descent-side band is derived under a smallness
condition on eta. `eta_threshold` returns the theorem-scale constant; the
bridge refuses eta above a tenth of it and warns above a hundredth, while the
band evaluators only warn (a run with a too-large step still wants its band
drawn, it just loses the guarantee).

`run_gd` trains the deep single-ReLU-neuron model itself, either on the
population gradient (exact closed form) or on a fixed dataset drawn once
(full-batch, realizable labels from the teacher).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .bounds import BoundEnvelope
from .errors import DivergenceError, DomainError, UnavailableError
from .flow import Trajectory, epsilon_gap
from .population import (
    NeuronConfig,
    PolarState,
    WeightState,
    polar_of,
    population_gradient,
    population_loss,
)

_BLOWUP = 1e12


@dataclass(frozen=True)
class DescentConfig:
    """Step size, length, and gradient source of a descent run.

    mode 'population' uses the exact gradient; 'empirical' uses the
    full-batch gradient on n_samples inputs drawn once from seed.
    """

    eta: float
    steps: int
    mode: str = "population"
    n_samples: int = 0
    seed: int = 0
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise DomainError("eta must be positive")
        if self.steps < 0:
            raise DomainError("steps must be non-negative")
        if self.mode not in ("population", "empirical"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.mode == "empirical" and self.n_samples < 1:
            raise DomainError("empirical mode needs n_samples >= 1")
        if self.record_every < 1:
            raise DomainError("record_every must be >= 1")


@dataclass(frozen=True)
class ExpFlowForm:
    """A flow solution in exponential-substitution form, w(t) = g(e^(-c t)).

    g must be injective on [0, 1]; that is spot-checked on a thousand-point
    grid at construction. g_prime, when supplied, is the derivative of g
    (available to error analyses; not required by the substitution itself).
    """

    c: float
    g: Callable[[float], float]
    g_prime: Callable[[float], float] | None = None

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise DomainError("decay rate c must be positive")
        values = [self.g(x) for x in np.linspace(0.0, 1.0, 1000)]
        diffs = np.diff(values)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise DomainError("g must be strictly monotone (injective) on [0, 1]")


def gd_step(
    config: NeuronConfig,
    state: WeightState,
    eta: float,
    batch: np.ndarray | None = None,
) -> WeightState:
    """One descent step; population gradient if batch is None, else the
    full-batch sample gradient of the squared error on the given inputs.

    Raises DivergenceError if a hidden scalar is driven to or below zero
    (outside the sign-preserving regime every guarantee lives in).
    """
    if eta <= 0:
        raise DomainError("eta must be positive")
    if batch is None:
        grad_w, grad_hidden = population_gradient(config, state)
    else:
        batch = np.asarray(batch, dtype=float)
        if batch.ndim != 2 or batch.shape[1] != config.d:
            raise DomainError(f"batch must have shape (n, {config.d})")
        grad_w, grad_hidden = _sample_gradient(config, state, batch)
    new_w = state.w - eta * grad_w
    new_hidden = tuple(v - eta * g for v, g in zip(state.hidden, grad_hidden))
    if any(v <= 0.0 for v in new_hidden):
        raise DivergenceError("a hidden scalar was driven to or below zero")
    return WeightState(new_w, new_hidden)


def _sample_gradient(
    config: NeuronConfig, state: WeightState, batch: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    if any(v <= 0.0 for v in state.hidden):
        raise DomainError("hidden scalars must be positive")
    n = batch.shape[0]
    p = state.product
    p_star = config.target_product
    pre = batch @ state.w
    ind = pre > 0.0
    act = np.where(ind, pre, 0.0)
    e = p * act - p_star * np.maximum(batch @ config.target_w, 0.0)
    grad_w = (p / n) * (batch.T @ (e * ind))
    if config.m == 0:
        return grad_w, np.zeros(0)
    shared = float(e @ act) / n
    grad_hidden = np.array([(p / v) * shared for v in state.hidden])
    return grad_w, grad_hidden


def run_gd(config: NeuronConfig, init: WeightState, dc: DescentConfig) -> Trajectory:
    """Run descent for dc.steps steps, recording reduced coordinates and the
    exact population loss at step 0, every record_every-th step, and the end.

    Trajectory times are step indices. Empirical mode draws its dataset once
    from dc.seed (labels from the teacher) and never resamples.
    """
    population_gradient(config, init)  # validates shapes/positivity once
    batch = None
    if dc.mode == "empirical":
        rng = np.random.default_rng(np.random.SeedSequence(dc.seed))
        batch = rng.standard_normal((dc.n_samples, config.d))

    state = init
    times = [0.0]
    states = [polar_of(config, init)]
    losses = [population_loss(config, init)]
    wstates = [init]
    for k in range(dc.steps):
        state = gd_step(config, state, dc.eta, batch)
        norm = float(np.linalg.norm(state.w))
        if not math.isfinite(norm) or norm > _BLOWUP:
            raise DivergenceError(f"weight norm {norm} blew up at step {k + 1}")
        if (k + 1) % dc.record_every == 0 or k + 1 == dc.steps:
            times.append(float(k + 1))
            states.append(polar_of(config, state))
            losses.append(population_loss(config, state))
            wstates.append(state)
    return Trajectory(np.array(times), states, losses=np.array(losses),
                      weight_states=wstates)


def gf_to_gd(form: ExpFlowForm, eta: float, T: int) -> float:
    """Descent-side value of a flow solution: g((1 - c eta)^T).

    Valid to first order in eta over a fixed horizon c eta T. Raises above
    eta = 0.1/c where the substitution stops being meaningful; warns above
    0.01/c where the first-order error is no longer comfortably small.
    """
    if eta <= 0:
        raise DomainError("eta must be positive")
    if T < 0 or T != int(T):
        raise DomainError("T must be a non-negative integer")
    if eta * form.c > 0.1:
        raise DomainError(f"eta={eta} too large against the rate threshold {1.0 / form.c}")
    if eta > 0.01 / form.c:
        warnings.warn(
            f"eta={eta} above 1% of the rate threshold; first-order accuracy degrades",
            stacklevel=2,
        )
    base = 1.0 - form.c * eta
    if base <= 0.0:
        raise DomainError("step size makes the decay factor non-positive")
    return form.g(base ** int(T))


def gd_error_scaling(
    form: ExpFlowForm,
    flow_rhs: Callable[[float], float],
    etas: Sequence[float],
    horizon: float,
) -> list[tuple[float, float]]:
    """Measure the Euler-vs-substitution gap as a function of step size.

    For each eta, runs explicit Euler w += eta * flow_rhs(w) from w(0) = g(1)
    for round(horizon/eta) steps and records the worst deviation from the
    substituted solution g((1 - c eta)^k). The deviation scales linearly in
    eta when the form and the field describe the same flow.
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if not etas:
        raise DomainError("need at least one step size")
    out = []
    for eta in etas:
        if eta <= 0 or eta >= 0.1 / form.c:
            raise DomainError(f"eta={eta} outside (0, 0.1/c)")
        steps = max(1, round(horizon / eta))
        base = 1.0 - form.c * eta
        w = form.g(1.0)
        worst = 0.0
        for k in range(1, steps + 1):
            w = w + eta * flow_rhs(w)
            ref = form.g(base**k)
            worst = max(worst, abs(w - ref))
        out.append((float(eta), float(worst)))
    return out


def _cot_half(phi0: float) -> float:
    return 1.0 / math.tan(phi0 / 2.0)


def flow_forms_for(env: BoundEnvelope) -> dict[str, ExpFlowForm]:
    """Exponential-substitution pairs realizing an envelope's closed forms.

    Returns 'lower' and 'upper' forms; angle envelopes additionally return
    'upper_correction' (the cubic tail runs at three times the main rate, so
    the full upper band is upper + upper_correction, clipped at pi). The
    angle upper main form is injective only when phi0 >= pi/2; construction
    raises below that. No forms exist for m >= 2 magnitude bands (the bound
    there is implicit, not exponential-closed-form).
    """
    v_star = env.target_norm
    eps0 = env.eps0
    v0 = env.v0
    if env.kind == "magnitude":
        if env.m == 0:
            return {
                "lower": ExpFlowForm(
                    0.5, lambda x, s=(1.0 - eps0): s * (1.0 - x) * v_star + v0 * x
                ),
                "upper": ExpFlowForm(0.5, lambda x: (1.0 - x) * v_star + v0 * x),
            }
        if env.m == 1:
            a_low = v_star**2 * (1.0 - eps0)
            a_up = v_star**2
            if math.isclose(v0 * v0, a_low) or math.isclose(v0 * v0, a_up):
                raise DomainError("start sits on an attractor; the form degenerates")
            return {
                "lower": ExpFlowForm(
                    a_low,
                    lambda x, a=a_low: math.sqrt(a / (1.0 - (1.0 - a / (v0 * v0)) * x)),
                ),
                "upper": ExpFlowForm(
                    a_up,
                    lambda x, a=a_up: math.sqrt(a / (1.0 - (1.0 - a / (v0 * v0)) * x)),
                ),
            }
        raise UnavailableError("no exponential closed form for m >= 2 magnitude bands")

    cot = _cot_half(env.phi0)
    if env.m == 0:
        c_low = (v_star / (2.0 * env.R)) * (env.phi0 / math.pi)
        c_up = v_star / (2.0 * env.r)
    else:
        vpow = v_star ** (env.m + 1)
        c_low = (env.phi0 / (2.0 * math.pi)) * env.r ** (env.m - 1) * vpow
        c_up = 0.5 * env.R ** (env.m - 1) * vpow
    return {
        "lower": ExpFlowForm(c_low, lambda x: math.pi - 2.0 * cot * x),
        "upper": ExpFlowForm(c_up, lambda x: math.pi - 2.0 * cot * x),
        "upper_correction": ExpFlowForm(
            3.0 * c_up, lambda x: (2.0 / 3.0) * cot**3 * x
        ),
    }


def eta_threshold(env: BoundEnvelope) -> float:
    """Theorem-scale step-size constant for an envelope's descent band.

    Bands are proven under eta well below this; the package treats a tenth
    of it as the hard ceiling and a hundredth as the clean regime.
    """
    v_star = env.target_norm
    if env.kind == "magnitude":
        if env.m == 0:
            return 2.0
        if env.m == 1:
            return 1.0 / v_star**2
        raise UnavailableError("no descent-side magnitude band for m >= 2")
    if env.r is None or env.R is None:
        raise DomainError("angle thresholds need r and R")
    if env.m == 0:
        return min(
            2.0 * math.pi * env.R / (v_star * env.phi0),
            2.0 * env.r / (3.0 * v_star),
        )
    vpow = v_star ** (env.m + 1)
    return min(
        2.0 * math.pi / (env.phi0 * env.r ** (env.m - 1) * vpow),
        2.0 / (3.0 * env.R ** (env.m - 1) * vpow),
    )


def _warn_eta(env: BoundEnvelope, eta: float) -> None:
    thr = eta_threshold(env)
    if eta > 0.1 * thr:
        warnings.warn(
            f"eta={eta} exceeds 10% of the theorem threshold {thr}; "
            "the band is drawn but no longer guaranteed",
            stacklevel=3,
        )


def gd_bounds(env: BoundEnvelope, eta: float, T: int) -> tuple[float, float]:
    """Descent-side band at step T >= anchor: flow band with e^(-c tau)
    replaced by (1 - c eta)^(T - anchor), component by component.

    T counts descent steps; env.anchor_time holds the anchor step for
    re-anchored bands. Magnitude bands exist for m in {0, 1} only.
    """
    if eta <= 0:
        raise DomainError("eta must be positive")
    if T != int(T):
        raise DomainError("T must be an integer step count")
    steps = int(T) - int(env.anchor_time)
    if steps < 0:
        raise DomainError(f"T={T} precedes the envelope anchor {env.anchor_time}")
    _warn_eta(env, eta)
    v_star = env.target_norm
    v0 = env.v0

    if env.kind == "magnitude":
        if env.m == 0:
            x = (1.0 - 0.5 * eta) ** steps
            grow = (1.0 - x) * v_star
            return (1.0 - env.eps0) * grow + v0 * x, grow + v0 * x
        if env.m == 1:
            a_low = v_star**2 * (1.0 - env.eps0)
            a_up = v_star**2
            x_low = (1.0 - a_low * eta) ** steps
            x_up = (1.0 - a_up * eta) ** steps
            lower = math.sqrt(a_low / (1.0 - (1.0 - a_low / (v0 * v0)) * x_low))
            upper = math.sqrt(a_up / (1.0 - (1.0 - a_up / (v0 * v0)) * x_up))
            return lower, upper
        raise UnavailableError("no descent-side magnitude band for m >= 2")

    cot = _cot_half(env.phi0)
    if env.m == 0:
        c_low = (v_star / (2.0 * env.R)) * (env.phi0 / math.pi)
        c_up = v_star / (2.0 * env.r)
    else:
        vpow = v_star ** (env.m + 1)
        c_low = (env.phi0 / (2.0 * math.pi)) * env.r ** (env.m - 1) * vpow
        c_up = 0.5 * env.R ** (env.m - 1) * vpow
    x_low = (1.0 - c_low * eta) ** steps
    x_up = (1.0 - c_up * eta) ** steps
    x_cube = (1.0 - 3.0 * c_up * eta) ** steps
    lower = math.pi - 2.0 * cot * x_low
    upper = math.pi - 2.0 * cot * x_up + (2.0 / 3.0) * cot**3 * x_cube
    return lower, min(upper, math.pi)


def gd_envelope_curve(
    env: BoundEnvelope, eta: float
) -> Callable[[BoundEnvelope, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Adapter giving check_envelope a descent-side band at fixed eta."""

    def curve(e: BoundEnvelope, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        with warnings.catch_warnings():
            warnings.simplefilter("once")
            pairs = [gd_bounds(e, eta, int(t)) for t in times]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    return curve


def stopping_time(env: BoundEnvelope, eta: float, eps: float) -> int:
    """Steps guaranteed to drive the angle above pi - eps, from the angle
    lower band: least T with 2 cot(phi0/2) (1 - rate*eta)^T < eps.

    Returns 0 when the band already starts above pi - eps. eta must sit
    below a tenth of the angle threshold (hard), ideally below a hundredth
    (warned otherwise).
    """
    if env.kind != "angle":
        raise DomainError("stopping times come from angle envelopes")
    if eps <= 0:
        raise DomainError("eps must be positive")
    if eta <= 0:
        raise DomainError("eta must be positive")
    v_star = env.target_norm
    if env.m == 0:
        rate = (env.phi0 / (2.0 * math.pi)) * (v_star / env.R)
        thr = 2.0 * math.pi * env.R / (v_star * env.phi0)
    else:
        rate = (env.phi0 / (2.0 * math.pi)) * env.r ** (env.m - 1) * v_star ** (env.m + 1)
        thr = 2.0 * math.pi / (env.phi0 * env.r ** (env.m - 1) * v_star ** (env.m + 1))
    if eta >= 0.1 * thr:
        raise DomainError(f"eta={eta} too large against the rate threshold {thr}")
    if eta > 0.01 * thr:
        warnings.warn(f"eta={eta} above 1% of the rate threshold {thr}", stacklevel=2)
    x = 0.5 * eps * math.tan(env.phi0 / 2.0)
    if x >= 1.0:
        return 0
    q = 1.0 - rate * eta
    return int(math.floor(math.log(x) / math.log(q))) + 1
